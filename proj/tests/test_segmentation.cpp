#include <stdexcept>

#include <doctest.h>

#include "gc2po/rng.hpp"
#include "gc2po/segmentation.hpp"

using namespace gc2po;

namespace {

const Vocabulary& vocab() {
    static const Vocabulary v = Vocabulary::arithmetic();
    return v;
}

std::vector<int> toks(const std::string& text) { return vocab().tokenize(text); }

/// Random well-formed sequence for the round-trip oracle.
std::vector<int> random_well_formed(Rng& rng) {
    const Vocabulary& v = vocab();
    std::vector<int> content_pool;
    for (int id = 0; id < v.size(); ++id) {
        if (!v.is_tag(id) && id != v.eos_id) content_pool.push_back(id);
    }
    std::vector<int> out;
    const int episodes = 1 + rng.below(5);
    for (int l = 1; l <= episodes; ++l) {
        out.push_back(v.open_tag_ids[static_cast<size_t>(l - 1)]);
        const int len = rng.below(5);
        for (int i = 0; i < len; ++i) out.push_back(content_pool[static_cast<size_t>(rng.below(static_cast<int>(content_pool.size())))]);
        out.push_back(v.close_tag_ids[static_cast<size_t>(l - 1)]);
    }
    out.push_back(v.ans_tag_id);
    const int alen = 1 + rng.below(3);
    for (int i = 0; i < alen; ++i) out.push_back(content_pool[static_cast<size_t>(rng.below(static_cast<int>(content_pool.size())))]);
    if (rng.bernoulli(0.5)) out.push_back(v.eos_id);
    return out;
}

}  // namespace

TEST_CASE("direct parse of a two-episode sequence") {
    const auto seg = parse_episodes(toks("<e1> 5 + 3 </e1> <e2> 8 </e2> <ans> 42"), vocab());
    REQUIRE(seg.valid);
    REQUIRE(seg.episodes.size() == 2);
    CHECK(seg.episodes[0].index == 1);
    CHECK(seg.episodes[0].start == 1);
    CHECK(seg.episodes[0].end == 3);
    CHECK(seg.episodes[1].length() == 1);
    CHECK(seg.single_answer_token(vocab()) == vocab().number_id(42));
    CHECK(!seg.ends_with_eos);
}

TEST_CASE("unclosed episode is malformed with zero complete episodes") {
    const auto seg = parse_episodes(toks("<e1> 7 <ans> 7"), vocab());
    CHECK(!seg.valid);
    CHECK(seg.episodes.empty());
    CHECK(seg.diagnostic == "unclosed episode 1");
}

TEST_CASE("diagnostics name the first violation") {
    CHECK(parse_episodes(toks("<e1> 1 </e1> <e3> 2 </e3> <ans> 3"), vocab()).diagnostic ==
          "episode index gap: expected <e2>, found <e3>");
    CHECK(parse_episodes(toks("<e1> <e2> 1 </e2> </e1> <ans> 3"), vocab()).diagnostic ==
          "nested tag <e2> inside episode 1");
    CHECK(parse_episodes(toks("5 <e1> 1 </e1> <ans> 3"), vocab()).diagnostic == "content outside episodes at position 0");
    CHECK(parse_episodes(toks("<e1> 1 </e1> <ans>"), vocab()).diagnostic == "missing answer tokens");
    CHECK(parse_episodes(toks("<e1> 1 </e1>"), vocab()).diagnostic == "missing answer tag");
    CHECK(parse_episodes(toks("<ans> 3"), vocab()).diagnostic == "answer tag before any episode");
    CHECK(parse_episodes(toks("<e1> 1 </e1> <ans> 3 <eos> 4"), vocab()).diagnostic ==
          "tokens after end-of-sequence at position 6");
    CHECK(!parse_episodes(toks("</e1> <ans> 3"), vocab()).valid);
}

TEST_CASE("malformed input keeps the longest well-formed prefix") {
    const auto seg = parse_episodes(toks("<e1> 1 2 </e1> <e2> 3 </e2> 9 <e3> </e3> <ans> 5"), vocab());
    CHECK(!seg.valid);
    REQUIRE(seg.episodes.size() == 2);
    CHECK(seg.episodes[1].index == 2);
    CHECK(!seg.has_answer());
}

TEST_CASE("empty-content episode renders as adjacent tags and survives the round trip") {
    const auto tokens = toks("<e1> </e1> <ans> 7 <eos>");
    const auto seg = parse_episodes(tokens, vocab());
    REQUIRE(seg.valid);
    CHECK(seg.episodes[0].empty());
    CHECK(seg.episodes[0].length() == 0);
    CHECK(render(seg, vocab()) == tokens);
}

TEST_CASE("round trip: render(parse(s)) == s over 1000 random well-formed strings") {
    Rng rng(77);
    for (int rep = 0; rep < 1000; ++rep) {
        const auto s = random_well_formed(rng);
        const auto seg = parse_episodes(s, vocab());
        REQUIRE(seg.valid);
        CHECK(render(seg, vocab()) == s);
        // parse(render(seg)) reproduces the structure
        const auto seg2 = parse_episodes(render(seg, vocab()), vocab());
        CHECK(seg2.episodes.size() == seg.episodes.size());
        CHECK(seg2.valid);
        CHECK(static_cast<int>(seg2.episodes.size()) == seg.episode_count());
    }
}

TEST_CASE("render rejects invalid segmentations") {
    const auto seg = parse_episodes(toks("<e1> 7 <ans> 7"), vocab());
    CHECK_THROWS_AS(render(seg, vocab()), std::invalid_argument);
}

TEST_CASE("episode_of_token: total, monotone, and a partition on valid input") {
    const auto tokens = toks("<e1> 5 + 3 </e1> <e2> </e2> <ans> 42 <eos>");
    const auto seg = parse_episodes(tokens, vocab());
    REQUIRE(seg.valid);

    CHECK(episode_of_token(seg, vocab(), 2).kind == TokenRegion::Kind::Episode);
    CHECK(episode_of_token(seg, vocab(), 2).episode == 1);
    CHECK(episode_of_token(seg, vocab(), 0).episode == 1);   // open tag
    CHECK(episode_of_token(seg, vocab(), 4).episode == 1);   // close tag
    CHECK(episode_of_token(seg, vocab(), 6).episode == 2);   // empty episode close tag
    CHECK(episode_of_token(seg, vocab(), 7).kind == TokenRegion::Kind::Answer);  // <ans>
    CHECK(episode_of_token(seg, vocab(), 8).kind == TokenRegion::Kind::Answer);  // answer token
    CHECK(episode_of_token(seg, vocab(), 9).kind == TokenRegion::Kind::Answer);  // trailing <eos>

    int last_rank = 0;
    for (int t = 0; t < static_cast<int>(tokens.size()); ++t) {
        const TokenRegion r = episode_of_token(seg, vocab(), t);
        CHECK(r.kind != TokenRegion::Kind::Unassigned);  // partition: nothing unassigned
        const int rank = r.kind == TokenRegion::Kind::Answer ? 1000 : r.episode;
        CHECK(rank >= last_rank);  // monotone non-decreasing
        last_rank = rank;
    }

    CHECK_THROWS_AS(episode_of_token(seg, vocab(), -1), std::out_of_range);
    CHECK_THROWS_AS(episode_of_token(seg, vocab(), static_cast<int>(tokens.size())), std::out_of_range);
}

TEST_CASE("positions after a malformed prefix are unassigned") {
    const auto seg = parse_episodes(toks("<e1> 1 </e1> 9 9 <ans> 5"), vocab());
    CHECK(!seg.valid);
    CHECK(episode_of_token(seg, vocab(), 1).episode == 1);
    CHECK(episode_of_token(seg, vocab(), 3).kind == TokenRegion::Kind::Unassigned);
    CHECK(episode_of_token(seg, vocab(), 5).kind == TokenRegion::Kind::Unassigned);
}
