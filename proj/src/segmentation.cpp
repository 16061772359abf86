#include "gc2po/segmentation.hpp"

#include <stdexcept>

namespace gc2po {

std::optional<int> SegmentedTrajectory::single_answer_token(const Vocabulary& vocab) const {
    if (!answer_start || !answer_end || *answer_start != *answer_end) return std::nullopt;
    const int tok = tokens[static_cast<size_t>(*answer_start)];
    if (!vocab.is_answer_symbol(tok)) return std::nullopt;
    return tok;
}

SegmentedTrajectory parse_episodes(const std::vector<int>& tokens, const Vocabulary& vocab) {
    SegmentedTrajectory seg;
    seg.tokens = tokens;

    const int n = static_cast<int>(tokens.size());
    int pos = 0;
    int next_index = 1;

    auto fail = [&seg](std::string why) {
        seg.valid = false;
        seg.diagnostic = std::move(why);
        return seg;
    };

    // Episode list
    while (pos < n) {
        const int tok = tokens[static_cast<size_t>(pos)];
        if (tok == vocab.ans_tag_id) break;
        const int open_l = vocab.open_tag_episode(tok);
        if (open_l == 0) {
            if (vocab.close_tag_episode(tok) > 0) {
                return fail("close tag </e" + std::to_string(vocab.close_tag_episode(tok)) + "> without open");
            }
            if (tok == vocab.eos_id) {
                return fail(next_index == 1 ? "empty sequence body" : "sequence ends before answer tag");
            }
            return fail("content outside episodes at position " + std::to_string(pos));
        }
        if (open_l != next_index) {
            return fail("episode index gap: expected <e" + std::to_string(next_index) + ">, found <e" +
                        std::to_string(open_l) + ">");
        }
        ++pos;  // consume open tag
        EpisodeSpan span;
        span.index = open_l;
        span.start = pos;
        span.end = pos - 1;
        bool closed = false;
        while (pos < n) {
            const int ct = tokens[static_cast<size_t>(pos)];
            if (vocab.close_tag_episode(ct) == open_l) {
                closed = true;
                ++pos;
                break;
            }
            if (vocab.is_tag(ct)) {
                if (vocab.open_tag_episode(ct) > 0) {
                    return fail("nested tag <e" + std::to_string(vocab.open_tag_episode(ct)) + "> inside episode " +
                                std::to_string(open_l));
                }
                if (ct == vocab.ans_tag_id) {
                    return fail("unclosed episode " + std::to_string(open_l));
                }
                return fail("mismatched close tag </e" + std::to_string(vocab.close_tag_episode(ct)) +
                            "> inside episode " + std::to_string(open_l));
            }
            if (ct == vocab.eos_id) return fail("unclosed episode " + std::to_string(open_l));
            span.end = pos;
            ++pos;
        }
        if (!closed) return fail("unclosed episode " + std::to_string(open_l));
        seg.episodes.push_back(span);
        ++next_index;
    }

    if (pos >= n) {
        return fail(seg.episodes.empty() ? "empty sequence body" : "missing answer tag");
    }
    if (seg.episodes.empty()) return fail("answer tag before any episode");

    ++pos;  // consume <ans>
    const int answer_begin = pos;
    while (pos < n) {
        const int tok = tokens[static_cast<size_t>(pos)];
        if (tok == vocab.eos_id) break;
        if (vocab.is_tag(tok)) return fail("tag inside answer region at position " + std::to_string(pos));
        ++pos;
    }
    if (pos == answer_begin) return fail("missing answer tokens");
    seg.answer_start = answer_begin;
    seg.answer_end = pos - 1;

    if (pos < n) {
        // loop above only stops at <eos> or the end
        seg.ends_with_eos = true;
        ++pos;
        if (pos < n) return fail("tokens after end-of-sequence at position " + std::to_string(pos));
    }

    seg.valid = true;
    return seg;
}

std::vector<int> render(const SegmentedTrajectory& seg, const Vocabulary& vocab) {
    if (!seg.valid) throw std::invalid_argument("render requires a structurally valid segmented trajectory");
    std::vector<int> out;
    for (const EpisodeSpan& e : seg.episodes) {
        out.push_back(vocab.open_tag_ids[static_cast<size_t>(e.index - 1)]);
        for (int t = e.start; t <= e.end; ++t) out.push_back(seg.tokens[static_cast<size_t>(t)]);
        out.push_back(vocab.close_tag_ids[static_cast<size_t>(e.index - 1)]);
    }
    out.push_back(vocab.ans_tag_id);
    for (int t = *seg.answer_start; t <= *seg.answer_end; ++t) out.push_back(seg.tokens[static_cast<size_t>(t)]);
    if (seg.ends_with_eos) out.push_back(vocab.eos_id);
    return out;
}

TokenRegion episode_of_token(const SegmentedTrajectory& seg, const Vocabulary& vocab, int t) {
    if (t < 0 || t >= static_cast<int>(seg.tokens.size())) {
        throw std::out_of_range("token position " + std::to_string(t) + " outside sequence of length " +
                                std::to_string(seg.tokens.size()));
    }
    (void)vocab;
    // Episode l covers [open tag, close tag] = [start-1, end+1].
    for (const EpisodeSpan& e : seg.episodes) {
        if (t >= e.start - 1 && t <= e.end + 1) return {TokenRegion::Kind::Episode, e.index};
    }
    if (seg.answer_start) {
        // answer region covers <ans> through the trailing <eos> when present
        const int region_start = *seg.answer_start - 1;
        const int region_end = *seg.answer_end + (seg.ends_with_eos ? 1 : 0);
        if (t >= region_start && t <= region_end) return {TokenRegion::Kind::Answer, 0};
    }
    return {TokenRegion::Kind::Unassigned, 0};
}

}  // namespace gc2po
