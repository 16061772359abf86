#ifndef GC2PO_SEGMENTATION_HPP
#define GC2PO_SEGMENTATION_HPP

#include <optional>
#include <string>
#include <vector>

#include "gc2po/vocab.hpp"

namespace gc2po {

/// Content span of episode `index` (1-based), token positions inclusive and
/// excluding the tag symbols. Empty episodes (open tag immediately followed by
/// its close tag) are kept as zero-length spans with end == start - 1.
struct EpisodeSpan {
    int index = 0;
    int start = 0;
    int end = -1;

    bool empty() const { return end < start; }
    int length() const { return empty() ? 0 : end - start + 1; }
};

/// Region assignment for a single token position.
struct TokenRegion {
    enum class Kind { Episode, Answer, Unassigned };
    Kind kind = Kind::Unassigned;
    int episode = 0;  // valid when kind == Episode
};

/// Parse result over one generated sequence. Malformed input is data, not an
/// error: `valid` is false, `episodes` holds the longest well-formed prefix,
/// and `diagnostic` names the first violation.
struct SegmentedTrajectory {
    std::vector<int> tokens;
    std::vector<EpisodeSpan> episodes;
    std::optional<int> answer_start;  // first token after <ans>
    std::optional<int> answer_end;    // last answer token (excludes trailing <eos>)
    bool ends_with_eos = false;
    bool valid = false;
    std::string diagnostic;

    int episode_count() const { return static_cast<int>(episodes.size()); }
    bool has_answer() const { return answer_start.has_value(); }
    /// The parsed answer when the answer region is a single answer-space symbol.
    std::optional<int> single_answer_token(const Vocabulary& vocab) const;
};

/// Grammar: <e1> content* </e1> ... <eL> content* </eL> <ans> answer+ [<eos>]
/// with episode indices starting at 1 and increasing by one. Content and
/// answer tokens must not be tag symbols.
SegmentedTrajectory parse_episodes(const std::vector<int>& tokens, const Vocabulary& vocab);

/// Exact inverse of parse_episodes on well-formed input. Requires seg.valid.
std::vector<int> render(const SegmentedTrajectory& seg, const Vocabulary& vocab);

/// Total position -> region mapping. Tag tokens map to their enclosing
/// episode; <ans>, answer tokens and the trailing <eos> map to the answer
/// region; positions past the parsed prefix of a malformed sequence are
/// unassigned.
TokenRegion episode_of_token(const SegmentedTrajectory& seg, const Vocabulary& vocab, int t);

}  // namespace gc2po

#endif
