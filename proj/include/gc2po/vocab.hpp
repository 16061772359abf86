#ifndef GC2PO_VOCAB_HPP
#define GC2PO_VOCAB_HPP

#include <string>
#include <unordered_map>
#include <vector>

namespace gc2po {

/// Token alphabet shared by the policy and the task environment. Episode tags
/// are atomic symbols; the answer subset is the enumerable answer space.
struct Vocabulary {
    std::vector<std::string> symbols;
    std::vector<int> answer_ids;

    int ans_tag_id = -1;
    int eos_id = -1;
    int start_id = -1;
    int sep_id = -1;     // ";"
    int eq_id = -1;      // "="
    int max_episodes = 0;
    std::vector<int> open_tag_ids;   // open_tag_ids[l-1] = id of <e_l>
    std::vector<int> close_tag_ids;  // close_tag_ids[l-1] = id of </e_l>

    /// The concrete alphabet for arithmetic-chain tasks: numbers 0..99 (the
    /// answer space), operators, separators, step-index markers, episode tags.
    static Vocabulary arithmetic(int max_episodes = 8, int max_step_markers = 6);

    /// Rebuild structural metadata from a bare symbol list (checkpoint load).
    static Vocabulary from_symbols(std::vector<std::string> symbols, std::vector<int> answer_ids);

    int size() const { return static_cast<int>(symbols.size()); }
    int id(const std::string& symbol) const;
    const std::string& symbol(int id) const;
    bool contains(const std::string& symbol) const { return index_.count(symbol) > 0; }

    int number_id(int value) const;      // value in [0, 99]
    int op_id(char op) const;            // '+', '-', '*'
    int step_marker_id(int step) const;  // 1-based

    /// Episode index if `id` is an open/close tag, 0 otherwise.
    int open_tag_episode(int id) const;
    int close_tag_episode(int id) const;
    bool is_tag(int id) const;
    bool is_answer_symbol(int id) const;

    std::string render(const std::vector<int>& tokens) const;
    std::vector<int> tokenize(const std::string& text) const;

  private:
    std::unordered_map<std::string, int> index_;
    std::vector<int> open_episode_of_;   // per id, 0 if not an open tag
    std::vector<int> close_episode_of_;  // per id, 0 if not a close tag
    std::vector<bool> is_answer_;
    void build_index();
};

}  // namespace gc2po

#endif
