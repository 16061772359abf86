#include "gc2po/vocab.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gc2po {

Vocabulary Vocabulary::arithmetic(int max_episodes, int max_step_markers) {
    std::vector<std::string> symbols;
    std::vector<int> answer_ids;
    for (int v = 0; v < 100; ++v) {
        answer_ids.push_back(static_cast<int>(symbols.size()));
        symbols.push_back(std::to_string(v));
    }
    symbols.push_back("+");
    symbols.push_back("-");
    symbols.push_back("*");
    symbols.push_back("=");
    symbols.push_back(";");
    symbols.push_back("start");
    for (int s = 1; s <= max_step_markers; ++s) symbols.push_back("#" + std::to_string(s));
    symbols.push_back("<ans>");
    symbols.push_back("<eos>");
    for (int l = 1; l <= max_episodes; ++l) {
        symbols.push_back("<e" + std::to_string(l) + ">");
        symbols.push_back("</e" + std::to_string(l) + ">");
    }
    return from_symbols(std::move(symbols), std::move(answer_ids));
}

Vocabulary Vocabulary::from_symbols(std::vector<std::string> symbols, std::vector<int> answer_ids) {
    Vocabulary v;
    v.symbols = std::move(symbols);
    v.answer_ids = std::move(answer_ids);
    v.build_index();
    return v;
}

void Vocabulary::build_index() {
    index_.clear();
    for (int i = 0; i < size(); ++i) {
        if (!index_.emplace(symbols[static_cast<size_t>(i)], i).second) {
            throw std::invalid_argument("duplicate vocabulary symbol: " + symbols[static_cast<size_t>(i)]);
        }
    }
    if (answer_ids.empty()) throw std::invalid_argument("answer vocabulary subset must be nonempty");
    is_answer_.assign(static_cast<size_t>(size()), false);
    for (int a : answer_ids) {
        if (a < 0 || a >= size()) throw std::invalid_argument("answer id out of vocabulary range");
        is_answer_[static_cast<size_t>(a)] = true;
    }

    auto find = [this](const std::string& s) {
        auto it = index_.find(s);
        return it == index_.end() ? -1 : it->second;
    };
    ans_tag_id = find("<ans>");
    eos_id = find("<eos>");
    start_id = find("start");
    sep_id = find(";");
    eq_id = find("=");

    open_tag_ids.clear();
    close_tag_ids.clear();
    open_episode_of_.assign(static_cast<size_t>(size()), 0);
    close_episode_of_.assign(static_cast<size_t>(size()), 0);
    for (int l = 1;; ++l) {
        const int open = find("<e" + std::to_string(l) + ">");
        const int close = find("</e" + std::to_string(l) + ">");
        if (open < 0 && close < 0) break;
        if (open < 0 || close < 0) throw std::invalid_argument("episode tag pair incomplete at index " + std::to_string(l));
        open_tag_ids.push_back(open);
        close_tag_ids.push_back(close);
        open_episode_of_[static_cast<size_t>(open)] = l;
        close_episode_of_[static_cast<size_t>(close)] = l;
    }
    max_episodes = static_cast<int>(open_tag_ids.size());
}

int Vocabulary::id(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) throw std::invalid_argument("unknown vocabulary symbol: \"" + symbol + "\"");
    return it->second;
}

const std::string& Vocabulary::symbol(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of vocabulary range");
    return symbols[static_cast<size_t>(id)];
}

int Vocabulary::number_id(int value) const { return id(std::to_string(value)); }

int Vocabulary::op_id(char op) const { return id(std::string(1, op)); }

int Vocabulary::step_marker_id(int step) const { return id("#" + std::to_string(step)); }

int Vocabulary::open_tag_episode(int id) const {
    if (id < 0 || id >= size()) return 0;
    return open_episode_of_[static_cast<size_t>(id)];
}

int Vocabulary::close_tag_episode(int id) const {
    if (id < 0 || id >= size()) return 0;
    return close_episode_of_[static_cast<size_t>(id)];
}

bool Vocabulary::is_tag(int id) const {
    return id == ans_tag_id || open_tag_episode(id) > 0 || close_tag_episode(id) > 0;
}

bool Vocabulary::is_answer_symbol(int id) const {
    if (id < 0 || id >= size()) return false;
    return is_answer_[static_cast<size_t>(id)];
}

std::string Vocabulary::render(const std::vector<int>& tokens) const {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += symbol(tokens[i]);
    }
    return out;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
    std::vector<int> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(id(tok));
    return out;
}

}  // namespace gc2po
