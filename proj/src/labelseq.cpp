#include "pamm/labelseq.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pamm {

std::vector<std::string> MultiLevelSequence::strings() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
}

MultiLevelSequence bfs_flatten(const LabelHierarchy& h, const LabelSet& s) {
    for (const auto& l : s) {
        if (!h.contains(l)) throw std::runtime_error("unknown label: " + l);
    }
    if (!h.is_consistent(s)) {
        throw std::runtime_error("inconsistent label set: a member's parent is missing");
    }

    MultiLevelSequence ml;
    std::vector<std::string> level;
    for (const auto& r : h.roots()) {
        if (s.count(r)) level.push_back(r);
    }
    int depth = 1;
    while (!level.empty()) {
        if (depth > 1) ml.tokens.push_back({sym::kLevel, depth - 1, false});
        for (size_t i = 0; i < level.size(); ++i) {
            if (i > 0) ml.tokens.push_back({sym::kIntra, depth, false});
            ml.tokens.push_back({level[i], depth, true});
        }
        std::vector<std::string> next;
        for (const auto& l : level) {
            for (const auto& c : h.children(l)) {
                if (s.count(c)) next.push_back(c);
            }
        }
        level = std::move(next);
        ++depth;
    }
    ml.tokens.push_back({sym::kEos, depth - 1, false});
    return ml;
}

std::pair<LabelSet, ParseDiagnostics> parse_sequence(
    const LabelHierarchy& h, const std::vector<std::string>& tokens) {
    LabelSet labels;
    ParseDiagnostics diag;
    int level = 1;
    bool saw_eos = false;
    for (const auto& t : tokens) {
        if (t == sym::kEos) {
            saw_eos = true;
            break;  // anything after EOS is ignored
        }
        if (t == sym::kLevel) {
            ++level;
            continue;
        }
        if (t == sym::kIntra) continue;
        if (!h.contains(t)) {
            diag.unknown_tokens.push_back(t);
            continue;
        }
        if (labels.count(t)) {
            diag.duplicate_labels.push_back(t);
            continue;
        }
        if (h.depth(t) != level) diag.level_mismatches.push_back(t);
        labels.insert(t);
    }
    diag.missing_eos = !saw_eos;
    return {labels, diag};
}

Vocabulary::Vocabulary(const LabelHierarchy& h, const std::vector<std::string>& text_words) {
    add(sym::kPad);
    add(sym::kBos);
    add(sym::kEos);
    add(sym::kUnk);
    add(sym::kIntra);
    add(sym::kLevel);
    for (const auto& l : h.labels()) add(l);
    for (const auto& w : text_words) {
        if (!token_to_id_.count(w)) add(w);
    }
}

void Vocabulary::add(const std::string& token) {
    if (token_to_id_.count(token)) {
        throw std::runtime_error("duplicate vocabulary token: " + token);
    }
    token_to_id_[token] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::has(const std::string& token) const {
    return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
    return id_to_token_[id];
}

std::vector<int> Vocabulary::encode_text(const std::vector<std::string>& words,
                                         int max_len) const {
    std::vector<int> ids;
    ids.reserve(std::min<size_t>(words.size(), max_len));
    for (const auto& w : words) {
        if (static_cast<int>(ids.size()) >= max_len) break;
        ids.push_back(id(w));
    }
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (int i = 0; i < size(); ++i) out << i << "\t" << id_to_token_[i] << "\n";
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens) v.add(t);
    if (v.size() <= kLevelId || v.id_to_token_[kPadId] != sym::kPad ||
        v.id_to_token_[kBosId] != sym::kBos || v.id_to_token_[kEosId] != sym::kEos ||
        v.id_to_token_[kUnkId] != sym::kUnk || v.id_to_token_[kIntraId] != sym::kIntra ||
        v.id_to_token_[kLevelId] != sym::kLevel) {
        throw std::runtime_error("vocabulary is missing the reserved tokens");
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("vocabulary line " + std::to_string(line_no) +
                                     ": expected id<TAB>token");
        }
        int id = std::atoi(line.substr(0, tab).c_str());
        if (id != static_cast<int>(tokens.size())) {
            throw std::runtime_error("vocabulary ids must be dense and ordered (line " +
                                     std::to_string(line_no) + ")");
        }
        tokens.push_back(line.substr(tab + 1));
    }
    return from_tokens(tokens);
}

std::vector<std::string> split_whitespace_lower(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

}  // namespace pamm
