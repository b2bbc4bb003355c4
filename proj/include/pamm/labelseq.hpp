#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pamm/hierarchy.hpp"

namespace pamm {

namespace sym {
inline const std::string kIntra = "_";
inline const std::string kLevel = "/";
inline const std::string kEos = "EOS";
inline const std::string kPad = "PAD";
inline const std::string kBos = "BOS";
inline const std::string kUnk = "UNK";
}  // namespace sym

struct MLToken {
    std::string text;
    int level = 0;
    bool is_label = false;
};

// BFS-flattened multi-level label sequence: labels level by level, `_` between
// same-level labels, `/` between levels, one trailing EOS.
struct MultiLevelSequence {
    std::vector<MLToken> tokens;

    size_t size() const { return tokens.size(); }
    std::vector<std::string> strings() const;
};

MultiLevelSequence bfs_flatten(const LabelHierarchy& h, const LabelSet& s);

struct ParseDiagnostics {
    std::vector<std::string> unknown_tokens;
    std::vector<std::string> duplicate_labels;
    std::vector<std::string> level_mismatches;
    bool missing_eos = false;

    bool clean() const {
        return unknown_tokens.empty() && duplicate_labels.empty() &&
               level_mismatches.empty() && !missing_eos;
    }
};

// Inverse of flattening for arbitrary (possibly malformed) model output.
// Never throws; every anomaly lands in the diagnostics.
std::pair<LabelSet, ParseDiagnostics> parse_sequence(
    const LabelHierarchy& h, const std::vector<std::string>& tokens);

// Token ids: PAD/BOS/EOS/UNK and the two separators hold fixed low ids, then
// hierarchy labels in hierarchy order, then text words.
class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kBosId = 1;
    static constexpr int kEosId = 2;
    static constexpr int kUnkId = 3;
    static constexpr int kIntraId = 4;
    static constexpr int kLevelId = 5;

    Vocabulary() = default;
    Vocabulary(const LabelHierarchy& h, const std::vector<std::string>& text_words);

    // Rebuilds from a full id-ordered token list; validates the reserved ids.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int id(const std::string& token) const;  // kUnkId when absent
    bool has(const std::string& token) const;
    const std::string& token(int id) const;

    std::vector<int> encode_text(const std::vector<std::string>& words, int max_len) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    void add(const std::string& token);

    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

std::vector<std::string> split_whitespace_lower(const std::string& text);

}  // namespace pamm
