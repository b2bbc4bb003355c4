#include "pamm/path_mask.hpp"

#include <map>
#include <stdexcept>

namespace pamm {

PathAdaptiveMask build_mask(const LabelHierarchy& h, const MultiLevelSequence& ml) {
    const int n = static_cast<int>(ml.size());
    PathAdaptiveMask mask;
    mask.n = n;
    mask.m.assign(static_cast<size_t>(n) * n, 0);
    mask.path_index_sets.resize(n);

    // First occurrence position of each label in the sequence.
    std::map<std::string, int> label_pos;
    for (int i = 0; i < n; ++i) {
        const auto& t = ml.tokens[i];
        if (t.is_label) {
            if (!h.contains(t.text)) {
                throw std::runtime_error("sequence token not in hierarchy: " + t.text);
            }
            if (!label_pos.count(t.text)) label_pos[t.text] = i;
        }
    }

    // Ancestor columns of the label at position i: each ancestor occurrence
    // plus the separator immediately following it.
    auto ancestor_cols = [&](int i) {
        std::vector<int> cols;
        for (const auto& a : h.ancestors(ml.tokens[i].text)) {
            auto it = label_pos.find(a);
            if (it == label_pos.end() || it->second >= i) {
                throw std::runtime_error("sequence is not a valid flattening: ancestor " + a +
                                         " does not precede " + ml.tokens[i].text);
            }
            cols.push_back(it->second);
            if (it->second + 1 < i) cols.push_back(it->second + 1);
        }
        return cols;
    };

    for (int i = 0; i < n; ++i) {
        auto set_one = [&](int j) { mask.m[static_cast<size_t>(i) * n + j] = 1; };
        set_one(i);  // diagonal: every timestep uses the current element
        if (ml.tokens[i].is_label) {
            for (int j : ancestor_cols(i)) set_one(j);
        } else if (i > 0) {
            set_one(i - 1);
            if (ml.tokens[i - 1].is_label) {
                for (int j : ancestor_cols(i - 1)) set_one(j);
            }
        }
        for (int j = 0; j <= i; ++j) {
            if (mask.at(i, j)) mask.path_index_sets[i].push_back(j);
        }
    }
    return mask;
}

std::vector<double> off_path_mass(const Mat& score, const PathAdaptiveMask& mask) {
    if (score.rows != mask.n || score.cols != mask.n) {
        throw std::invalid_argument("off_path_mass: score/mask shape mismatch");
    }
    std::vector<double> out(mask.n);
    for (int i = 0; i < mask.n; ++i) {
        double on_path = 0.0;
        for (int j : mask.path_index_sets[i]) on_path += score.at(i, j);
        out[i] = 1.0 - on_path;
    }
    return out;
}

}  // namespace pamm
