#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace pamm {

using LabelSet = std::set<std::string>;

// Rooted label forest. Immutable after load; sibling order is the order in
// which child edges appeared in the source, and that order is what makes the
// BFS flattening deterministic.
class LabelHierarchy {
public:
    static LabelHierarchy from_edges(
        const std::vector<std::pair<std::string, std::string>>& edges);

    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<std::string>& roots() const { return roots_; }

    bool contains(const std::string& label) const;
    // "" for roots.
    const std::string& parent(const std::string& label) const;
    const std::vector<std::string>& children(const std::string& label) const;
    // 1-based; roots are at depth 1.
    int depth(const std::string& label) const;
    int max_depth() const { return max_depth_; }
    size_t label_count() const { return labels_.size(); }

    // Proper ancestors from the root downward, excluding the label itself.
    std::vector<std::string> ancestors(const std::string& label) const;

    // True iff every member's ancestors are also members.
    bool is_consistent(const LabelSet& s) const;

    // Restriction of the hierarchy to a consistent subset, preserving depths
    // and sibling order. Throws naming the first orphan label otherwise.
    LabelHierarchy induced_subtree(const LabelSet& s) const;

private:
    LabelHierarchy() = default;

    std::vector<std::string> labels_;  // first-appearance order
    std::vector<std::string> roots_;
    std::map<std::string, std::string> parent_;
    std::map<std::string, std::vector<std::string>> children_;
    std::map<std::string, int> depth_;
    int max_depth_ = 0;
};

// Parses the `parent<TAB>child` edge list format. `#` lines are comments and
// blank lines are skipped; the virtual ROOT token may appear only as a parent.
LabelHierarchy load_hierarchy(const std::string& path);
LabelHierarchy parse_hierarchy(const std::string& text);

void save_hierarchy(const LabelHierarchy& h, const std::string& path);

}  // namespace pamm
