#include "pamm/hierarchy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pamm {

namespace {

constexpr const char* kRootToken = "ROOT";

bool reserved_name(const std::string& name) {
    if (name.find('_') != std::string::npos) return true;
    if (name.find('/') != std::string::npos) return true;
    if (name.find("EOS") != std::string::npos) return true;
    return false;
}

[[noreturn]] void fail(const std::string& msg, int line = 0) {
    if (line > 0) {
        throw std::runtime_error(msg + " (line " + std::to_string(line) + ")");
    }
    throw std::runtime_error(msg);
}

}  // namespace

LabelHierarchy LabelHierarchy::from_edges(
    const std::vector<std::pair<std::string, std::string>>& edges) {
    LabelHierarchy h;
    std::map<std::string, int> child_line;
    int line = 0;
    for (const auto& [parent, child] : edges) {
        ++line;
        if (child == kRootToken) fail("ROOT may appear only as a parent", line);
        if (reserved_name(child)) fail("reserved symbol in label name: " + child, line);
        if (parent != kRootToken && reserved_name(parent)) {
            fail("reserved symbol in label name: " + parent, line);
        }
        if (child_line.count(child)) {
            fail("duplicate child " + child + ", first defined on line " +
                     std::to_string(child_line[child]),
                 line);
        }
        child_line[child] = line;

        auto note = [&](const std::string& name) {
            if (name == kRootToken) return;
            if (!h.children_.count(name)) {
                h.children_[name] = {};
                h.labels_.push_back(name);
            }
        };
        note(parent);
        note(child);
        if (parent == kRootToken) {
            h.roots_.push_back(child);
        } else {
            h.parent_[child] = parent;
            h.children_[parent].push_back(child);
        }
    }

    // Labels never appearing as a child are roots too, in appearance order.
    for (const auto& l : h.labels_) {
        if (!h.parent_.count(l) &&
            std::find(h.roots_.begin(), h.roots_.end(), l) == h.roots_.end()) {
            h.roots_.push_back(l);
        }
    }

    // Depth assignment doubles as the cycle check: a parent chain longer than
    // the label count can only mean a cycle.
    for (const auto& l : h.labels_) {
        int d = 1;
        std::string cur = l;
        while (h.parent_.count(cur)) {
            cur = h.parent_.at(cur);
            ++d;
            if (d > static_cast<int>(h.labels_.size()) + 1) {
                fail("cycle detected involving label " + l, child_line.count(l) ? child_line[l] : 0);
            }
        }
        h.depth_[l] = d;
        h.max_depth_ = std::max(h.max_depth_, d);
    }
    return h;
}

bool LabelHierarchy::contains(const std::string& label) const {
    return depth_.count(label) > 0;
}

const std::string& LabelHierarchy::parent(const std::string& label) const {
    static const std::string kEmpty;
    auto it = parent_.find(label);
    if (it != parent_.end()) return it->second;
    if (!contains(label)) fail("unknown label: " + label);
    return kEmpty;
}

const std::vector<std::string>& LabelHierarchy::children(const std::string& label) const {
    auto it = children_.find(label);
    if (it == children_.end()) fail("unknown label: " + label);
    return it->second;
}

int LabelHierarchy::depth(const std::string& label) const {
    auto it = depth_.find(label);
    if (it == depth_.end()) fail("unknown label: " + label);
    return it->second;
}

std::vector<std::string> LabelHierarchy::ancestors(const std::string& label) const {
    if (!contains(label)) fail("unknown label: " + label);
    std::vector<std::string> up;
    std::string cur = label;
    while (true) {
        auto it = parent_.find(cur);
        if (it == parent_.end()) break;
        cur = it->second;
        up.push_back(cur);
    }
    std::reverse(up.begin(), up.end());
    return up;
}

bool LabelHierarchy::is_consistent(const LabelSet& s) const {
    for (const auto& l : s) {
        if (!contains(l)) fail("unknown label: " + l);
        auto it = parent_.find(l);
        if (it != parent_.end() && !s.count(it->second)) return false;
    }
    return true;
}

LabelHierarchy LabelHierarchy::induced_subtree(const LabelSet& s) const {
    for (const auto& l : s) {
        if (!contains(l)) fail("unknown label: " + l);
        auto it = parent_.find(l);
        if (it != parent_.end() && !s.count(it->second)) {
            fail("inconsistent label set: " + l + " is missing its parent " + it->second);
        }
    }
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& r : roots_) {
        if (s.count(r)) edges.emplace_back(kRootToken, r);
    }
    for (const auto& l : labels_) {
        if (!s.count(l)) continue;
        for (const auto& c : children_.at(l)) {
            if (s.count(c)) edges.emplace_back(l, c);
        }
    }
    return from_edges(edges);
}

LabelHierarchy parse_hierarchy(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> edges;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') {
            edges.emplace_back("", "");  // placeholder keeps line numbers aligned
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            fail("expected parent<TAB>child", line_no);
        }
        edges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    // Strip placeholders but keep original line numbering in error messages by
    // rebuilding the list the validator sees.
    std::vector<std::pair<std::string, std::string>> real;
    std::vector<int> lines;
    for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
        if (!edges[i].second.empty()) {
            real.push_back(edges[i]);
            lines.push_back(i + 1);
        }
    }
    try {
        return LabelHierarchy::from_edges(real);
    } catch (const std::runtime_error& e) {
        // from_edges reports positions in its own edge order; remap to file lines.
        std::string msg = e.what();
        auto pos = msg.rfind("(line ");
        if (pos != std::string::npos) {
            int idx = std::atoi(msg.c_str() + pos + 6);
            if (idx >= 1 && idx <= static_cast<int>(lines.size())) {
                msg = msg.substr(0, pos) + "(line " + std::to_string(lines[idx - 1]) + ")";
            }
        }
        throw std::runtime_error(msg);
    }
}

LabelHierarchy load_hierarchy(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open hierarchy file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_hierarchy(ss.str());
}

void save_hierarchy(const LabelHierarchy& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("cannot write hierarchy file: " + path);
    for (const auto& r : h.roots()) out << "ROOT\t" << r << "\n";
    for (const auto& l : h.labels()) {
        for (const auto& c : h.children(l)) out << l << "\t" << c << "\n";
    }
}

}  // namespace pamm
