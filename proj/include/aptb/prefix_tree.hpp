#pragma once

// Rooted prefix tree over trajectories. The root is virtual (level 0, no
// label); each node stores the count of trajectories carrying its prefix
// plus the privacy budget it was allocated. Children are kept ordered by
// (slot, cell) so traversal and output are deterministic.

#include <algorithm>
#include <charconv>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aptb/trajectory.hpp"

namespace aptb {

struct TreeNode {
    STPoint label{};   // unused at the root (depth 0)
    double count = 0;  // exact during construction, noisy thereafter
    double eps = 0;    // allocated budget; 0 until assigned
    int depth = 0;
    bool marked_leaf = false; // set when theta pruning stops expansion
    std::vector<TreeNode> children;

    TreeNode* find_child(const STPoint& l) {
        auto it = std::lower_bound(children.begin(), children.end(), l,
                                   [](const TreeNode& n, const STPoint& p) {
                                       return slot_cell_less(n.label, p);
                                   });
        if (it != children.end() && it->label == l) return &*it;
        return nullptr;
    }
    const TreeNode* find_child(const STPoint& l) const {
        return const_cast<TreeNode*>(this)->find_child(l);
    }

    TreeNode& add_child(const STPoint& l) {
        auto it = std::lower_bound(children.begin(), children.end(), l,
                                   [](const TreeNode& n, const STPoint& p) {
                                       return slot_cell_less(n.label, p);
                                   });
        it = children.insert(it, TreeNode{});
        it->label = l;
        it->depth = depth + 1;
        return *it;
    }
};

struct PrefixTree {
    TreeNode root;
    int height_limit = 0;
    Universe universe;
};

/// Exact tree: a node for every distinct prefix of length <= h in d, with
/// true counts. Trajectories longer than h contribute their length-h prefix.
inline PrefixTree build_real_tree(const Dataset& d, int h) {
    if (h < 1) throw std::invalid_argument("build_real_tree: h must be >= 1");
    PrefixTree t;
    t.height_limit = h;
    t.universe = d.universe;
    t.root.count = static_cast<double>(d.size());
    for (const auto& traj : d.trajectories) {
        TreeNode* n = &t.root;
        const std::size_t limit = std::min<std::size_t>(traj.points.size(), h);
        for (std::size_t i = 0; i < limit; ++i) {
            TreeNode* c = n->find_child(traj.points[i]);
            if (!c) c = &n->add_child(traj.points[i]);
            c->count += 1;
            n = c;
        }
    }
    return t;
}

/// Count at the node reached by following the prefix labels; 0 if absent.
inline double prefix_count(const PrefixTree& t, std::span<const STPoint> prefix) {
    const TreeNode* n = &t.root;
    for (const auto& p : prefix) {
        n = n->find_child(p);
        if (!n) return 0;
    }
    return n->count;
}

/// Candidate child labels of n: every universe label with a slot strictly
/// after n's (all labels for the root); empty at the height limit. Ordered
/// by (slot, cell).
inline std::vector<STPoint> son_set(const TreeNode& n, const PrefixTree& t) {
    std::vector<STPoint> labels;
    if (n.depth >= t.height_limit) return labels;
    const std::uint32_t first_slot = (n.depth == 0) ? 0 : n.label.slot + 1;
    const Universe& u = t.universe;
    if (first_slot >= u.time_slots) return labels;
    labels.reserve(static_cast<std::size_t>(u.time_slots - first_slot) * u.cell_count());
    for (std::uint32_t s = first_slot; s < u.time_slots; ++s)
        for (std::uint32_t c = 0; c < u.cell_count(); ++c)
            labels.push_back(STPoint{c, s});
    return labels;
}

/// Theoretical maximum expansion depth below n: 0 when sonSet is empty,
/// else 1 + the best child's expansion. Under the slot-monotone sonSet this
/// closes to min(T - 1 - slot, h - depth) (min(T, h) for the root).
inline int max_expand(const TreeNode& n, const PrefixTree& t) {
    const int room = t.height_limit - n.depth;
    if (room <= 0) return 0;
    const int slots_left = (n.depth == 0)
                               ? static_cast<int>(t.universe.time_slots)
                               : static_cast<int>(t.universe.time_slots) - 1 -
                                     static_cast<int>(n.label.slot);
    return std::max(0, std::min(slots_left, room));
}

namespace detail {

inline void format_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

inline void dump_node(std::ostream& os, const TreeNode& n, int indent) {
    for (int i = 0; i < indent; ++i) os << ' ';
    std::string line;
    if (n.depth == 0) {
        line = "root c=";
    } else {
        line = std::to_string(n.label.cell) + ":" + std::to_string(n.label.slot) + " c=";
    }
    format_double(line, n.count);
    line += " eps=";
    format_double(line, n.eps);
    os << line << '\n';
    for (const auto& c : n.children) dump_node(os, c, indent + 2);
}

} // namespace detail

/// Indented debug dump, one node per line; used by golden tests.
inline void dump_tree(std::ostream& os, const PrefixTree& t) {
    detail::dump_node(os, t.root, 0);
}

inline std::string dump_tree(const PrefixTree& t) {
    std::ostringstream os;
    dump_tree(os, t);
    return os.str();
}

/// Pre-order visit in canonical (slot, cell) child order.
template <typename F>
void for_each_node(const TreeNode& n, F&& f) {
    f(n);
    for (const auto& c : n.children) for_each_node(c, f);
}

template <typename F>
void for_each_node(TreeNode& n, F&& f) {
    f(n);
    for (auto& c : n.children) for_each_node(c, f);
}

} // namespace aptb
