#pragma once

// Consistency post-processing: top-down clamp of negative counts,
// proportional rescale of sibling groups that exceed their parent, and a
// constrained largest-remainder integerization, so that every node ends up
// with child <= parent, parent >= sum of children, and integer counts >= 0.
// Zero-count nodes are dropped afterwards. The output feeds the trajectory
// generator that emits the published dataset.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "aptb/prefix_tree.hpp"
#include "aptb/trajectory.hpp"

namespace aptb {

/// A PrefixTree whose counts satisfy the consistency definition; produced
/// by enforce_consistency, consumed by terminal_counts / generate_dataset.
using ConsistentTree = PrefixTree;

namespace detail {

inline void clamp_and_rescale(TreeNode& n) {
    double child_sum = 0;
    for (auto& c : n.children) {
        c.count = std::max(c.count, 0.0);
        child_sum += c.count;
    }
    if (child_sum > n.count) {
        const double factor = n.count / child_sum;
        for (auto& c : n.children) c.count *= factor;
    }
    for (auto& c : n.children) clamp_and_rescale(c);
}

// Largest-remainder rounding of n's children, constrained so the sibling
// integer sum stays within the (already integer) parent count. Remainder
// ties resolve in (slot, cell) order.
inline void integerize(TreeNode& n) {
    if (n.children.empty()) return;
    const auto parent_cap = static_cast<long long>(n.count);

    double sum = 0;
    for (const auto& c : n.children) sum += c.count;
    const long long target = std::min(parent_cap, std::llround(sum));

    std::vector<long long> floors(n.children.size());
    std::vector<double> remainders(n.children.size());
    long long floor_sum = 0;
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        floors[i] = static_cast<long long>(std::floor(n.children[i].count));
        remainders[i] = n.children[i].count - static_cast<double>(floors[i]);
        floor_sum += floors[i];
    }

    long long extras = target - floor_sum;
    std::vector<std::size_t> order(n.children.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainders[a] > remainders[b];
    });
    for (std::size_t i = 0; i < order.size(); ++i) {
        const long long v = floors[order[i]] + (static_cast<long long>(i) < extras ? 1 : 0);
        n.children[order[i]].count = static_cast<double>(v);
    }
    for (auto& c : n.children) integerize(c);
}

inline void drop_zero_children(TreeNode& n) {
    std::erase_if(n.children, [](const TreeNode& c) { return c.count == 0.0; });
    for (auto& c : n.children) drop_zero_children(c);
}

} // namespace detail

/// Idempotent; does not mutate the input tree.
inline ConsistentTree enforce_consistency(const PrefixTree& in) {
    ConsistentTree t = in;
    t.root.count = std::max(t.root.count, 0.0);
    detail::clamp_and_rescale(t.root);
    t.root.count = static_cast<double>(std::llround(t.root.count));
    detail::integerize(t.root);
    detail::drop_zero_children(t.root);
    return t;
}

/// Checks the three consistency clauses at every node.
inline bool is_consistent(const PrefixTree& t) {
    bool ok = true;
    for_each_node(t.root, [&](const TreeNode& n) {
        if (!(n.count >= 0) || n.count != std::floor(n.count)) ok = false;
        double child_sum = 0;
        for (const auto& c : n.children) {
            if (c.count > n.count) ok = false;
            child_sum += c.count;
        }
        if (child_sum > n.count) ok = false;
    });
    return ok;
}

/// terminal(N) = count(N) - sum of child counts: how many published
/// trajectories end at N. Requires a consistent tree.
inline std::unordered_map<const TreeNode*, double> terminal_counts(const ConsistentTree& t) {
    std::unordered_map<const TreeNode*, double> out;
    for_each_node(t.root, [&](const TreeNode& n) {
        double child_sum = 0;
        for (const auto& c : n.children) child_sum += c.count;
        const double terminal = n.count - child_sum;
        if (terminal < 0)
            throw std::logic_error("terminal_counts: tree is not consistent");
        out.emplace(&n, terminal);
    });
    return out;
}

namespace detail {

inline void emit_node(const TreeNode& n, std::vector<STPoint>& path, Dataset& out) {
    double child_sum = 0;
    for (const auto& c : n.children) child_sum += c.count;
    if (n.depth > 0) {
        const auto copies = static_cast<long long>(n.count - child_sum);
        for (long long i = 0; i < copies; ++i)
            out.trajectories.push_back(Trajectory{path});
    }
    for (const auto& c : n.children) {
        path.push_back(c.label);
        emit_node(c, path, out);
        path.pop_back();
    }
}

} // namespace detail

/// Emits terminal(N) copies of the root-to-N label sequence for every
/// non-root node, in depth-first (slot, cell) order. The virtual root's own
/// terminal is not emitted; the output size is the sum of level-1 counts.
inline Dataset generate_dataset(const ConsistentTree& t) {
    Dataset out;
    out.universe = t.universe;
    std::vector<STPoint> path;
    detail::emit_node(t.root, path, out);
    return out;
}

} // namespace aptb
