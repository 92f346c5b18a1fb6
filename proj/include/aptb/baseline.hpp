#pragma once

// Uniform-budget strawman: eps/h per level, one Laplace draw per node, no
// aggregation or reconstruction. Shares the candidate materialization and
// threshold rule with APTB so comparisons isolate budget allocation plus
// aggregation.

#include <algorithm>
#include <cmath>
#include <vector>

#include "aptb/aptb.hpp"

namespace aptb {

/// Uses cfg.total_eps and cfg.h_user directly (no preprocessing split; the
/// height is the publisher's). Path sums come to exactly eps at full depth.
inline BuildResult build_baseline_tree(const Dataset& d, const AptbConfig& cfg) {
    cfg.validate();
    RandomStream rng(cfg.seed);

    const int h = cfg.h_user;
    const double eps_level = cfg.total_eps / static_cast<double>(h);
    const double scale = 1.0 / eps_level;

    BuildResult res;
    res.height = h;
    res.pre = PreSplit{0, 0, cfg.total_eps};

    PrefixTree tree;
    tree.height_limit = h;
    tree.universe = d.universe;

    std::vector<detail::LevelEntry> frontier;
    {
        detail::LevelEntry root_entry;
        root_entry.node = &tree.root;
        root_entry.child_remaining = cfg.total_eps;
        root_entry.matching.resize(d.size());
        for (std::uint32_t i = 0; i < d.size(); ++i) root_entry.matching[i] = i;
        frontier.push_back(std::move(root_entry));
    }

    for (int level = 1; level <= h; ++level) {
        std::vector<detail::LevelEntry> current;
        for (auto& parent : frontier) {
            if (parent.node->marked_leaf) continue;
            detail::materialize_children(d, tree, parent, cfg.sonset_observed, current);
        }
        if (current.empty()) break;

        for (auto& e : current) {
            e.node->eps = eps_level;
            e.node->count += cfg.zero_noise ? 0.0 : laplace(scale, rng);
            res.ledger.charge(e.scope, Epsilon(eps_level), Purpose::count);
        }

        const std::size_t k = current.size(); // whole level shares one budget
        const double theta = compute_theta(k, eps_level, cfg);
        if (cfg.record_stats) {
            ClusterRecord rec;
            rec.level = level;
            rec.class_size = k;
            rec.k = k;
            rec.eps_node = eps_level;
            rec.eps_count = eps_level;
            rec.theta = theta;
            rec.theta_overridden = cfg.theta_override.has_value();
            res.clusters.push_back(std::move(rec));
        }
        for (auto& e : current)
            if (e.node->count < theta) e.node->marked_leaf = true;

        if (level == 1) {
            double root_count = 0;
            for (const auto& c : tree.root.children) root_count += std::max(c.count, 0.0);
            tree.root.count = root_count; // derived, not separately charged
        }

        frontier = std::move(current);
    }

    if (tree.root.children.empty()) tree.root.count = 0;
    res.tree = std::move(tree);
    return res;
}

} // namespace aptb
