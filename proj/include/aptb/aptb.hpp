#pragma once

// The APTB mechanism. Pipeline per build:
//   1. split the budget into a preprocessing share (noisy max length +
//      noisy length histogram) and the tree share;
//   2. take the publisher's height cap as the tree height and derive the
//      root count from the noisy length histogram;
//   3. expand level by level: materialize every candidate child (unobserved
//      prefixes get a true count of 0, so absence is protected like
//      presence), allocate per-node budgets by remaining expansion depth,
//      group equal allocations into budget classes, cluster each class on
//      preliminary noisy counts, merge similar neighbors inside a cluster
//      via the exponential mechanism, add one Laplace draw per coarse node
//      and publish the member average;
//   4. mark nodes under the class threshold as leaves.
// Every epsilon consumed is appended to the budget ledger as it is spent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "aptb/dp.hpp"
#include "aptb/ledger.hpp"
#include "aptb/prefix_tree.hpp"
#include "aptb/random.hpp"
#include "aptb/trajectory.hpp"

namespace aptb {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AptbConfig {
    double total_eps = 1.0;
    int h_user = 1;               // publisher's height cap
    double pre_fraction = 0.1;    // share of eps spent on preprocessing
    std::optional<double> delta;  // outlier distance; nullopt = auto
    double theta_floor = 1.0;
    std::optional<double> theta_override;
    double split_rank = 0.15;     // node-budget shares; must sum to 1
    double split_select = 0.15;
    double split_count = 0.70;
    std::uint64_t seed = 0;

    bool sonset_observed = false; // restrict candidates to observed labels (not private)
    bool zero_noise = false;      // test hook: degenerate infinite-budget scales
    bool fault_double_count = false; // test hook: count noise drawn at twice the charged budget
    bool record_stats = true;     // keep per-cluster records in the result

    void validate() const {
        if (!(total_eps > 0) || !std::isfinite(total_eps))
            throw ConfigError("total_eps must be a positive finite real");
        if (h_user < 1) throw ConfigError("h must be >= 1");
        if (!(pre_fraction > 0) || !(pre_fraction < 1))
            throw ConfigError("pre-fraction must lie in (0,1)");
        if (delta && !(*delta >= 0)) throw ConfigError("delta must be >= 0");
        if (!(theta_floor >= 0)) throw ConfigError("theta-floor must be >= 0");
        if (theta_override && !(*theta_override >= 0))
            throw ConfigError("theta override must be >= 0");
        for (double s : {split_rank, split_select, split_count})
            if (!(s >= 0) || !(s <= 1))
                throw ConfigError("budget split fractions must lie in [0,1]");
        if (!(split_rank > 0) || !(split_count > 0))
            throw ConfigError("rank and count split fractions must be > 0");
        if (std::abs(split_rank + split_select + split_count - 1.0) > 1e-9)
            throw ConfigError("budget split fractions must sum to 1");
    }
};

struct PreSplit {
    double eps_len;  // noisy max length
    double eps_hist; // noisy length histogram
    double eps_tree; // everything below the root
};

/// The preprocessing share is divided into two equal parts (max length and
/// length histogram); the rest goes to the tree. The two preprocessing
/// charges are global-stage charges.
inline PreSplit split_budget(const AptbConfig& cfg, BudgetLedger& ledger) {
    PreSplit s;
    s.eps_len = cfg.pre_fraction * cfg.total_eps / 2.0;
    s.eps_hist = s.eps_len;
    s.eps_tree = (1.0 - cfg.pre_fraction) * cfg.total_eps;
    ledger.charge(kGlobalScope, Epsilon(s.eps_len), Purpose::pre_length);
    ledger.charge(kGlobalScope, Epsilon(s.eps_hist), Purpose::pre_histogram);
    return s;
}

struct NoisyHeight {
    int h = 1;
    double noisy_max_len = 0; // released alongside the data, never exact
    std::vector<double> hist; // hist[i] = noisy count of length i+1, i < h
};

/// The tree height is the publisher's h_user; the noisy max length is
/// still measured (and charged) so the released length statistics never
/// expose the exact maximum, whose removal sensitivity is unbounded. The
/// histogram covers lengths 1..h with the top bin aggregating everything
/// >= h — published trajectories are truncated at h, so the bins sum to
/// the (noisy) dataset size. One trajectory lands in exactly one bin, so
/// the whole vector costs a single eps_hist.
inline NoisyHeight noisy_height(const Dataset& d, double eps_len, double eps_hist,
                                int h_user, RandomStream& rng, bool zero_noise = false) {
    if (!(eps_len > 0) || !(eps_hist > 0))
        throw ConfigError("preprocessing budgets must be > 0");
    const auto true_hist = length_histogram(d);
    NoisyHeight out;
    out.noisy_max_len = static_cast<double>(max_length(d));
    if (!zero_noise) out.noisy_max_len += laplace(1.0 / eps_len, rng);
    out.h = h_user;
    out.hist.resize(out.h);
    for (int len = 1; len <= out.h; ++len) {
        double t = 0;
        if (len < out.h) {
            if (len <= static_cast<int>(true_hist.size()))
                t = static_cast<double>(true_hist[len - 1]);
        } else {
            for (int l = len; l <= static_cast<int>(true_hist.size()); ++l)
                t += static_cast<double>(true_hist[l - 1]);
        }
        if (!zero_noise) t += laplace(1.0 / eps_hist, rng);
        out.hist[len - 1] = t;
    }
    return out;
}

/// eps_remaining / (min(maxExpand, h - depth) + 1): the deeper a node can
/// still expand, the smaller its own share, so path sums telescope to at
/// most the tree budget.
inline double allocate_budget(const TreeNode& n, double eps_remaining,
                              const PrefixTree& t) {
    const int levels_below = std::min(max_expand(n, t), t.height_limit - n.depth);
    return eps_remaining / (levels_below + 1);
}

/// Threshold from k * P_theta < 1 with P_theta = exp(-eps * theta) / 2 (the
/// Laplace upper tail), i.e. theta = ln(max(k,2)) / eps, floored.
inline double compute_theta(std::size_t k, double eps_count, const AptbConfig& cfg) {
    if (cfg.theta_override) return *cfg.theta_override;
    const double kk = static_cast<double>(std::max<std::size_t>(k, 2));
    return std::max(cfg.theta_floor, std::log(kk) / eps_count);
}

/// A node of a budget class during aggregation. true_count is the exact
/// prefix count; rank_count the preliminary noisy count clustering sorts by.
struct ClassMember {
    TreeNode* node = nullptr;
    std::string scope;
    double true_count = 0;
    double rank_count = 0;
};

/// Adds preliminary noise to every member (charged per node), sorts members
/// by noisy count descending, and opens a new cluster whenever the gap
/// between consecutive values exceeds delta. Outliers land in singletons.
inline std::vector<std::vector<ClassMember>> cluster_nodes(
    std::vector<ClassMember> members, double delta, double eps_rank,
    RandomStream& rng, BudgetLedger& ledger, bool zero_noise = false) {
    for (auto& m : members) {
        m.rank_count = m.true_count + (zero_noise ? 0.0 : laplace(1.0 / eps_rank, rng));
        ledger.charge(m.scope, Epsilon(eps_rank), Purpose::rank);
    }
    std::sort(members.begin(), members.end(), [](const ClassMember& a, const ClassMember& b) {
        if (a.rank_count != b.rank_count) return a.rank_count > b.rank_count;
        return slot_cell_less(a.node->label, b.node->label);
    });
    std::vector<std::vector<ClassMember>> clusters;
    for (auto& m : members) {
        if (clusters.empty() || clusters.back().back().rank_count - m.rank_count > delta)
            clusters.emplace_back();
        clusters.back().push_back(std::move(m));
    }
    return clusters;
}

/// A merged group of same-class nodes that received a single Laplace draw.
/// noisy_total is exactly m * published_member_count.
struct CoarseNode {
    std::size_t m = 0;
    double noisy_total = 0;
    double published_member_count = 0;
};

/// Merges neighboring groups with similar mean true counts via the
/// exponential mechanism (score = -|mean gap|, STOP scores -delta), then
/// noises each resulting coarse node once and publishes the member average.
/// Clusters of size <= 2 have a single merge scheme, so no selection budget
/// is consumed; all k iteration budgets are charged even on early stop.
inline std::vector<CoarseNode> reconstruct_cluster(
    std::vector<ClassMember>& cluster, double eps_select, double eps_count,
    double delta, RandomStream& rng, BudgetLedger& ledger, bool zero_noise = false,
    bool fault_double_count = false) {
    const std::size_t k = cluster.size();

    std::vector<double> prefix_sum(k + 1, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        prefix_sum[i + 1] = prefix_sum[i] + cluster[i].true_count;
    auto group_mean = [&](std::size_t b, std::size_t e) {
        return (prefix_sum[e] - prefix_sum[b]) / static_cast<double>(e - b);
    };

    // contiguous [begin, end) ranges over the cluster order
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    groups.reserve(k);
    for (std::size_t i = 0; i < k; ++i) groups.emplace_back(i, i + 1);

    if (k > 2) {
        if (!(eps_select > 0))
            throw ConfigError("clusters larger than 2 need a positive select share");
        const double per_iter = eps_select / static_cast<double>(k);
        // all k iteration budgets are committed up front (early stop does not
        // refund), so each member carries one aggregate select charge
        for (const auto& m : cluster)
            ledger.charge(m.scope, Epsilon(eps_select), Purpose::select);
        for (std::size_t it = 0; it < k && groups.size() > 1; ++it) {
            std::vector<double> scores;
            scores.reserve(groups.size());
            for (std::size_t j = 0; j + 1 < groups.size(); ++j) {
                const double left = group_mean(groups[j].first, groups[j].second);
                const double right = group_mean(groups[j + 1].first, groups[j + 1].second);
                scores.push_back(-std::abs(left - right));
            }
            scores.push_back(-delta); // STOP
            const std::size_t pick =
                zero_noise ? argmax_first(scores)
                           : exp_mechanism(scores, Epsilon(per_iter), 1.0, rng);
            if (pick + 1 == scores.size()) break;
            groups[pick].second = groups[pick + 1].second;
            groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(pick) + 1);
        }
    } else if (k == 2) {
        // single merge scheme; no selection, no select charge
        groups.assign(1, {0, 2});
    }

    std::vector<CoarseNode> out;
    out.reserve(groups.size());
    for (const auto& [b, e] : groups) {
        const std::size_t m = e - b;
        const double noise_eps = fault_double_count ? 2.0 * eps_count : eps_count;
        const double noise = zero_noise ? 0.0 : laplace(1.0 / noise_eps, rng);
        const double avg = (prefix_sum[e] - prefix_sum[b] + noise) / static_cast<double>(m);
        CoarseNode cn;
        cn.m = m;
        cn.published_member_count = avg;
        cn.noisy_total = avg * static_cast<double>(m);
        for (std::size_t i = b; i < e; ++i) {
            cluster[i].node->count = avg;
            ledger.charge(cluster[i].scope, Epsilon(eps_count), Purpose::count);
        }
        out.push_back(cn);
    }
    return out;
}

/// One cluster processed during a build: which class it came from, the
/// count budget its members ended up with and the threshold applied.
struct ClusterRecord {
    int level = 0;
    std::size_t class_size = 0;
    std::size_t k = 0;
    double eps_node = 0;
    double eps_count = 0;
    double theta = 0;
    bool theta_overridden = false;
    std::vector<std::string> member_scopes;
};

struct BuildResult {
    PrefixTree tree;
    BudgetLedger ledger;
    PreSplit pre{};
    int height = 0;
    double noisy_max_len = 0;
    std::vector<double> noisy_hist;
    std::vector<CoarseNode> coarse_nodes;
    std::vector<ClusterRecord> clusters;
};

namespace detail {

struct LevelEntry {
    TreeNode* node;
    std::string scope;
    double child_remaining; // budget left for this node's descendants
    std::vector<std::uint32_t> matching;
};

/// Materializes all candidate children of parent with exact counts and
/// matching trajectory index lists. Children get count 0 when unobserved.
inline void materialize_children(const Dataset& d, const PrefixTree& tree,
                                 LevelEntry& parent, bool observed_only,
                                 std::vector<LevelEntry>& out) {
    std::vector<STPoint> labels;
    if (observed_only) {
        for (std::uint32_t idx : parent.matching) {
            const auto& pts = d.trajectories[idx].points;
            if (pts.size() > static_cast<std::size_t>(parent.node->depth))
                labels.push_back(pts[parent.node->depth]);
        }
        std::sort(labels.begin(), labels.end(), slot_cell_less);
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        if (parent.node->depth >= tree.height_limit) labels.clear();
    } else {
        labels = son_set(*parent.node, tree);
    }
    if (labels.empty()) return;

    auto& children = parent.node->children;
    children.reserve(labels.size());
    for (const auto& l : labels) {
        TreeNode c;
        c.label = l;
        c.depth = parent.node->depth + 1;
        children.push_back(std::move(c));
    }

    std::vector<std::vector<std::uint32_t>> buckets(labels.size());
    for (std::uint32_t idx : parent.matching) {
        const auto& pts = d.trajectories[idx].points;
        if (pts.size() <= static_cast<std::size_t>(parent.node->depth)) continue;
        const STPoint& next = pts[parent.node->depth];
        auto it = std::lower_bound(labels.begin(), labels.end(), next,
                                   [](const STPoint& a, const STPoint& b) {
                                       return slot_cell_less(a, b);
                                   });
        if (it != labels.end() && *it == next)
            buckets[static_cast<std::size_t>(it - labels.begin())].push_back(idx);
    }

    for (std::size_t j = 0; j < labels.size(); ++j) {
        children[j].count = static_cast<double>(buckets[j].size());
        LevelEntry e;
        e.node = &children[j];
        e.scope = node_scope(parent.scope, labels[j]);
        e.child_remaining = parent.child_remaining; // own allocation subtracted later
        e.matching = std::move(buckets[j]);
        out.push_back(std::move(e));
    }
}

} // namespace detail

/// Full APTB build. Returns the noisy tree together with the complete
/// budget ledger and per-cluster records.
inline BuildResult build_noisy_tree(const Dataset& d, const AptbConfig& cfg) {
    cfg.validate();
    RandomStream rng(cfg.seed);

    BuildResult res;
    res.pre = split_budget(cfg, res.ledger);
    NoisyHeight nh = noisy_height(d, res.pre.eps_len, res.pre.eps_hist, cfg.h_user,
                                  rng, cfg.zero_noise);
    res.height = nh.h;
    res.noisy_max_len = nh.noisy_max_len;
    res.noisy_hist = nh.hist;

    PrefixTree tree;
    tree.height_limit = nh.h;
    tree.universe = d.universe;
    double root_count = 0;
    for (double v : nh.hist) root_count += std::max(v, 0.0);
    tree.root.count = root_count;

    std::vector<detail::LevelEntry> frontier;
    {
        detail::LevelEntry root_entry;
        root_entry.node = &tree.root;
        root_entry.child_remaining = res.pre.eps_tree;
        root_entry.matching.resize(d.size());
        for (std::uint32_t i = 0; i < d.size(); ++i) root_entry.matching[i] = i;
        frontier.push_back(std::move(root_entry));
    }

    for (int level = 1; level <= nh.h; ++level) {
        std::vector<detail::LevelEntry> current;
        for (auto& parent : frontier) {
            if (parent.node->marked_leaf) continue;
            detail::materialize_children(d, tree, parent, cfg.sonset_observed, current);
        }
        if (current.empty()) break;

        // allocate budgets and form classes of equal allocation
        std::vector<double> class_eps;
        std::vector<std::vector<std::size_t>> class_members;
        std::unordered_map<double, std::size_t> class_index;
        for (std::size_t i = 0; i < current.size(); ++i) {
            auto& e = current[i];
            // parent's remaining budget was stashed when the entry was made
            const double remaining = e.child_remaining;
            const double a = allocate_budget(*e.node, remaining, tree);
            e.node->eps = a;
            e.child_remaining = remaining - a;
            auto [it, fresh] = class_index.try_emplace(a, class_eps.size());
            if (fresh) {
                class_eps.push_back(a);
                class_members.emplace_back();
            }
            class_members[it->second].push_back(i);
        }

        for (std::size_t ci = 0; ci < class_eps.size(); ++ci) {
            const double a = class_eps[ci];
            const double eps_rank = cfg.split_rank * a;
            const double class_count_eps = cfg.split_count * a;
            const double delta =
                cfg.delta ? *cfg.delta : 2.0 * std::sqrt(2.0) / class_count_eps;

            std::vector<ClassMember> members;
            members.reserve(class_members[ci].size());
            for (std::size_t i : class_members[ci])
                members.push_back(ClassMember{current[i].node, current[i].scope,
                                              current[i].node->count, 0});
            const std::size_t class_size = members.size();

            auto clusters = cluster_nodes(std::move(members), delta, eps_rank, rng,
                                          res.ledger, cfg.zero_noise);
            for (auto& cluster : clusters) {
                const std::size_t k = cluster.size();
                const double eps_select = cfg.split_select * a;
                const double eps_count =
                    k <= 2 ? (cfg.split_select + cfg.split_count) * a : class_count_eps;
                auto coarse =
                    reconstruct_cluster(cluster, eps_select, eps_count, delta, rng,
                                        res.ledger, cfg.zero_noise, cfg.fault_double_count);
                res.coarse_nodes.insert(res.coarse_nodes.end(), coarse.begin(),
                                        coarse.end());

                const double theta = compute_theta(class_size, eps_count, cfg);
                if (cfg.record_stats) {
                    ClusterRecord rec;
                    rec.level = level;
                    rec.class_size = class_size;
                    rec.k = k;
                    rec.eps_node = a;
                    rec.eps_count = eps_count;
                    rec.theta = theta;
                    rec.theta_overridden = cfg.theta_override.has_value();
                    for (const auto& m : cluster) rec.member_scopes.push_back(m.scope);
                    res.clusters.push_back(std::move(rec));
                }
                for (const auto& m : cluster)
                    if (m.node->count < theta) m.node->marked_leaf = true;
            }
        }

        frontier = std::move(current);
    }

    res.tree = std::move(tree);
    return res;
}

} // namespace aptb
