#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "aptb/aptb.hpp"
#include "aptb/consistency.hpp"
#include "aptb/io.hpp"
#include "aptb/metrics.hpp"
#include "aptb/pipeline.hpp"
#include "aptb/synth.hpp"
#include "helpers.hpp"

using namespace aptb;
using test_helpers::P;
using test_helpers::traj;

namespace {

AptbConfig base_cfg(double eps, int h, std::uint64_t seed) {
    AptbConfig cfg;
    cfg.total_eps = eps;
    cfg.h_user = h;
    cfg.seed = seed;
    return cfg;
}

AptbConfig exact_cfg(int h, std::uint64_t seed) {
    // degenerate infinite-budget hooks: no noise, delta 0, no pruning
    AptbConfig cfg = base_cfg(1.0, h, seed);
    cfg.zero_noise = true;
    cfg.delta = 0.0;
    cfg.theta_override = 0.0;
    return cfg;
}

std::vector<TreeNode> make_nodes(const std::vector<double>& counts) {
    std::vector<TreeNode> nodes(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        nodes[i].label = P(static_cast<std::uint32_t>(i), 1);
        nodes[i].depth = 1;
        nodes[i].count = counts[i];
    }
    return nodes;
}

std::vector<ClassMember> make_members(std::vector<TreeNode>& nodes) {
    std::vector<ClassMember> members;
    for (auto& n : nodes)
        members.push_back(ClassMember{&n, node_scope("", n.label), n.count, 0});
    return members;
}

} // namespace

TEST_CASE("split_budget divides the preprocessing share into equal halves") {
    SECTION("eps 1.0 at the default 10% preprocessing share") {
        BudgetLedger ledger;
        const PreSplit s = split_budget(base_cfg(1.0, 3, 0), ledger);
        CHECK(s.eps_len == Approx(0.05));
        CHECK(s.eps_hist == Approx(0.05));
        CHECK(s.eps_tree == Approx(0.9));
        REQUIRE(ledger.size() == 2);
        CHECK(ledger.charges()[0].scope == kGlobalScope);
        CHECK(ledger.charges()[0].purpose == Purpose::pre_length);
        CHECK(ledger.charges()[1].purpose == Purpose::pre_histogram);
    }
    SECTION("eps 2.0 with half the budget on preprocessing") {
        BudgetLedger ledger;
        AptbConfig cfg = base_cfg(2.0, 3, 0);
        cfg.pre_fraction = 0.5;
        const PreSplit s = split_budget(cfg, ledger);
        CHECK(s.eps_len == Approx(0.5));
        CHECK(s.eps_hist == Approx(0.5));
        CHECK(s.eps_tree == Approx(1.0));
    }
    SECTION("the two preprocessing halves are always equal") {
        for (double pre : {0.05, 0.2, 0.8}) {
            BudgetLedger ledger;
            AptbConfig cfg = base_cfg(1.7, 2, 0);
            cfg.pre_fraction = pre;
            const PreSplit s = split_budget(cfg, ledger);
            CHECK(s.eps_len == s.eps_hist);
            CHECK(s.eps_len + s.eps_hist + s.eps_tree == Approx(1.7));
        }
    }
}

TEST_CASE("noisy_height") {
    const Dataset d = test_helpers::sample_dataset();
    SECTION("with zero noise the true max length wins") {
        RandomStream rng(1);
        const NoisyHeight nh = noisy_height(d, 0.05, 0.05, 3, rng, true);
        CHECK(nh.h == 3);
        REQUIRE(nh.hist.size() == 3);
        CHECK(nh.hist == std::vector<double>{0, 10, 5});
    }
    SECTION("h_user = 1 clamps regardless of noise") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            RandomStream rng(seed);
            CHECK(noisy_height(d, 0.05, 0.05, 1, rng).h == 1);
        }
    }
    SECTION("empty dataset still yields a height of at least 1") {
        const Dataset empty{Universe{1, 2, 2}, {}};
        RandomStream rng(3);
        const NoisyHeight nh = noisy_height(empty, 0.5, 0.5, 4, rng);
        CHECK(nh.h >= 1);
        CHECK(nh.hist.size() == static_cast<std::size_t>(nh.h));
    }
    SECTION("monte carlo: heights stay centered near the true max") {
        double sum = 0;
        const int runs = 1000;
        for (int i = 0; i < runs; ++i) {
            RandomStream rng(1000 + static_cast<std::uint64_t>(i));
            sum += noisy_height(d, 0.05, 0.05, 3, rng).h;
        }
        const double mean = sum / runs;
        CHECK(mean >= 2.0);
        CHECK(mean <= 4.0);
    }
}

TEST_CASE("allocate_budget follows remaining expansion depth") {
    SECTION("a node that cannot expand receives everything remaining") {
        PrefixTree t;
        t.universe = Universe{1, 2, 3};
        t.height_limit = 3;
        TreeNode n;
        n.depth = 1;
        n.label = P(0, 2); // last slot: sonSet empty
        CHECK(allocate_budget(n, 0.4, t) == Approx(0.4));
    }
    SECTION("0.9 over two expandable levels plus self gives 0.3") {
        PrefixTree t;
        t.universe = Universe{1, 1, 5};
        t.height_limit = 4;
        TreeNode n;
        n.depth = 2;
        n.label = P(0, 1); // 3 later slots, but only 2 levels of height left
        CHECK(max_expand(n, t) == 2);
        CHECK(allocate_budget(n, 0.9, t) == Approx(0.3));
    }
}

TEST_CASE("cluster_nodes groups by noisy-count gaps") {
    SECTION("gap rule: {10.1, 9.8, 4.0} with delta 2 splits after 9.8") {
        auto nodes = make_nodes({4.0, 10.1, 9.8});
        auto members = make_members(nodes);
        BudgetLedger ledger;
        RandomStream rng(1);
        const auto clusters = cluster_nodes(members, 2.0, 0.1, rng, ledger, true);
        REQUIRE(clusters.size() == 2);
        REQUIRE(clusters[0].size() == 2);
        CHECK(clusters[0][0].true_count == 10.1);
        CHECK(clusters[0][1].true_count == 9.8);
        REQUIRE(clusters[1].size() == 1);
        CHECK(clusters[1][0].true_count == 4.0);
        CHECK(ledger.size() == 3); // one rank charge per member
        for (const auto& c : ledger.charges()) CHECK(c.purpose == Purpose::rank);
    }
    SECTION("all equal counts form one cluster") {
        auto nodes = make_nodes({5, 5, 5, 5});
        auto members = make_members(nodes);
        BudgetLedger ledger;
        RandomStream rng(1);
        CHECK(cluster_nodes(members, 0.0, 0.1, rng, ledger, true).size() == 1);
    }
    SECTION("delta 0 with distinct counts gives all singletons") {
        auto nodes = make_nodes({3, 1, 2});
        auto members = make_members(nodes);
        BudgetLedger ledger;
        RandomStream rng(1);
        const auto clusters = cluster_nodes(members, 0.0, 0.1, rng, ledger, true);
        REQUIRE(clusters.size() == 3);
        CHECK(clusters[0][0].true_count == 3); // descending order
        CHECK(clusters[2][0].true_count == 1);
    }
}

TEST_CASE("reconstruct_cluster merges and noises coarse nodes") {
    SECTION("k = 2: one coarse node published as the member average") {
        auto nodes = make_nodes({5, 5});
        auto members = make_members(nodes);
        BudgetLedger cluster_ledger;
        RandomStream rng_cluster(9);
        auto clusters =
            cluster_nodes(members, 10.0, 0.1, rng_cluster, cluster_ledger, true);
        REQUIRE(clusters.size() == 1);

        // oracle: an identically seeded stream yields the same Laplace draw
        RandomStream rng_oracle(33);
        const double expected_noise = laplace(1.0 / 0.7, rng_oracle);

        BudgetLedger ledger;
        RandomStream rng(33);
        const auto coarse =
            reconstruct_cluster(clusters[0], 0.15, 0.7, 10.0, rng, ledger);
        REQUIRE(coarse.size() == 1);
        CHECK(coarse[0].m == 2);
        CHECK(coarse[0].published_member_count == (10.0 + expected_noise) / 2.0);
        CHECK(coarse[0].noisy_total == 2.0 * coarse[0].published_member_count);
        CHECK(nodes[0].count == coarse[0].published_member_count);
        CHECK(nodes[1].count == coarse[0].published_member_count);
        // no selection charge for k <= 2
        for (const auto& c : ledger.charges()) CHECK(c.purpose != Purpose::select);
        CHECK(ledger.size() == 2); // one count charge per member
    }
    SECTION("k = 1: the node is its own coarse node") {
        auto nodes = make_nodes({7});
        auto members = make_members(nodes);
        BudgetLedger ledger;
        RandomStream rng(5);
        std::vector<ClassMember> cluster = members;
        const auto coarse =
            reconstruct_cluster(cluster, 0.15, 0.7, 1.0, rng, ledger, true);
        REQUIRE(coarse.size() == 1);
        CHECK(coarse[0].m == 1);
        CHECK(coarse[0].published_member_count == 7.0);
        CHECK(nodes[0].count == 7.0);
    }
    SECTION("k = 3 equal counts with zero noise merge fully and charge k iterations") {
        auto nodes = make_nodes({4, 4, 4});
        auto members = make_members(nodes);
        BudgetLedger cluster_ledger;
        RandomStream rng_cluster(2);
        auto clusters =
            cluster_nodes(members, 1.0, 0.1, rng_cluster, cluster_ledger, true);
        REQUIRE(clusters.size() == 1);
        REQUIRE(clusters[0].size() == 3);

        BudgetLedger ledger;
        RandomStream rng(2);
        const auto coarse =
            reconstruct_cluster(clusters[0], 0.3, 0.7, 1.0, rng, ledger, true);
        REQUIRE(coarse.size() == 1);
        CHECK(coarse[0].m == 3);
        CHECK(coarse[0].published_member_count == 4.0);
        std::size_t select_charges = 0;
        for (const auto& c : ledger.charges())
            if (c.purpose == Purpose::select) {
                ++select_charges;
                // full eps_select per member: early stop does not refund
                CHECK(c.epsilon == Approx(0.3));
            }
        CHECK(select_charges == 3); // one aggregate select charge per member
    }
}

TEST_CASE("compute_theta keeps k * P_theta below one") {
    AptbConfig cfg = base_cfg(1.0, 3, 0);
    SECTION("k = 4 at eps 0.5") {
        const double theta = compute_theta(4, 0.5, cfg);
        CHECK(theta == Approx(std::log(4.0) / 0.5).epsilon(1e-12));
        CHECK(theta == Approx(2.772588722239781).epsilon(1e-12));
        CHECK(4 * 0.5 * std::exp(-0.5 * theta) == Approx(0.5));
    }
    SECTION("override wins") {
        cfg.theta_override = 2.0;
        CHECK(compute_theta(4, 0.5, cfg) == 2.0);
        CHECK(compute_theta(1000, 0.01, cfg) == 2.0);
    }
    SECTION("floor binds for small classes with big budgets") {
        AptbConfig plain = base_cfg(1.0, 3, 0);
        CHECK(compute_theta(1, 50.0, plain) == 1.0);
    }
    SECTION("tail bound holds wherever the floor does not bind") {
        AptbConfig plain = base_cfg(1.0, 3, 0);
        for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{3},
                              std::size_t{10}, std::size_t{500}})
            for (double eps : {0.01, 0.1, 0.7}) {
                const double theta = compute_theta(k, eps, plain);
                CHECK(static_cast<double>(k) * 0.5 * std::exp(-eps * theta) < 1.0);
            }
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(base_cfg(0.0, 3, 0).validate(), ConfigError);
    CHECK_THROWS_AS(base_cfg(-1.0, 3, 0).validate(), ConfigError);
    CHECK_THROWS_AS(base_cfg(1.0, 0, 0).validate(), ConfigError);
    AptbConfig bad_pre = base_cfg(1.0, 3, 0);
    bad_pre.pre_fraction = 1.0;
    CHECK_THROWS_AS(bad_pre.validate(), ConfigError);
    AptbConfig bad_split = base_cfg(1.0, 3, 0);
    bad_split.split_rank = 0.5;
    CHECK_THROWS_AS(bad_split.validate(), ConfigError);
    CHECK_NOTHROW(base_cfg(1.0, 3, 0).validate());
}

TEST_CASE("build_noisy_tree on the sample dataset with a fixed threshold") {
    const Dataset d = test_helpers::sample_dataset();
    AptbConfig cfg = base_cfg(1.0, 3, 7);
    cfg.theta_override = 2.0;
    const BuildResult res = build_noisy_tree(d, cfg);

    SECTION("height never exceeds h and depths are consistent") {
        CHECK(res.height <= 3);
        for_each_node(res.tree.root, [&](const TreeNode& n) {
            CHECK(n.depth <= res.height);
        });
    }
    SECTION("every expanded node cleared the threshold") {
        for_each_node(res.tree.root, [&](const TreeNode& n) {
            if (n.depth > 0 && !n.children.empty()) CHECK(n.count >= 2.0);
        });
    }
    SECTION("budget classes hold nodes of exactly one depth") {
        CHECK(!res.clusters.empty());
        for (const auto& rec : res.clusters) {
            for (const auto& scope : rec.member_scopes) {
                const auto depth = std::count(scope.begin(), scope.end(), '/');
                CHECK(depth == rec.level);
            }
        }
    }
    SECTION("the ledger audit passes at the total budget") {
        const auto report = verify_composition(res.ledger, res.tree, Epsilon(1.0));
        CHECK(report.pass);
        CHECK(report.max_path_sum <= 1.0 + 1e-9);
    }
}

TEST_CASE("build determinism: same dataset, config and seed, same bits") {
    const Dataset d = test_helpers::sample_dataset();
    AptbConfig cfg = base_cfg(1.0, 3, 42);
    const BuildResult a = build_noisy_tree(d, cfg);
    const BuildResult b = build_noisy_tree(d, cfg);

    CHECK(dump_tree(a.tree) == dump_tree(b.tree));
    std::ostringstream la, lb;
    a.ledger.write(la);
    b.ledger.write(lb);
    CHECK(la.str() == lb.str());
    CHECK(dataset_to_string(generate_dataset(enforce_consistency(a.tree))) ==
          dataset_to_string(generate_dataset(enforce_consistency(b.tree))));
}

TEST_CASE("zero-noise limit reproduces exact counts on observed prefixes") {
    const auto check_exact = [](const Dataset& d, int h) {
        const BuildResult res = build_noisy_tree(d, exact_cfg(h, 3));
        const PrefixTree real = build_real_tree(d, h);
        CHECK(res.tree.root.count == static_cast<double>(d.size()));
        for (const auto& t : d.trajectories) {
            std::vector<STPoint> q;
            const std::size_t limit = std::min<std::size_t>(t.points.size(),
                                                            static_cast<std::size_t>(h));
            for (std::size_t i = 0; i < limit; ++i) {
                q.push_back(t.points[i]);
                CHECK(prefix_count(res.tree, q) == prefix_count(real, q));
            }
        }
    };
    check_exact(test_helpers::sample_dataset(), 3);
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        check_exact(synth_dataset(Universe{2, 2, 3}, 25, 3, 0.6, seed), 3);
}

TEST_CASE("coarse-node arithmetic: m x published average = noisy total") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset d = synth_dataset(Universe{2, 2, 3}, 40, 3, 0.5, seed);
        const BuildResult res = build_noisy_tree(d, base_cfg(1.0, 3, seed));
        CHECK(!res.coarse_nodes.empty());
        for (const auto& cn : res.coarse_nodes) {
            CHECK(static_cast<double>(cn.m) * cn.published_member_count ==
                  cn.noisy_total);
        }
    }
}

TEST_CASE("pruned nodes never expand") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset d = synth_dataset(Universe{2, 2, 3}, 60, 3, 0.8, seed);
        const BuildResult res = build_noisy_tree(d, base_cfg(0.8, 3, seed));
        // map each charged scope to the threshold its cluster applied
        std::unordered_map<std::string, double> theta_of;
        for (const auto& rec : res.clusters)
            for (const auto& scope : rec.member_scopes) theta_of[scope] = rec.theta;

        struct Frame {
            const TreeNode* n;
            std::string scope;
        };
        std::vector<Frame> stack{{&res.tree.root, ""}};
        while (!stack.empty()) {
            Frame f = stack.back();
            stack.pop_back();
            if (f.n->depth > 0 && !f.n->children.empty()) {
                REQUIRE(theta_of.count(f.scope) == 1);
                CHECK(f.n->count >= theta_of[f.scope]);
            }
            for (const auto& c : f.n->children)
                stack.push_back({&c, node_scope(f.scope, c.label)});
        }
    }
}

TEST_CASE("k <= 2 clusters never produce select charges") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset d = synth_dataset(Universe{2, 2, 2}, 30, 2, 0.5, seed);
        const BuildResult res = build_noisy_tree(d, base_cfg(1.0, 2, seed));
        std::set<std::string> select_scopes;
        for (const auto& c : res.ledger.charges())
            if (c.purpose == Purpose::select) select_scopes.insert(c.scope);
        for (const auto& rec : res.clusters)
            if (rec.k <= 2)
                for (const auto& scope : rec.member_scopes)
                    CHECK(select_scopes.count(scope) == 0);
    }
}

TEST_CASE("ledger audit passes across fuzzed datasets, configs and seeds") {
    RandomStream fuzz(2024);
    for (int rep = 0; rep < 20; ++rep) {
        const Universe u{1 + static_cast<std::uint32_t>(fuzz.below(2)),
                         1 + static_cast<std::uint32_t>(fuzz.below(3)),
                         2 + static_cast<std::uint32_t>(fuzz.below(3))};
        const Dataset d = synth_dataset(u, fuzz.below(60), 3, 0.5, fuzz.next_u64());
        AptbConfig cfg = base_cfg(0.25 + 0.25 * static_cast<double>(fuzz.below(8)),
                                  1 + static_cast<int>(fuzz.below(3)), fuzz.next_u64());
        const BuildResult res = build_noisy_tree(d, cfg);
        const auto report =
            verify_composition(res.ledger, res.tree, Epsilon(cfg.total_eps));
        INFO("rep " << rep << " max path sum " << report.max_path_sum << " vs "
                    << cfg.total_eps);
        CHECK(report.pass);
    }
}

TEST_CASE("empty dataset publishes almost nothing") {
    const Dataset empty{Universe{2, 1, 2}, {}};
    std::vector<double> sizes;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const PublishOutput out =
            run_pipeline(empty, base_cfg(1.0, 2, seed), Mechanism::aptb);
        sizes.push_back(static_cast<double>(out.published.size()));
    }
    std::sort(sizes.begin(), sizes.end());
    const double median = sizes[sizes.size() / 2];
    CHECK(median <= 5.0);
}
