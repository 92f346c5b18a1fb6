#include <catch2/catch.hpp>

#include <cmath>
#include <sstream>

#include "aptb/dp.hpp"
#include "aptb/ledger.hpp"
#include "aptb/prefix_tree.hpp"
#include "aptb/random.hpp"
#include "helpers.hpp"

using namespace aptb;
using test_helpers::P;
using test_helpers::traj;

TEST_CASE("random streams are deterministic and splittable") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RandomStream master(7);
    RandomStream d0 = master.derive(0);
    RandomStream d1 = master.derive(1);
    CHECK(d0.next_u64() != d1.next_u64());
    // derivation is a pure function of (seed, index)
    CHECK(master.derive(0).seed() == RandomStream(7).derive(0).seed());
}

TEST_CASE("epsilon must be positive and finite") {
    CHECK_THROWS_AS(Epsilon(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Epsilon(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(Epsilon(std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
    CHECK_THROWS_AS(Epsilon(std::nan("")), std::invalid_argument);
    CHECK(Epsilon(0.5).value == 0.5);
}

TEST_CASE("laplace inverse CDF") {
    SECTION("median maps to zero") {
        CHECK(laplace_from_uniform(3.0, 0.5) == 0.0);
    }
    SECTION("u = 0.9 at unit scale is -ln(0.2)") {
        CHECK(laplace_from_uniform(1.0, 0.9) == Approx(-std::log(0.2)).epsilon(1e-12));
        CHECK(laplace_from_uniform(1.0, 0.9) == Approx(1.6094379124341003).epsilon(1e-12));
    }
    SECTION("symmetric: u -> 1-u negates the draw") {
        RandomStream rng(11);
        for (int i = 0; i < 1000; ++i) {
            const double u = rng.uniform_open01();
            CHECK(laplace_from_uniform(2.0, u) ==
                  Approx(-laplace_from_uniform(2.0, 1.0 - u)).margin(1e-9));
        }
    }
    SECTION("moments over 10^6 draws at unit scale") {
        RandomStream rng(123);
        const int n = 1'000'000;
        double sum = 0, sum_sq = 0;
        for (int i = 0; i < n; ++i) {
            const double x = laplace(1.0, rng);
            sum += x;
            sum_sq += x * x;
        }
        const double mean = sum / n;
        const double var = sum_sq / n - mean * mean;
        CHECK(std::abs(mean) < 0.01);
        CHECK(std::abs(var - 2.0) < 0.1); // within 5% of Var = 2b^2 = 2
    }
}

TEST_CASE("exponential mechanism calibration") {
    SECTION("single candidate always wins") {
        RandomStream rng(1);
        const double s[] = {4.2};
        CHECK(exp_mechanism(s, Epsilon(1.0), 1.0, rng) == 0);
    }
    SECTION("equal scores select uniformly") {
        RandomStream rng(5);
        const double s[] = {1.0, 1.0, 1.0};
        int counts[3] = {0, 0, 0};
        const int n = 100'000;
        for (int i = 0; i < n; ++i) ++counts[exp_mechanism(s, Epsilon(1.0), 1.0, rng)];
        for (int c : counts)
            CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 3) < 0.01);
    }
    SECTION("scores {0,-1} at eps 2, sensitivity 1") {
        // closed form: {1, e^-1} / (1 + e^-1)
        const double p0 = 1.0 / (1.0 + std::exp(-1.0));
        RandomStream rng(17);
        const double s[] = {0.0, -1.0};
        int hit0 = 0;
        const int n = 100'000;
        for (int i = 0; i < n; ++i)
            if (exp_mechanism(s, Epsilon(2.0), 1.0, rng) == 0) ++hit0;
        CHECK(std::abs(static_cast<double>(hit0) / n - p0) < 0.01);
        CHECK(p0 == Approx(0.7310585786300049));
    }
    SECTION("selection depends only on score differences") {
        const std::vector<double> base{0.0, -0.7, -2.0, -0.1};
        std::vector<double> shifted = base;
        for (auto& s : shifted) s += 123.5;
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            RandomStream a(seed), b(seed);
            CHECK(exp_mechanism(base, Epsilon(1.3), 1.0, a) ==
                  exp_mechanism(shifted, Epsilon(1.3), 1.0, b));
        }
    }
    SECTION("chi-square goodness of fit at p > 0.001") {
        const std::vector<double> scores{0.0, -0.5, -1.5, -3.0};
        const double eps = 1.0, delta = 1.0;
        std::vector<double> expected(scores.size());
        double z = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            expected[i] = std::exp(eps * scores[i] / (2 * delta));
            z += expected[i];
        }
        for (auto& e : expected) e /= z;
        RandomStream rng(29);
        const int n = 100'000;
        std::vector<int> counts(scores.size(), 0);
        for (int i = 0; i < n; ++i)
            ++counts[exp_mechanism(scores, Epsilon(eps), delta, rng)];
        double chi2 = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double exp_count = expected[i] * n;
            chi2 += (counts[i] - exp_count) * (counts[i] - exp_count) / exp_count;
        }
        CHECK(chi2 < 16.266); // chi-square 0.999 quantile, df = 3
    }
}

TEST_CASE("budget ledger records charges") {
    BudgetLedger ledger;
    CHECK(ledger.size() == 0);
    ledger.charge("global", Epsilon(0.05), Purpose::pre_length);
    CHECK(ledger.size() == 1);
    ledger.charge("/0:0", Epsilon(0.1), Purpose::rank);
    ledger.charge("/0:0", Epsilon(0.2), Purpose::count);
    CHECK(ledger.size() == 3); // same scope charged twice, both retained

    // a zero charge is unrepresentable: Epsilon rejects it
    CHECK_THROWS_AS(Epsilon(0.0), std::invalid_argument);

    std::ostringstream os;
    ledger.write(os);
    CHECK(os.str() == "global\tpre-length\t0.05\n/0:0\trank\t0.1\n/0:0\tcount\t0.2\n");
}

TEST_CASE("composition audit over tree paths") {
    // two-level tree: (0,0) -> (1,1), plus leaf (1,1) at level 1
    const Dataset d{Universe{1, 2, 2},
                    {traj({P(0, 0), P(1, 1)}), traj({P(0, 0)}), traj({P(1, 1)})}};
    const PrefixTree tree = build_real_tree(d, 2);

    SECTION("empty ledger trivially passes with max path sum 0") {
        const auto report = verify_composition(BudgetLedger{}, tree, Epsilon(1.0));
        CHECK(report.pass);
        CHECK(report.max_path_sum == 0.0);
    }
    SECTION("path sums include global charges") {
        BudgetLedger ledger;
        ledger.charge(kGlobalScope, Epsilon(0.1), Purpose::pre_length);
        ledger.charge("/0:0", Epsilon(0.5), Purpose::count);
        ledger.charge("/0:0/1:1", Epsilon(0.3), Purpose::count);
        const auto report = verify_composition(ledger, tree, Epsilon(1.0));
        CHECK(report.pass);
        CHECK(report.max_path_sum == Approx(0.9));
        CHECK(report.max_path == "/0:0/1:1");
    }
    SECTION("an overcharged leaf path fails and is named") {
        BudgetLedger ledger;
        ledger.charge("/1:1", Epsilon(0.6), Purpose::count);
        ledger.charge("/1:1", Epsilon(0.6), Purpose::rank);
        const auto report = verify_composition(ledger, tree, Epsilon(1.0));
        CHECK_FALSE(report.pass);
        CHECK(report.max_path == "/1:1");
        CHECK(report.max_path_sum == Approx(1.2));
    }
    SECTION("unknown scope keys are a ledger/tree mismatch") {
        BudgetLedger ledger;
        ledger.charge("/5:1", Epsilon(0.1), Purpose::count);
        CHECK_THROWS_AS(verify_composition(ledger, tree, Epsilon(1.0)),
                        LedgerMismatchError);
    }
}
