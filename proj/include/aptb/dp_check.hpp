#pragma once

// Empirical differential-privacy checker: runs the full publication
// pipeline many times on a tiny dataset D and its neighbor D' (one
// trajectory removed), canonicalizes each published dataset into an outcome
// key, and tests that observed outcome frequencies respect the e^eps bound
// up to binomial sampling slack. A necessary-condition smoke test with
// finite power, not a proof.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "aptb/pipeline.hpp"
#include "aptb/random.hpp"
#include "aptb/trajectory.hpp"

namespace aptb {

struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DpCheckReport {
    double epsilon_claimed = 0;
    double max_observed_ratio = 0;
    long trials = 0;
    std::string outcome_space;
    bool pass = false;
    std::size_t keys_checked = 0;
    std::size_t keys_total = 0;
    std::string worst_key;
    std::string mechanism;
};

/// Sorted-multiset key of a published dataset; independent of emission order.
inline std::string canonical_outcome_key(const Dataset& d) {
    std::vector<std::string> rows;
    rows.reserve(d.trajectories.size());
    for (const auto& t : d.trajectories) {
        std::string row;
        for (const auto& p : t.points) {
            if (!row.empty()) row += ' ';
            row += std::to_string(p.cell);
            row += ':';
            row += std::to_string(p.slot);
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end());
    std::string key;
    for (const auto& r : rows) {
        key += r;
        key += '|';
    }
    return key;
}

/// Preconditions: <= 4 trajectories, universe within 2x2 cells x 2 slots,
/// trials >= 10^4 (outcome space must stay coarse for frequencies to mean
/// anything). Keys with >= 50 observations under either input are checked:
///   freq_D <= e^eps * freq_D' + 3 * (se_D + e^eps * se_D')   and symmetric.
inline DpCheckReport empirical_dp_check(const Dataset& d, std::size_t removed_index,
                                        const AptbConfig& cfg, long trials,
                                        Mechanism mechanism = Mechanism::aptb) {
    if (trials < 10000)
        throw PreconditionError("empirical_dp_check: trials must be >= 10^4");
    if (d.size() > 4 || d.size() == 0)
        throw PreconditionError("empirical_dp_check: dataset must hold 1..4 trajectories");
    if (d.universe.grid_rows > 2 || d.universe.grid_cols > 2 || d.universe.time_slots > 2)
        throw PreconditionError("empirical_dp_check: universe must fit 2x2 cells x 2 slots");
    if (removed_index >= d.size())
        throw PreconditionError("empirical_dp_check: removed index out of range");

    const Dataset neighbor = remove_one(d, removed_index);
    AptbConfig run_cfg = cfg;
    run_cfg.record_stats = false;

    RandomStream master(cfg.seed);
    const auto n = static_cast<std::uint64_t>(trials);

    std::unordered_map<std::string, std::uint32_t> freq_d, freq_n;
    for (std::uint64_t t = 0; t < n; ++t) {
        run_cfg.seed = master.derive(t).seed();
        ++freq_d[canonical_outcome_key(run_pipeline(d, run_cfg, mechanism).published)];
    }
    for (std::uint64_t t = 0; t < n; ++t) {
        run_cfg.seed = master.derive(n + t).seed();
        ++freq_n[canonical_outcome_key(run_pipeline(neighbor, run_cfg, mechanism).published)];
    }

    DpCheckReport report;
    report.epsilon_claimed = cfg.total_eps;
    report.trials = trials;
    report.mechanism = to_string(mechanism);
    report.pass = true;

    std::vector<std::string> keys;
    for (const auto& [k, v] : freq_d) keys.push_back(k);
    for (const auto& [k, v] : freq_n)
        if (!freq_d.count(k)) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    report.keys_total = keys.size();

    const double nn = static_cast<double>(trials);
    const double bound = std::exp(cfg.total_eps);
    auto std_err = [nn](double p) { return std::sqrt(p * (1.0 - p) / nn); };

    for (const auto& key : keys) {
        const auto itd = freq_d.find(key);
        const auto itn = freq_n.find(key);
        const double cd = itd == freq_d.end() ? 0.0 : itd->second;
        const double cn = itn == freq_n.end() ? 0.0 : itn->second;
        if (cd < 50 && cn < 50) continue;
        ++report.keys_checked;
        const double p = cd / nn;
        const double q = cn / nn;
        const bool fwd = p <= bound * q + 3.0 * (std_err(p) + bound * std_err(q));
        const bool bwd = q <= bound * p + 3.0 * (std_err(q) + bound * std_err(p));
        const double ratio =
            std::max(p, q) / std::max(std::min(p, q), 1.0 / nn);
        if (ratio > report.max_observed_ratio) {
            report.max_observed_ratio = ratio;
            report.worst_key = key;
        }
        if (!fwd || !bwd) report.pass = false;
    }
    report.outcome_space = "canonicalized published trajectory multisets (" +
                           std::to_string(report.keys_total) + " distinct outcomes)";
    return report;
}

struct TinyFixture {
    std::string name;
    Dataset data;
    std::size_t removed_index;
};

/// Bundled tiny datasets for the checker; all within the precondition box.
inline std::vector<TinyFixture> tiny_fixtures() {
    const Universe u12{1, 2, 2}; // 2 cells, 2 slots
    const Universe u22{2, 2, 2}; // 4 cells, 2 slots
    auto traj = [](std::initializer_list<STPoint> pts) { return Trajectory{pts}; };

    std::vector<TinyFixture> fx;
    fx.push_back({"dup-pair",
                  Dataset{u12, {traj({{0, 0}}), traj({{0, 0}})}},
                  0});
    fx.push_back({"triple",
                  Dataset{u12, {traj({{0, 0}}), traj({{1, 1}}), traj({{0, 0}, {1, 1}})}},
                  2});
    fx.push_back({"quad",
                  Dataset{u22,
                          {traj({{0, 0}}), traj({{1, 0}}), traj({{2, 1}}), traj({{3, 1}})}},
                  3});
    fx.push_back({"forked-pair",
                  Dataset{u22, {traj({{0, 0}, {1, 1}}), traj({{0, 0}, {2, 1}})}},
                  1});
    fx.push_back({"singleton", Dataset{u12, {traj({{1, 1}})}}, 0});
    return fx;
}

inline TinyFixture tiny_fixture(const std::string& name) {
    for (auto& f : tiny_fixtures())
        if (f.name == name) return f;
    throw PreconditionError("unknown dpcheck fixture '" + name + "'");
}

} // namespace aptb
