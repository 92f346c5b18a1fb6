#pragma once

// Desk-scale synthetic trajectory generator: slot-monotone random walks
// over grid cells with power-law cell popularity.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "aptb/random.hpp"
#include "aptb/trajectory.hpp"

namespace aptb {

namespace detail {

inline std::size_t weighted_pick(const std::vector<double>& weights, RandomStream& rng) {
    double total = 0;
    for (double w : weights) total += w;
    const double target = rng.uniform01() * total;
    double acc = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (target < acc) return i;
    }
    return weights.size() - 1;
}

} // namespace detail

/// Trajectories take a uniform length L in [1, min(max_len, T)], consecutive
/// slots starting at a uniform offset; every visited cell is an independent
/// draw from the power-law cell popularity (index+1)^-skew, skew 0 being
/// uniform. Deterministic per seed.
inline Dataset synth_dataset(const Universe& u, std::size_t n_traj, int max_len,
                             double popularity_skew, std::uint64_t seed) {
    if (max_len < 1) throw std::invalid_argument("synth_dataset: max_len must be >= 1");
    RandomStream rng(seed);

    std::vector<double> popularity(u.cell_count());
    for (std::size_t c = 0; c < popularity.size(); ++c)
        popularity[c] = std::pow(static_cast<double>(c + 1), -popularity_skew);

    Dataset d;
    d.universe = u;
    d.trajectories.reserve(n_traj);
    const std::uint32_t len_cap =
        std::min<std::uint32_t>(static_cast<std::uint32_t>(max_len), u.time_slots);
    for (std::size_t i = 0; i < n_traj; ++i) {
        const auto len = 1 + static_cast<std::uint32_t>(rng.below(len_cap));
        const auto start_slot =
            static_cast<std::uint32_t>(rng.below(u.time_slots - len + 1));
        Trajectory t;
        t.points.reserve(len);
        for (std::uint32_t j = 0; j < len; ++j) {
            const auto cell =
                static_cast<std::uint32_t>(detail::weighted_pick(popularity, rng));
            t.points.push_back(STPoint{cell, start_slot + j});
        }
        d.trajectories.push_back(std::move(t));
    }
    return d;
}

} // namespace aptb
