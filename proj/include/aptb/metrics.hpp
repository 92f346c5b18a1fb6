#pragma once

// Utility metrics over (original, published) dataset pairs. Prefix counts
// here are computed directly from the datasets — they are the independent
// oracle for everything the trees claim.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "aptb/random.hpp"
#include "aptb/trajectory.hpp"

namespace aptb {

struct QueryWorkload {
    std::vector<std::vector<STPoint>> prefixes; // lengths 1..h
    double sanity_bound = 0.001; // floors relative-error denominators at s*|D|
};

/// Direct scan over the dataset; no tree involved.
inline double brute_prefix_count(const Dataset& d, std::span<const STPoint> prefix) {
    std::size_t n = 0;
    for (const auto& t : d.trajectories) {
        if (t.points.size() < prefix.size()) continue;
        bool match = true;
        for (std::size_t i = 0; i < prefix.size(); ++i)
            if (!(t.points[i] == prefix[i])) { match = false; break; }
        if (match) ++n;
    }
    return static_cast<double>(n);
}

namespace detail {

inline std::string prefix_key(std::span<const STPoint> prefix) {
    std::string key;
    for (const auto& p : prefix) {
        key += std::to_string(p.cell);
        key += ':';
        key += std::to_string(p.slot);
        key += ' ';
    }
    return key;
}

/// All prefix counts of d up to length max_len, in one pass.
inline std::unordered_map<std::string, double> prefix_count_map(const Dataset& d,
                                                                std::size_t max_len) {
    std::unordered_map<std::string, double> counts;
    std::string key;
    for (const auto& t : d.trajectories) {
        key.clear();
        const std::size_t limit = std::min(t.points.size(), max_len);
        for (std::size_t i = 0; i < limit; ++i) {
            key += std::to_string(t.points[i].cell);
            key += ':';
            key += std::to_string(t.points[i].slot);
            key += ' ';
            counts[key] += 1.0;
        }
    }
    return counts;
}

} // namespace detail

/// Mean over the workload of |c_pub(q) - c_orig(q)| / max(c_orig(q), s*|D|).
inline double avg_relative_error(const Dataset& original, const Dataset& published,
                                 const QueryWorkload& w) {
    if (w.prefixes.empty())
        throw std::invalid_argument("avg_relative_error: empty workload");
    std::size_t max_len = 0;
    for (const auto& q : w.prefixes) max_len = std::max(max_len, q.size());
    const auto orig_counts = detail::prefix_count_map(original, max_len);
    const auto pub_counts = detail::prefix_count_map(published, max_len);
    const double floor_val =
        w.sanity_bound * static_cast<double>(original.trajectories.size());

    double total = 0;
    for (const auto& q : w.prefixes) {
        const std::string key = detail::prefix_key(q);
        auto oit = orig_counts.find(key);
        auto pit = pub_counts.find(key);
        const double c_orig = oit == orig_counts.end() ? 0.0 : oit->second;
        const double c_pub = pit == pub_counts.end() ? 0.0 : pit->second;
        total += std::abs(c_pub - c_orig) / std::max(c_orig, floor_val);
    }
    return total / static_cast<double>(w.prefixes.size());
}

/// L1 distance between the length distributions (fractions); in [0, 2].
inline double length_distribution_l1(const Dataset& original, const Dataset& published) {
    if (original.trajectories.empty() || published.trajectories.empty())
        throw std::invalid_argument("length_distribution_l1: empty dataset");
    const auto ho = length_histogram(original);
    const auto hp = length_histogram(published);
    const double no = static_cast<double>(original.size());
    const double np = static_cast<double>(published.size());
    double l1 = 0;
    const std::size_t len = std::max(ho.size(), hp.size());
    for (std::size_t i = 0; i < len; ++i) {
        const double fo = i < ho.size() ? static_cast<double>(ho[i]) / no : 0.0;
        const double fp = i < hp.size() ? static_cast<double>(hp[i]) / np : 0.0;
        l1 += std::abs(fo - fp);
    }
    return l1;
}

/// Standard workload: every prefix with a positive count in d (lengths
/// 1..h) plus an equal number of distinct zero-count prefixes sampled
/// uniformly, so the metric sees both over- and under-counting.
inline QueryWorkload make_workload(const Dataset& d, int h, RandomStream& rng) {
    QueryWorkload w;
    const auto positives = detail::prefix_count_map(d, static_cast<std::size_t>(h));

    std::unordered_map<std::string, bool> seen;
    for (const auto& t : d.trajectories) {
        std::vector<STPoint> q;
        const std::size_t limit = std::min<std::size_t>(t.points.size(), h);
        for (std::size_t i = 0; i < limit; ++i) {
            q.push_back(t.points[i]);
            auto [it, fresh] = seen.try_emplace(detail::prefix_key(q), true);
            if (fresh) w.prefixes.push_back(q);
        }
    }
    const std::size_t target_zeros = w.prefixes.size();
    const Universe& u = d.universe;
    const std::uint32_t max_prefix_len =
        std::min<std::uint32_t>(static_cast<std::uint32_t>(h), u.time_slots);

    std::size_t zeros = 0;
    std::size_t attempts = 0;
    const std::size_t attempt_cap = 200 * std::max<std::size_t>(target_zeros, 1);
    while (zeros < target_zeros && attempts < attempt_cap) {
        ++attempts;
        const auto len = 1 + static_cast<std::uint32_t>(rng.below(max_prefix_len));
        // pick `len` distinct slots uniformly, ascending
        std::vector<std::uint32_t> slots;
        for (std::uint32_t s = 0; s < u.time_slots; ++s) slots.push_back(s);
        for (std::uint32_t i = 0; i < len; ++i) {
            const auto j = i + static_cast<std::uint32_t>(rng.below(slots.size() - i));
            std::swap(slots[i], slots[j]);
        }
        slots.resize(len);
        std::sort(slots.begin(), slots.end());
        std::vector<STPoint> q;
        for (std::uint32_t i = 0; i < len; ++i)
            q.push_back(STPoint{static_cast<std::uint32_t>(rng.below(u.cell_count())),
                                slots[i]});
        const std::string key = detail::prefix_key(q);
        if (positives.count(key) || seen.count(key)) continue;
        seen.emplace(key, true);
        w.prefixes.push_back(std::move(q));
        ++zeros;
    }
    return w;
}

} // namespace aptb
