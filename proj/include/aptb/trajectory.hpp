#pragma once

// Core data model: discretized spatio-temporal points, trajectories and
// datasets over a finite (grid x time-slot) universe. Everything here is
// immutable after construction; operations are pure.

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace aptb {

struct STPoint {
    std::uint32_t cell = 0;
    std::uint32_t slot = 0;

    bool operator==(const STPoint&) const = default;
};

/// Canonical (slot, cell) order used for child ordering, traversal and output.
inline bool slot_cell_less(const STPoint& a, const STPoint& b) {
    if (a.slot != b.slot) return a.slot < b.slot;
    return a.cell < b.cell;
}

struct Universe {
    std::uint32_t grid_rows = 1;
    std::uint32_t grid_cols = 1;
    std::uint32_t time_slots = 1;

    std::uint32_t cell_count() const { return grid_rows * grid_cols; }
    std::uint64_t label_count() const {
        return static_cast<std::uint64_t>(cell_count()) * time_slots;
    }
    bool contains(const STPoint& p) const {
        return p.cell < cell_count() && p.slot < time_slots;
    }
    bool operator==(const Universe&) const = default;
};

struct Trajectory {
    std::vector<STPoint> points;

    std::size_t length() const { return points.size(); }
    bool operator==(const Trajectory&) const = default;
};

/// True iff points are within the universe and slots strictly increase.
inline bool valid_trajectory(const Trajectory& t, const Universe& u) {
    if (t.points.empty()) return false;
    for (std::size_t i = 0; i < t.points.size(); ++i) {
        if (!u.contains(t.points[i])) return false;
        if (i > 0 && t.points[i].slot <= t.points[i - 1].slot) return false;
    }
    return true;
}

/// An ordered multiset of trajectories; order is stable so runs reproduce.
struct Dataset {
    Universe universe;
    std::vector<Trajectory> trajectories;

    std::size_t size() const { return trajectories.size(); }
};

struct RawSample {
    double x = 0;
    double y = 0;
    double t = 0; // seconds
};

struct RawTrace {
    std::vector<RawSample> samples; // timestamps non-decreasing
};

/// Exact count of trajectories of each length; entry i holds the count of
/// length i+1. Empty dataset yields an empty histogram.
inline std::vector<std::size_t> length_histogram(const Dataset& d) {
    std::size_t max_len = 0;
    for (const auto& t : d.trajectories) max_len = std::max(max_len, t.length());
    std::vector<std::size_t> hist(max_len, 0);
    for (const auto& t : d.trajectories) ++hist[t.length() - 1];
    return hist;
}

inline std::size_t max_length(const Dataset& d) {
    std::size_t m = 0;
    for (const auto& t : d.trajectories) m = std::max(m, t.length());
    return m;
}

/// Neighboring dataset: d minus the indexed trajectory.
inline Dataset remove_one(const Dataset& d, std::size_t index) {
    if (index >= d.trajectories.size())
        throw std::out_of_range("remove_one: index " + std::to_string(index) +
                                " out of range for dataset of size " +
                                std::to_string(d.trajectories.size()));
    Dataset out;
    out.universe = d.universe;
    out.trajectories.reserve(d.trajectories.size() - 1);
    for (std::size_t i = 0; i < d.trajectories.size(); ++i)
        if (i != index) out.trajectories.push_back(d.trajectories[i]);
    return out;
}

} // namespace aptb
