#pragma once

// Mapping from raw (x, y, t) samples to grid cells and time slots. The
// published datasets are always in the discretized form; this is the
// ingestion step in front of it.

#include <cmath>
#include <stdexcept>

#include "aptb/trajectory.hpp"

namespace aptb {

struct SpatialBounds {
    double min_x = 0, min_y = 0, max_x = 1, max_y = 1;

    bool degenerate() const { return !(max_x > min_x) || !(max_y > min_y); }
};

struct EmptyTrajectoryError : std::runtime_error {
    EmptyTrajectoryError() : std::runtime_error("trace is empty after discretization") {}
};

/// Row-major cell of (x, y); samples outside bbox or the slot range [0, T)
/// are dropped. Consecutive samples mapping to the same (cell, slot) collapse
/// to one point; when two retained samples share a slot but differ in cell,
/// the first wins. Output slots strictly increase.
inline Trajectory discretize(const RawTrace& trace, const Universe& u,
                             const SpatialBounds& bbox, double time_origin,
                             double slot_width) {
    if (bbox.degenerate()) throw std::invalid_argument("discretize: degenerate bbox");
    if (!(slot_width > 0)) throw std::invalid_argument("discretize: slot_width must be > 0");

    const double cell_w = (bbox.max_x - bbox.min_x) / u.grid_cols;
    const double cell_h = (bbox.max_y - bbox.min_y) / u.grid_rows;

    Trajectory out;
    for (const auto& s : trace.samples) {
        const double col_f = std::floor((s.x - bbox.min_x) / cell_w);
        const double row_f = std::floor((s.y - bbox.min_y) / cell_h);
        const double slot_f = std::floor((s.t - time_origin) / slot_width);
        if (col_f < 0 || col_f >= u.grid_cols) continue;
        if (row_f < 0 || row_f >= u.grid_rows) continue;
        if (slot_f < 0 || slot_f >= u.time_slots) continue;
        STPoint p{static_cast<std::uint32_t>(row_f) * u.grid_cols +
                      static_cast<std::uint32_t>(col_f),
                  static_cast<std::uint32_t>(slot_f)};
        if (!out.points.empty() && p.slot <= out.points.back().slot)
            continue; // same slot: keep the first cell seen
        out.points.push_back(p);
    }
    if (out.points.empty()) throw EmptyTrajectoryError{};
    return out;
}

} // namespace aptb
