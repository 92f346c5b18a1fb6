#pragma once

// Shared fixtures for the test suites.

#include <string>
#include <vector>

#include "aptb/io.hpp"
#include "aptb/trajectory.hpp"

namespace test_helpers {

inline aptb::STPoint P(std::uint32_t cell, std::uint32_t slot) { return {cell, slot}; }

inline aptb::Trajectory traj(std::initializer_list<aptb::STPoint> pts) {
    return aptb::Trajectory{pts};
}

inline std::string data_path(const std::string& name) {
    return std::string(APTB_DATA_DIR) + "/" + name;
}

/// Bundled 15-trajectory sample over seven labels L1..L7, with L_i mapped
/// to (cell i-1, slot i-1); label indices increase along every row, so the
/// mapping preserves slot monotonicity.
inline aptb::Dataset sample_dataset() { return aptb::load_dataset(data_path("sample.traj")); }

/// L_i as a point (1-based).
inline aptb::STPoint L(std::uint32_t i) { return {i - 1, i - 1}; }

} // namespace test_helpers

#include "aptb/prefix_tree.hpp"
#include "aptb/random.hpp"

namespace test_helpers {

namespace fuzz_detail {

inline void grow(aptb::TreeNode& n, std::uint32_t first_slot, aptb::PrefixTree& t,
                 aptb::RandomStream& rng) {
    if (n.depth >= t.height_limit) return;
    for (std::uint32_t s = first_slot; s < t.universe.time_slots; ++s)
        for (std::uint32_t c = 0; c < t.universe.cell_count(); ++c)
            if (rng.below(100) < 40) {
                aptb::TreeNode& child = n.add_child(aptb::STPoint{c, s});
                child.count = -5.0 + 25.0 * rng.uniform01();
                grow(child, s + 1, t, rng);
            }
}

} // namespace fuzz_detail

/// Random slot-monotone tree with arbitrary real counts (negatives and
/// fractions included): raw material for consistency fuzzing.
inline aptb::PrefixTree fuzz_noisy_tree(aptb::RandomStream& rng) {
    aptb::PrefixTree t;
    t.universe = aptb::Universe{2, 2, 4};
    t.height_limit = 3;
    t.root.count = -5.0 + 40.0 * rng.uniform01();
    fuzz_detail::grow(t.root, 0, t, rng);
    return t;
}

} // namespace test_helpers
