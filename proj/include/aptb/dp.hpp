#pragma once

// Differential-privacy primitives: Laplace sampling via the inverse CDF
// (deterministic given the stream, identical across platforms) and the
// exponential mechanism with the standard exp(eps * score / (2 * delta))
// weighting.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "aptb/random.hpp"

namespace aptb {

/// Privacy budget; strictly positive and finite by construction.
struct Epsilon {
    double value;

    explicit Epsilon(double v) : value(v) {
        if (!(v > 0) || !std::isfinite(v))
            throw std::invalid_argument("epsilon must be a positive finite real");
    }
};

/// Inverse-CDF kernel: maps u in (0,1) to a Laplace(0, scale) draw.
/// sign(u - 1/2) * (-scale * ln(1 - 2|u - 1/2|)).
inline double laplace_from_uniform(double scale, double u) {
    const double half = u - 0.5;
    if (half == 0.0) return 0.0;
    const double mag = -scale * std::log(1.0 - 2.0 * std::abs(half));
    return half > 0 ? mag : -mag;
}

/// One Laplace(0, scale) draw. Callers pass scale = sensitivity / eps.
inline double laplace(double scale, RandomStream& rng) {
    if (!(scale > 0)) throw std::invalid_argument("laplace: scale must be > 0");
    return laplace_from_uniform(scale, rng.uniform_open01());
}

/// Selects index i with probability proportional to
/// exp(eps * scores[i] / (2 * sensitivity)). Scores are shifted by their
/// maximum before exponentiation; the distribution is shift-invariant.
inline std::size_t exp_mechanism(std::span<const double> scores, Epsilon eps,
                                 double sensitivity, RandomStream& rng) {
    if (scores.empty()) throw std::invalid_argument("exp_mechanism: no candidates");
    if (!(sensitivity > 0)) throw std::invalid_argument("exp_mechanism: sensitivity must be > 0");
    if (scores.size() == 1) return 0;

    double max_score = -std::numeric_limits<double>::infinity();
    for (double s : scores) max_score = std::max(max_score, s);

    const double beta = eps.value / (2.0 * sensitivity);
    std::vector<double> weights(scores.size());
    double total = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        weights[i] = std::exp(beta * (scores[i] - max_score));
        total += weights[i];
    }

    const double target = rng.uniform_open01() * total;
    double acc = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        acc += weights[i];
        if (target <= acc) return i;
    }
    return scores.size() - 1; // guards against accumulated rounding
}

/// Degenerate zero-noise selection used by the infinite-budget test hooks:
/// the highest score wins, first index on ties.
inline std::size_t argmax_first(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("argmax_first: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

} // namespace aptb
