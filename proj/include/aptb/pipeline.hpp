#pragma once

// End-to-end publication: mechanism build -> composition-visible ledger ->
// consistency -> released dataset.

#include <stdexcept>
#include <string>

#include "aptb/aptb.hpp"
#include "aptb/baseline.hpp"
#include "aptb/consistency.hpp"

namespace aptb {

enum class Mechanism { aptb, baseline };

inline Mechanism parse_mechanism(const std::string& name) {
    if (name == "aptb") return Mechanism::aptb;
    if (name == "baseline") return Mechanism::baseline;
    throw ConfigError("unknown mechanism '" + name + "' (expected aptb or baseline)");
}

inline const char* to_string(Mechanism m) {
    return m == Mechanism::aptb ? "aptb" : "baseline";
}

struct PublishOutput {
    BuildResult build;
    ConsistentTree consistent;
    Dataset published;
};

inline PublishOutput run_pipeline(const Dataset& d, const AptbConfig& cfg,
                                  Mechanism mechanism) {
    PublishOutput out;
    out.build = mechanism == Mechanism::aptb ? build_noisy_tree(d, cfg)
                                             : build_baseline_tree(d, cfg);
    out.consistent = enforce_consistency(out.build.tree);
    out.published = generate_dataset(out.consistent);
    return out;
}

} // namespace aptb
