#pragma once

// Command implementations behind the CLI binary. Kept header-side so tests
// drive the exact code paths the tool runs, including exit codes:
//   0 ok, 2 config error, 3 parse error, 4 ledger-audit failure,
//   5 dpcheck gate failure.

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "aptb/dp_check.hpp"
#include "aptb/io.hpp"
#include "aptb/ledger.hpp"
#include "aptb/manifest.hpp"
#include "aptb/metrics.hpp"
#include "aptb/pipeline.hpp"
#include "aptb/synth.hpp"

namespace aptb {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitParse = 3;
inline constexpr int kExitAudit = 4;
inline constexpr int kExitCheckFail = 5;

namespace detail {

inline double parse_double_strict(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid " + what + " value '" + s + "'");
    }
}

inline std::uint64_t parse_u64_strict(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("invalid " + what + " value '" + s + "'");
    return v;
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream in(s);
    while (std::getline(in, token, sep))
        if (!token.empty()) out.push_back(token);
    return out;
}

inline std::string format_value(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace detail

/// CLI-provided overrides; unset fields fall back to the config file, then
/// to AptbConfig defaults. Seeds never default: reproducibility by decree.
struct ConfigFlags {
    std::optional<double> eps;
    std::optional<int> h;
    std::optional<std::string> delta; // "auto" or a number
    std::optional<double> theta;      // global theta override
    std::optional<double> theta_floor;
    std::optional<double> pre_fraction;
    std::optional<double> split_rank;
    std::optional<double> split_select;
    std::optional<double> split_count;
    std::optional<std::uint64_t> seed;
    bool sonset_observed = false;
};

namespace detail {

inline void apply_config_line(AptbConfig& cfg, const std::string& key,
                              const std::string& value) {
    if (key == "total_eps") cfg.total_eps = parse_double_strict(value, key);
    else if (key == "h_user") cfg.h_user = static_cast<int>(parse_double_strict(value, key));
    else if (key == "pre_fraction") cfg.pre_fraction = parse_double_strict(value, key);
    else if (key == "delta") {
        if (value == "auto") cfg.delta.reset();
        else cfg.delta = parse_double_strict(value, key);
    } else if (key == "theta_floor") cfg.theta_floor = parse_double_strict(value, key);
    else if (key == "theta_override") {
        if (value == "none") cfg.theta_override.reset();
        else cfg.theta_override = parse_double_strict(value, key);
    } else if (key == "split_rank") cfg.split_rank = parse_double_strict(value, key);
    else if (key == "split_select") cfg.split_select = parse_double_strict(value, key);
    else if (key == "split_count") cfg.split_count = parse_double_strict(value, key);
    else if (key == "seed") cfg.seed = parse_u64_strict(value, key);
    else if (key == "sonset") {
        if (value == "observed") cfg.sonset_observed = true;
        else if (value == "universe") cfg.sonset_observed = false;
        else throw ConfigError("sonset must be 'universe' or 'observed'");
    } else throw ConfigError("unknown config key '" + key + "'");
}

} // namespace detail

struct ConfigFileKeys {
    bool eps = false, h = false, seed = false;
};

inline ConfigFileKeys load_config_file(AptbConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    ConfigFileKeys present;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = detail::trim(line);
        if (sv.empty() || sv.front() == '#') continue;
        const auto eq = sv.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value");
        std::string key{detail::trim(sv.substr(0, eq))};
        std::string value{detail::trim(sv.substr(eq + 1))};
        detail::apply_config_line(cfg, key, value);
        if (key == "total_eps") present.eps = true;
        if (key == "h_user") present.h = true;
        if (key == "seed") present.seed = true;
    }
    return present;
}

/// Builds the effective config: defaults <- config file <- CLI flags.
/// need_* marks knobs that have no safe default and must be provided.
inline AptbConfig resolve_config(const std::string& config_path, const ConfigFlags& flags,
                                 bool need_eps, bool need_h, bool need_seed) {
    AptbConfig cfg;
    bool have_eps = false, have_h = false, have_seed = false;
    if (!config_path.empty()) {
        const ConfigFileKeys present = load_config_file(cfg, config_path);
        have_eps = present.eps;
        have_h = present.h;
        have_seed = present.seed;
    }
    if (flags.eps) { cfg.total_eps = *flags.eps; have_eps = true; }
    if (flags.h) { cfg.h_user = *flags.h; have_h = true; }
    if (flags.delta) {
        if (*flags.delta == "auto") cfg.delta.reset();
        else cfg.delta = detail::parse_double_strict(*flags.delta, "delta");
    }
    if (flags.theta) cfg.theta_override = *flags.theta;
    if (flags.theta_floor) cfg.theta_floor = *flags.theta_floor;
    if (flags.pre_fraction) cfg.pre_fraction = *flags.pre_fraction;
    if (flags.split_rank) cfg.split_rank = *flags.split_rank;
    if (flags.split_select) cfg.split_select = *flags.split_select;
    if (flags.split_count) cfg.split_count = *flags.split_count;
    if (flags.seed) { cfg.seed = *flags.seed; have_seed = true; }
    if (flags.sonset_observed) cfg.sonset_observed = true;

    if (need_eps && !have_eps) throw ConfigError("--eps is required (no default)");
    if (need_h && !have_h) throw ConfigError("--h is required (no default)");
    if (need_seed && !have_seed)
        throw ConfigError("--seed is required (seeds never default to the clock)");
    cfg.validate();
    return cfg;
}

inline nlohmann::json config_snapshot(const AptbConfig& cfg) {
    nlohmann::json j;
    j["total_eps"] = cfg.total_eps;
    j["h_user"] = cfg.h_user;
    j["pre_fraction"] = cfg.pre_fraction;
    if (cfg.delta) j["delta"] = *cfg.delta; else j["delta"] = "auto";
    j["theta_floor"] = cfg.theta_floor;
    if (cfg.theta_override) j["theta_override"] = *cfg.theta_override;
    else j["theta_override"] = "none";
    j["split_rank"] = cfg.split_rank;
    j["split_select"] = cfg.split_select;
    j["split_count"] = cfg.split_count;
    j["seed"] = cfg.seed;
    j["sonset"] = cfg.sonset_observed ? "observed" : "universe";
    return j;
}

// ---------------------------------------------------------------- publish

struct PublishArgs {
    std::string input;
    std::string output;
    std::string config_path;
    std::string mechanism = "aptb";
    ConfigFlags flags;
};

/// Audit-then-write tail of publish; split out so the audit-failure path is
/// directly testable. Writes nothing unless the audit passes.
inline int finish_publish(const AptbConfig& cfg, const std::string& mechanism,
                          const std::string& input_path, const std::string& input_content,
                          const BuildResult& result, const std::string& out_path,
                          std::ostream& out, std::ostream& err) {
    const auto audit = verify_composition(result.ledger, result.tree,
                                          Epsilon(cfg.total_eps));
    if (!audit.pass) {
        err << "ledger audit FAILED: max path sum " << audit.max_path_sum
            << " exceeds epsilon " << cfg.total_eps << " at " << audit.max_path
            << "; publication withheld\n";
        return kExitAudit;
    }

    const ConsistentTree consistent = enforce_consistency(result.tree);
    const Dataset published = generate_dataset(consistent);
    const std::string published_text = dataset_to_string(published);
    std::ostringstream ledger_os;
    result.ledger.write(ledger_os);
    const std::string ledger_text = ledger_os.str();

    const std::string ledger_path = out_path + ".ledger";
    const std::string manifest_path = out_path + ".manifest.json";

    RunManifest manifest;
    manifest.command = "publish";
    manifest.config = config_snapshot(cfg);
    manifest.config["mechanism"] = mechanism;
    manifest.inputs.push_back({input_path, fnv1a64_hex(input_content)});
    manifest.seed = cfg.seed;
    manifest.outputs.push_back({out_path, fnv1a64_hex(published_text)});
    manifest.outputs.push_back({ledger_path, fnv1a64_hex(ledger_text)});
    manifest.ledger_max_path_sum = audit.max_path_sum;
    manifest.ledger_pass = audit.pass;
    manifest.ledger_charges = result.ledger.size();
    if (mechanism == "aptb") // the released noisy length statistic
        manifest.config["noisy_max_len"] = result.noisy_max_len;

    atomic_write(out_path, published_text);
    atomic_write(ledger_path, ledger_text);
    atomic_write(manifest_path, manifest.to_string());

    out << "published " << published.size() << " trajectories to " << out_path
        << " (max path sum " << audit.max_path_sum << " <= eps " << cfg.total_eps
        << ")\n";
    return kExitOk;
}

inline int cmd_publish(const PublishArgs& args, std::ostream& out, std::ostream& err) {
    try {
        const AptbConfig cfg = resolve_config(args.config_path, args.flags,
                                              /*eps*/ true, /*h*/ true, /*seed*/ true);
        const Mechanism mech = parse_mechanism(args.mechanism);
        if (args.input.empty() || args.output.empty())
            throw ConfigError("--in and --out are required");
        const std::string input_content = read_file(args.input);
        const Dataset d = parse_dataset(input_content);
        const BuildResult result = mech == Mechanism::aptb ? build_noisy_tree(d, cfg)
                                                           : build_baseline_tree(d, cfg);
        return finish_publish(cfg, args.mechanism, args.input, input_content, result,
                              args.output, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const std::runtime_error& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitParse;
    }
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
    std::string input;
    std::string published;  // compare mode when set
    std::string report_path;
    std::string summary_path;
    std::string mechanisms = "aptb,baseline";
    std::string sweep; // e.g. "eps=0.5,1.0"
    int seeds = 20;
    std::string config_path;
    ConfigFlags flags;
};

namespace detail {

inline std::vector<double> parse_sweep(const std::string& sweep) {
    const std::string prefix = "eps=";
    if (sweep.rfind(prefix, 0) != 0)
        throw ConfigError("--sweep must look like eps=0.5,1.0");
    std::vector<double> eps;
    for (const auto& tok : split_list(sweep.substr(prefix.size()), ','))
        eps.push_back(parse_double_strict(tok, "sweep epsilon"));
    if (eps.empty()) throw ConfigError("--sweep lists no epsilon values");
    return eps;
}

} // namespace detail

inline int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
    try {
        if (args.input.empty()) throw ConfigError("--in is required");
        const bool compare_mode = !args.published.empty();
        if (!compare_mode && args.sweep.empty())
            throw ConfigError("eval needs either --published or --sweep eps=...");
        const AptbConfig cfg = resolve_config(args.config_path, args.flags,
                                              /*eps*/ false, /*h*/ true, /*seed*/ true);

        const Dataset original = load_dataset(args.input);
        RandomStream workload_rng = RandomStream(cfg.seed).derive(0xABCD);
        const QueryWorkload workload = make_workload(original, cfg.h_user, workload_rng);

        std::ostringstream report;
        std::ostringstream summary;
        report << "[eval]\n";
        report << "input = " << args.input << "\n";
        report << "trajectories = " << original.size() << "\n";
        report << "workload_size = " << workload.prefixes.size() << "\n";

        if (compare_mode) {
            const Dataset published = load_dataset(args.published);
            const double are = avg_relative_error(original, published, workload);
            report << "\n[compare]\n";
            report << "published = " << args.published << "\n";
            report << "avg_relative_error = " << detail::format_value(are) << "\n";
            summary << "avg_relative_error\t-\t-\t-\t" << detail::format_value(are) << "\n";
            if (!original.trajectories.empty() && !published.trajectories.empty()) {
                const double l1 = length_distribution_l1(original, published);
                report << "length_distribution_l1 = " << detail::format_value(l1) << "\n";
                summary << "length_distribution_l1\t-\t-\t-\t" << detail::format_value(l1)
                        << "\n";
            }
        } else {
            const auto mechs = detail::split_list(args.mechanisms, ',');
            const auto eps_values = detail::parse_sweep(args.sweep);
            if (mechs.empty()) throw ConfigError("--mechanism lists no mechanisms");
            if (args.seeds < 1) throw ConfigError("--seeds must be >= 1");
            RandomStream master(cfg.seed);

            for (const auto& mech_name : mechs) {
                const Mechanism mech = parse_mechanism(mech_name);
                for (std::size_t ei = 0; ei < eps_values.size(); ++ei) {
                    double sum = 0;
                    for (int si = 0; si < args.seeds; ++si) {
                        AptbConfig run_cfg = cfg;
                        run_cfg.total_eps = eps_values[ei];
                        run_cfg.record_stats = false;
                        // paired across mechanisms: seed depends on (eps, run) only
                        run_cfg.seed =
                            master.derive(ei * static_cast<std::size_t>(args.seeds) +
                                          static_cast<std::size_t>(si))
                                .seed();
                        const PublishOutput po = run_pipeline(original, run_cfg, mech);
                        const double are =
                            avg_relative_error(original, po.published, workload);
                        sum += are;
                        summary << "avg_relative_error\t" << mech_name << '\t'
                                << detail::format_value(eps_values[ei]) << '\t' << si
                                << '\t' << detail::format_value(are) << "\n";
                    }
                    report << "\n[sweep " << mech_name << " eps="
                           << detail::format_value(eps_values[ei]) << "]\n";
                    report << "mean_avg_relative_error = "
                           << detail::format_value(sum / args.seeds) << "\n";
                    report << "seeds = " << args.seeds << "\n";
                }
            }
        }

        if (!args.report_path.empty()) atomic_write(args.report_path, report.str());
        else out << report.str();
        if (!args.summary_path.empty()) atomic_write(args.summary_path, summary.str());
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitParse;
    }
}

// ---------------------------------------------------------------- dpcheck

struct DpCheckArgs {
    std::string input;   // tiny dataset file, or
    std::string fixture; // a bundled fixture name
    long removed = -1;   // default: fixture's pick, else 0
    long trials = 100000;
    std::string mechanism = "aptb";
    bool fault = false; // test harness: inject the double-count-budget bug
    std::string report_path;
    std::string config_path;
    ConfigFlags flags;
};

inline int cmd_dpcheck(const DpCheckArgs& args, std::ostream& out, std::ostream& err) {
    try {
        ConfigFlags flags = args.flags;
        if (!flags.h) flags.h = 2; // tiny-instance box is 2 slots high
        AptbConfig cfg = resolve_config(args.config_path, flags,
                                        /*eps*/ true, /*h*/ false, /*seed*/ true);
        cfg.fault_double_count = args.fault;
        const Mechanism mech = parse_mechanism(args.mechanism);

        Dataset d;
        std::size_t removed = 0;
        if (!args.fixture.empty()) {
            const TinyFixture f = tiny_fixture(args.fixture);
            d = f.data;
            removed = f.removed_index;
        } else if (!args.input.empty()) {
            d = load_dataset(args.input);
        } else {
            throw ConfigError("dpcheck needs --in or --fixture");
        }
        if (args.removed >= 0) removed = static_cast<std::size_t>(args.removed);

        const DpCheckReport report =
            empirical_dp_check(d, removed, cfg, args.trials, mech);

        std::ostringstream body;
        body << "[dpcheck]\n";
        body << "mechanism = " << report.mechanism << "\n";
        body << "epsilon_claimed = " << detail::format_value(report.epsilon_claimed)
             << "\n";
        body << "trials = " << report.trials << "\n";
        body << "outcome_space = " << report.outcome_space << "\n";
        body << "keys_checked = " << report.keys_checked << "\n";
        body << "max_observed_ratio = " << detail::format_value(report.max_observed_ratio)
             << "\n";
        body << "e_epsilon = " << detail::format_value(std::exp(report.epsilon_claimed))
             << "\n";
        body << "worst_key = " << report.worst_key << "\n";
        body << "pass = " << (report.pass ? "true" : "false") << "\n";
        if (!args.report_path.empty()) atomic_write(args.report_path, body.str());
        out << body.str();
        return report.pass ? kExitOk : kExitCheckFail;
    } catch (const PreconditionError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitParse;
    }
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
    long long rows = 0, cols = 0, slots = 0;
    long long n = -1;
    long long max_len = 4;
    double skew = 0;
    std::optional<std::uint64_t> seed;
    std::string output;
};

inline int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
    try {
        if (args.rows < 1 || args.cols < 1 || args.slots < 1)
            throw ConfigError("--rows, --cols and --slots must be >= 1");
        if (args.rows > 0xFFFF || args.cols > 0xFFFF || args.slots > 0xFFFFFFFFLL ||
            args.rows * args.cols > 0xFFFFFFFFLL)
            throw ConfigError("universe dimensions are too large");
        if (args.n < 0) throw ConfigError("--n must be >= 0");
        if (args.max_len < 1) throw ConfigError("--max-len must be >= 1");
        if (!args.seed) throw ConfigError("--seed is required (seeds never default)");
        if (args.output.empty()) throw ConfigError("--out is required");
        if (!std::isfinite(args.skew)) throw ConfigError("--skew must be finite");

        const Universe u{static_cast<std::uint32_t>(args.rows),
                         static_cast<std::uint32_t>(args.cols),
                         static_cast<std::uint32_t>(args.slots)};
        const Dataset d = synth_dataset(u, static_cast<std::size_t>(args.n),
                                        static_cast<int>(args.max_len), args.skew,
                                        *args.seed);
        atomic_write(args.output, dataset_to_string(d));
        out << "wrote " << d.size() << " trajectories to " << args.output << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitParse;
    }
}

} // namespace aptb
