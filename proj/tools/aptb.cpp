// Command-line entry point: publish / eval / dpcheck / synth.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "aptb/cli_commands.hpp"

namespace {

void add_config_flags(CLI::App* cmd, aptb::ConfigFlags& flags, std::string& config_path) {
    cmd->set_help_flag("--help", "print help"); // frees -h / --h for the height flag
    cmd->add_option("--config", config_path, "config file (key = value lines)");
    cmd->add_option("--eps", flags.eps, "total privacy budget epsilon");
    cmd->add_option("--h", flags.h, "tree height cap");
    cmd->add_option("--delta", flags.delta, "outlier distance ('auto' or a number)");
    cmd->add_option("--theta", flags.theta, "fix the noise threshold globally");
    cmd->add_option("--theta-floor", flags.theta_floor, "lower bound for derived thresholds");
    cmd->add_option("--pre-fraction", flags.pre_fraction,
                    "budget share spent on preprocessing (default 0.1)");
    cmd->add_option("--split-rank", flags.split_rank, "node budget share: rank noise");
    cmd->add_option("--split-select", flags.split_select, "node budget share: merge selection");
    cmd->add_option("--split-count", flags.split_count, "node budget share: count noise");
    cmd->add_option("--seed", flags.seed, "random seed (required; never defaults)");
    cmd->add_flag("--sonset-observed", flags.sonset_observed,
                  "restrict candidate children to observed labels (NOT private; experiments only)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentially private spatio-temporal trajectory publishing (APTB)"};
    app.set_help_flag("--help", "print help");
    app.require_subcommand(1);

    aptb::PublishArgs publish;
    auto* pub = app.add_subcommand("publish", "build a noisy prefix tree and release a dataset");
    pub->add_option("--in", publish.input, "input dataset file");
    pub->add_option("--out", publish.output, "published dataset file");
    pub->add_option("--mechanism", publish.mechanism, "aptb or baseline (default aptb)");
    add_config_flags(pub, publish.flags, publish.config_path);

    aptb::EvalArgs eval;
    auto* ev = app.add_subcommand("eval", "utility metrics for published datasets");
    ev->add_option("--in", eval.input, "original dataset file");
    ev->add_option("--published", eval.published, "published dataset file (compare mode)");
    ev->add_option("--out", eval.report_path, "report file (default: stdout)");
    ev->add_option("--summary", eval.summary_path, "machine-readable summary file");
    ev->add_option("--mechanism", eval.mechanisms, "comma list for sweep mode (default aptb,baseline)");
    ev->add_option("--sweep", eval.sweep, "sweep mode, e.g. eps=0.5,1.0");
    ev->add_option("--seeds", eval.seeds, "runs per (mechanism, epsilon) in sweep mode");
    add_config_flags(ev, eval.flags, eval.config_path);

    aptb::DpCheckArgs dpcheck;
    auto* dc = app.add_subcommand("dpcheck", "empirical differential-privacy check on a tiny dataset");
    dc->add_option("--in", dpcheck.input, "tiny dataset file (<= 4 trajectories, 2x2x2 box)");
    dc->add_option("--fixture", dpcheck.fixture, "bundled fixture name");
    dc->add_option("--removed", dpcheck.removed, "index of the trajectory removed in the neighbor");
    dc->add_option("--trials", dpcheck.trials, "pipeline runs per side (>= 10^4)");
    dc->add_option("--mechanism", dpcheck.mechanism, "aptb or baseline");
    dc->add_option("--out", dpcheck.report_path, "report file");
    dc->add_flag("--fault", dpcheck.fault,
                 "test harness: run with the seeded double-budget bug (should fail)");
    add_config_flags(dc, dpcheck.flags, dpcheck.config_path);

    aptb::SynthArgs synth;
    auto* sy = app.add_subcommand("synth", "generate a synthetic dataset");
    sy->set_help_flag("--help", "print help");
    sy->add_option("--rows", synth.rows, "grid rows");
    sy->add_option("--cols", synth.cols, "grid cols");
    sy->add_option("--slots", synth.slots, "time slots");
    sy->add_option("--n", synth.n, "number of trajectories");
    sy->add_option("--max-len", synth.max_len, "max trajectory length (default 4)");
    sy->add_option("--skew", synth.skew, "cell popularity power-law exponent (0 = uniform)");
    sy->add_option("--seed", synth.seed, "random seed (required)");
    sy->add_option("--out", synth.output, "output dataset file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : aptb::kExitConfig;
    }

    if (pub->parsed()) return aptb::cmd_publish(publish, std::cout, std::cerr);
    if (ev->parsed()) return aptb::cmd_eval(eval, std::cout, std::cerr);
    if (dc->parsed()) return aptb::cmd_dpcheck(dpcheck, std::cout, std::cerr);
    if (sy->parsed()) return aptb::cmd_synth(synth, std::cout, std::cerr);
    return aptb::kExitConfig;
}
