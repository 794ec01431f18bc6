#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fsa/fsa.h"

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    int jobs = -1;  // unset
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", opts.overrides,
                    "override a config value as section.key=value (repeatable)");
    cmd->add_option("-j,--jobs", opts.jobs, "worker threads (default 1, deterministic)");
}

// returns the first non-zero status so the process exit code matches the
// engine's error taxonomy: 1 config, 2 data, 3 numeric
int apply_common(fsa_ctx* ctx, const CommonOpts& opts) {
    if (!opts.config_path.empty()) {
        if (int rc = fsa_load_config_file(ctx, opts.config_path.c_str())) return rc;
    }
    for (const std::string& kv : opts.overrides)
        if (int rc = fsa_set(ctx, kv.c_str())) return rc;
    if (opts.jobs >= 0) {
        std::string kv = "jobs=" + std::to_string(opts.jobs);
        if (int rc = fsa_set(ctx, kv.c_str())) return rc;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"predictive horizontal autoscaling: data, training, simulation"};
    app.require_subcommand(1);

    CommonOpts gen_o, repr_o, enc_o, fc_o, cal_o, sim_o, rep_o;
    std::vector<std::string> policies{"fsa", "rule_based", "autopilot_like"};

    add_common(app.add_subcommand("generate", "write a synthetic workload trace"), gen_o);
    add_common(app.add_subcommand("train-repr", "train the multi-scale encoder"), repr_o);
    add_common(app.add_subcommand("encode", "populate the representation store"), enc_o);
    add_common(app.add_subcommand("train-forecast", "train the workload forecaster"), fc_o);
    add_common(app.add_subcommand("train-calib", "train the cpu/workload calibrator"), cal_o);
    CLI::App* sim = app.add_subcommand("simulate", "replay the trace under scaling policies");
    add_common(sim, sim_o);
    sim->add_option("-p,--policies", policies, "policies to run (fsa, rule_based, autopilot_like)")
        ->delimiter(',');
    add_common(app.add_subcommand("report", "print the last simulation summary"), rep_o);

    CLI11_PARSE(app, argc, argv);

    fsa_ctx* ctx = fsa_ctx_create();
    int rc = 0;
    if (app.got_subcommand("generate")) {
        rc = apply_common(ctx, gen_o);
        if (!rc) rc = fsa_cmd_generate(ctx);
    } else if (app.got_subcommand("train-repr")) {
        rc = apply_common(ctx, repr_o);
        if (!rc) rc = fsa_cmd_train_repr(ctx);
    } else if (app.got_subcommand("encode")) {
        rc = apply_common(ctx, enc_o);
        if (!rc) rc = fsa_cmd_encode(ctx);
    } else if (app.got_subcommand("train-forecast")) {
        rc = apply_common(ctx, fc_o);
        if (!rc) rc = fsa_cmd_train_forecast(ctx);
    } else if (app.got_subcommand("train-calib")) {
        rc = apply_common(ctx, cal_o);
        if (!rc) rc = fsa_cmd_train_calib(ctx);
    } else if (app.got_subcommand("simulate")) {
        rc = apply_common(ctx, sim_o);
        if (!rc) {
            std::vector<const char*> names;
            for (const std::string& p : policies) names.push_back(p.c_str());
            rc = fsa_cmd_simulate(ctx, names.data(), static_cast<int>(names.size()));
        }
    } else if (app.got_subcommand("report")) {
        rc = apply_common(ctx, rep_o);
        if (!rc) rc = fsa_cmd_report(ctx);
    }

    if (rc != 0) std::fprintf(stderr, "error: %s\n", fsa_last_error(ctx));
    fsa_ctx_destroy(ctx);
    return rc;
}
