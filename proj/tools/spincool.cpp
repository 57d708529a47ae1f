/*
   Copyright 2026 The spincool Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// spincool: command-line driver.
//
//   spincool simulate   --config cfg.json [--set key=value ...]
//   spincool sweep      --g-min -2 --g-max 0 --g-step 0.125
//   spincool optimize   --rounds 2
//   spincool covariance --preset paper-one-round --gain -0.75
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spincool/spincool.hpp"

namespace fs = std::filesystem;
using namespace spincool;

namespace {

constexpr int kExitConfig  = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string engine;
    std::string preset;
    std::vector<double> gains;
    long long trials = -1;
    long long seed = -1;
    std::string output_dir;
    unsigned threads = 0;
};

void add_common(CLI::App *cmd, CommonOptions &o) {
    cmd->add_option("-c,--config", o.config_path, "JSON run configuration");
    cmd->add_option("--set", o.overrides, "Override a config key: dotted.key=value")->allow_extra_args(false);
    cmd->add_option("--engine", o.engine, "mc, moments or both");
    cmd->add_option("--preset", o.preset, "paper-one-round, paper-two-round or no-atoms");
    cmd->add_option("--gain", o.gains, "Normalized gain per feedback round (repeatable)")->allow_extra_args(false);
    cmd->add_option("--trials", o.trials, "Monte Carlo trials");
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("-o,--output-dir", o.output_dir, "Output directory (default $SPINCOOL_OUTPUT_DIR or .)");
    cmd->add_option("--threads", o.threads, "Worker threads (0 = available parallelism)");
}

std::string read_file(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError("cannot read config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunConfig resolve(const CommonOptions &o) {
    std::vector<std::string> overrides = o.overrides;
    if (!o.engine.empty())
        overrides.push_back("engine=\"" + o.engine + "\"");
    if (!o.preset.empty())
        overrides.push_back("schedule=\"" + o.preset + "\"");
    if (!o.gains.empty()) {
        std::string list = "[";
        for (std::size_t i = 0; i < o.gains.size(); ++i)
            list += (i ? "," : "") + format_double(o.gains[i]);
        overrides.push_back("gains=" + list + "]");
    }
    if (o.trials >= 0)
        overrides.push_back("n_trials=" + std::to_string(o.trials));
    if (o.seed >= 0)
        overrides.push_back("master_seed=" + std::to_string(o.seed));

    RunConfig c = load_config(o.config_path.empty() ? std::string() : read_file(o.config_path), overrides);
    if (!o.output_dir.empty())
        c.output_dir = o.output_dir;
    else if (c.output_dir.empty()) {
        const char *env = std::getenv("SPINCOOL_OUTPUT_DIR");
        c.output_dir = env && *env ? env : ".";
    }
    for (const auto &w : model_warnings(c.params))
        std::cerr << "warning: " << w << "\n";
    fs::create_directories(c.output_dir);
    return c;
}

std::string path_in(const RunConfig &c, const std::string &name) { return (fs::path(c.output_dir) / name).string(); }

json document(const RunConfig &c) {
    json j;
    j["version"] = kVersion;
    j["config"] = config_json(c);
    return j;
}

std::string trials_csv(const json &config, const McRun &run) {
    std::vector<std::string> cols{"trial",     "input_x",   "input_y",   "input_z", "readout_x",
                                  "readout_y", "readout_z", "final_x",   "final_y", "final_z"};
    cols.insert(cols.end(), run.record_labels.begin(), run.record_labels.end());
    CsvWriter w(config, cols);
    for (Eigen::Index i = 0; i < run.input_spins.rows(); ++i) {
        std::vector<double> vals;
        for (const MatrixXd *m : {&run.input_spins, &run.readout_spins, &run.final_spins, &run.records})
            for (Eigen::Index k = 0; k < m->cols(); ++k)
                vals.push_back((*m)(i, k));
        w.row(vals, std::to_string(i));
    }
    return w.str();
}

int cmd_simulate(const CommonOptions &o) {
    const RunConfig c = resolve(o);
    const json cfg = config_json(c);
    json doc = document(c);
    const bool do_mc = c.engine != EngineChoice::moments;
    const bool do_moments = c.engine != EngineChoice::mc;

    RunSummary mc, mom;
    if (do_mc) {
        const auto run = run_trials(c.params, c.schedule, c.n_trials, c.master_seed, o.threads);
        mc = summarize_trials(run, c.params.probe);
        doc["summaries"]["mc"] = summary_json(mc);
        write_text(path_in(c, "trials.csv"), trials_csv(cfg, run));
        write_text(path_in(c, "record_covariance.csv"), matrix_csv(cfg, mc.record_labels, mc.record_cov));
    }
    if (do_moments) {
        mom = summarize_moments(c.params, c.schedule);
        doc["summaries"]["moments"] = summary_json(mom);
        write_text(path_in(c, do_mc ? "record_covariance_moments.csv" : "record_covariance.csv"),
                   matrix_csv(cfg, mom.record_labels, mom.record_cov));
    }
    if (do_mc && do_moments) {
        const double diff = mc.total_variance - mom.total_variance;
        doc["comparison"] = {{"total_variance_difference", diff},
                             {"standard_errors", number_json(diff / mc.total_variance_se)}};
    }
    write_text(path_in(c, "summary.json"), doc.dump(2) + "\n");
    std::cout << "wrote " << path_in(c, "summary.json") << "\n";
    return 0;
}

int cmd_sweep(const CommonOptions &o, double g_min, double g_max, double g_step) {
    const RunConfig c = resolve(o);
    const json cfg = config_json(c);
    const auto grid = gain_grid(g_min, g_max, g_step);
    const ScheduleBuilder builder = [&](double g) { return with_last_feedback_gain(c.schedule, g); };
    const double input = total_variance(SpinMoments{c.params.initial_mean, c.params.initial_covariance});

    json doc = document(c);
    doc["grid"] = {{"g_min", g_min}, {"g_max", g_max}, {"g_step", g_step}};
    const auto run_one = [&](EngineKind kind, const std::string &csv_name, const std::string &key) {
        EngineOptions e{kind, c.n_trials, c.master_seed, o.threads};
        const auto sweep = sweep_gain(c.params, builder, grid, e);
        write_text(path_in(c, csv_name), sweep_csv(cfg, sweep, input));
        const auto best = sweep[sweep_argmin(sweep)];
        doc[key] = {{"argmin_g", best.g}, {"min_total_variance", best.total_variance}, {"std_err", best.std_err},
                    {"db_vs_input", db_reduction(input, best.total_variance)}};
    };
    if (c.engine == EngineChoice::mc) {
        run_one(EngineKind::mc, "sweep.csv", "mc");
    } else {
        run_one(EngineKind::moments, "sweep.csv", "moments");
        if (c.engine == EngineChoice::both)
            run_one(EngineKind::mc, "sweep_mc.csv", "mc");
    }
    write_text(path_in(c, "sweep.json"), doc.dump(2) + "\n");
    std::cout << "wrote " << path_in(c, "sweep.csv") << "\n";
    return 0;
}

int cmd_optimize(const CommonOptions &o, std::size_t rounds) {
    const RunConfig c = resolve(o);
    const EngineOptions e{c.engine == EngineChoice::mc ? EngineKind::mc : EngineKind::moments, c.n_trials,
                          c.master_seed, o.threads};
    const auto r = optimize_gains(c.params, rounds, e);
    json doc = document(c);
    doc["engine"] = e.kind == EngineKind::mc ? "mc" : "moments";
    doc["input_variance"] = r.variances.front();
    json rounds_json = json::array();
    for (std::size_t i = 0; i < r.gains.size(); ++i) {
        rounds_json.push_back({{"round", i + 1},
                               {"g", r.gains[i]},
                               {"total_variance", r.variances[i + 1]},
                               {"db_vs_input", db_reduction(r.variances.front(), r.variances[i + 1])},
                               {"bracketed", static_cast<bool>(r.bracketed[i])}});
        if (!r.bracketed[i])
            std::cerr << "warning: round " << i + 1 << " optimum not bracketed; grid minimum reported\n";
    }
    doc["rounds"] = rounds_json;
    doc["variance_trajectory"] = r.variances;
    doc["db_total"] = db_reduction(r.variances.front(), r.variances.back());
    doc["volume_factor_total"] = volume_factor(r.variances.front(), r.variances.back());
    write_text(path_in(c, "gains.json"), doc.dump(2) + "\n");
    std::cout << "wrote " << path_in(c, "gains.json") << "\n";
    return 0;
}

int cmd_covariance(const CommonOptions &o) {
    const RunConfig c = resolve(o);
    const json cfg = config_json(c);
    const RunSummary s = c.engine == EngineChoice::mc
                             ? run_ensemble(c.params, c.schedule, c.n_trials, c.master_seed, o.threads)
                             : summarize_moments(c.params, c.schedule);
    write_text(path_in(c, "record_covariance.csv"), matrix_csv(cfg, s.record_labels, s.record_cov));
    write_text(path_in(c, "record_correlation.csv"),
               matrix_csv(cfg, s.record_labels, correlation_matrix(s.record_cov)));
    std::cout << "wrote " << path_in(c, "record_covariance.csv") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Feedback cooling of a collective atomic spin: Monte Carlo and moment simulations"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonOptions sim_o, sweep_o, opt_o, cov_o;
    auto *sim = app.add_subcommand("simulate", "Run one schedule and write summary.json, record_covariance.csv, trials.csv");
    add_common(sim, sim_o);

    double g_min = -2.0, g_max = 0.0, g_step = 0.125;
    auto *sweep = app.add_subcommand("sweep", "Sweep the last round's normalized gain; write sweep.csv and sweep.json");
    add_common(sweep, sweep_o);
    sweep->add_option("--g-min", g_min, "Lowest gain");
    sweep->add_option("--g-max", g_max, "Highest gain");
    sweep->add_option("--g-step", g_step, "Grid step");

    std::size_t rounds = 2;
    auto *opt = app.add_subcommand("optimize", "Greedy per-round gain optimization; write gains.json");
    add_common(opt, opt_o);
    opt->add_option("--rounds", rounds, "Number of feedback rounds")->check(CLI::PositiveNumber);

    auto *cov = app.add_subcommand("covariance", "Write the record covariance and correlation matrices");
    add_common(cov, cov_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*sim)
            return cmd_simulate(sim_o);
        if (*sweep) {
            if (!(g_min < g_max) && g_min != g_max)
                throw ConfigError("--g-min must not exceed --g-max");
            if (!(g_step > 0.0))
                throw ConfigError("--g-step must be positive");
            return cmd_sweep(sweep_o, g_min, g_max, g_step);
        }
        if (*opt)
            return cmd_optimize(opt_o, rounds);
        if (*cov)
            return cmd_covariance(cov_o);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParamError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
