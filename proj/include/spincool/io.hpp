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

#pragma once

// JSON run configuration, presets, and result serialization (JSON + CSV).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spincool/analysis.hpp"
#include "spincool/core.hpp"
#include "spincool/protocol.hpp"
#include "spincool/schedule.hpp"

namespace spincool {

using json = nlohmann::json;

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- scalars --------------------------------------------------------------

/// Non-finite values are written as null (JSON has no infinity).
inline json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_from(const json &j, const std::string &path, double null_value) {
    if (j.is_null())
        return null_value;
    if (!j.is_number())
        throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

inline json vec_json(const Eigen::VectorXd &v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        a.push_back(number_json(v[i]));
    return a;
}

inline json mat_json(const Eigen::MatrixXd &m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        a.push_back(vec_json(m.row(i).transpose()));
    return a;
}

inline Vec3 vec3_from(const json &j, const std::string &path) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError(path + ": expected an array of 3 numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i)
        v[i] = number_from(j[i], path, std::numeric_limits<double>::quiet_NaN());
    return v;
}

inline Mat3 mat3_from(const json &j, const std::string &path) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError(path + ": expected a 3x3 nested array");
    Mat3 m;
    for (int i = 0; i < 3; ++i)
        m.row(i) = vec3_from(j[i], path).transpose();
    return m;
}

// ---- parameters -----------------------------------------------------------

inline const char *to_string(DephasingModel m) { return m == DephasingModel::decay ? "decay" : "printed"; }
inline const char *to_string(InitialStateMode m) { return m == InitialStateMode::gaussian ? "gaussian" : "procedural"; }

inline json params_json(const ExperimentParams &p) {
    json j;
    j["ensemble"] = {{"n_atoms", p.ensemble.n_atoms}, {"f_spin", p.ensemble.f_spin}};
    j["probe"] = {{"kappa1", p.probe.kappa1},
                  {"n_photons", p.probe.n_photons},
                  {"pulse_duration", p.probe.pulse_duration},
                  {"shot_noise_variance_factor", p.probe.shot_noise_variance_factor}};
    j["field"] = {{"larmor_period", p.field.larmor_period},
                  {"t2_transverse", number_json(p.field.t2_transverse)},
                  {"latency", p.field.latency},
                  {"axis", vec_json(p.field.axis)}};
    j["noise"] = {{"alpha0", number_json(p.noise.alpha0)},
                  {"feedback_noise_coeff", p.noise.feedback_noise_coeff},
                  {"enable_backaction", p.noise.enable_backaction},
                  {"enable_spont", p.noise.enable_spont},
                  {"enable_dephasing_noise", p.noise.enable_dephasing_noise},
                  {"enable_feedback_noise", p.noise.enable_feedback_noise},
                  {"dephasing_model", to_string(p.noise.dephasing_model)},
                  {"polarization_threshold", p.noise.polarization_threshold},
                  {"feedback_quantum", p.noise.feedback_quantum}};
    j["initial_state"] = {{"mean", vec_json(p.initial_mean)},
                          {"covariance", mat_json(p.initial_covariance)},
                          {"mode", to_string(p.initial_mode)}};
    return j;
}

namespace detail {

template <class F>
void read_section(const json &root, const char *section, F &&body) {
    if (!root.contains(section))
        return;
    const json &s = root.at(section);
    if (!s.is_object())
        throw ConfigError(std::string(section) + ": expected an object");
    body(s);
}

inline void read_number(const json &s, const std::string &section, const char *key, double &out,
                        double null_value = std::numeric_limits<double>::quiet_NaN()) {
    if (s.contains(key))
        out = number_from(s.at(key), section + "." + key, null_value);
}

inline void read_bool(const json &s, const std::string &section, const char *key, bool &out) {
    if (!s.contains(key))
        return;
    if (!s.at(key).is_boolean())
        throw ConfigError(section + "." + key + ": expected true/false");
    out = s.at(key).get<bool>();
}

}  // namespace detail

/// Overlays the sections present in `j` onto `p`.  Unknown keys are rejected.
inline ExperimentParams params_from_json(const json &j, ExperimentParams p = {}) {
    const auto check_keys = [](const json &s, const std::string &section, std::initializer_list<const char *> keys) {
        for (auto it = s.begin(); it != s.end(); ++it) {
            bool ok = false;
            for (const char *k : keys)
                ok = ok || it.key() == k;
            if (!ok)
                throw ConfigError(section + "." + it.key() + ": unknown key");
        }
    };
    const double inf = std::numeric_limits<double>::infinity();
    detail::read_section(j, "ensemble", [&](const json &s) {
        check_keys(s, "ensemble", {"n_atoms", "f_spin"});
        detail::read_number(s, "ensemble", "n_atoms", p.ensemble.n_atoms);
        detail::read_number(s, "ensemble", "f_spin", p.ensemble.f_spin);
    });
    detail::read_section(j, "probe", [&](const json &s) {
        check_keys(s, "probe", {"kappa1", "n_photons", "pulse_duration", "shot_noise_variance_factor"});
        detail::read_number(s, "probe", "kappa1", p.probe.kappa1);
        detail::read_number(s, "probe", "n_photons", p.probe.n_photons);
        detail::read_number(s, "probe", "pulse_duration", p.probe.pulse_duration);
        detail::read_number(s, "probe", "shot_noise_variance_factor", p.probe.shot_noise_variance_factor);
    });
    detail::read_section(j, "field", [&](const json &s) {
        check_keys(s, "field", {"larmor_period", "t2_transverse", "latency", "axis"});
        detail::read_number(s, "field", "larmor_period", p.field.larmor_period);
        detail::read_number(s, "field", "t2_transverse", p.field.t2_transverse, inf);
        detail::read_number(s, "field", "latency", p.field.latency);
        if (s.contains("axis"))
            p.field.axis = vec3_from(s.at("axis"), "field.axis");
    });
    detail::read_section(j, "noise", [&](const json &s) {
        check_keys(s, "noise",
                   {"alpha0", "feedback_noise_coeff", "enable_backaction", "enable_spont", "enable_dephasing_noise",
                    "enable_feedback_noise", "dephasing_model", "polarization_threshold", "feedback_quantum"});
        detail::read_number(s, "noise", "alpha0", p.noise.alpha0, inf);
        detail::read_number(s, "noise", "feedback_noise_coeff", p.noise.feedback_noise_coeff);
        detail::read_bool(s, "noise", "enable_backaction", p.noise.enable_backaction);
        detail::read_bool(s, "noise", "enable_spont", p.noise.enable_spont);
        detail::read_bool(s, "noise", "enable_dephasing_noise", p.noise.enable_dephasing_noise);
        detail::read_bool(s, "noise", "enable_feedback_noise", p.noise.enable_feedback_noise);
        detail::read_number(s, "noise", "polarization_threshold", p.noise.polarization_threshold);
        detail::read_number(s, "noise", "feedback_quantum", p.noise.feedback_quantum);
        if (s.contains("dephasing_model")) {
            const auto m = s.at("dephasing_model");
            if (m == "decay")
                p.noise.dephasing_model = DephasingModel::decay;
            else if (m == "printed")
                p.noise.dephasing_model = DephasingModel::printed;
            else
                throw ConfigError("noise.dephasing_model: expected \"decay\" or \"printed\"");
        }
    });
    detail::read_section(j, "initial_state", [&](const json &s) {
        check_keys(s, "initial_state", {"mean", "covariance", "mode"});
        if (s.contains("mean"))
            p.initial_mean = vec3_from(s.at("mean"), "initial_state.mean");
        if (s.contains("covariance"))
            p.initial_covariance = mat3_from(s.at("covariance"), "initial_state.covariance");
        if (s.contains("mode")) {
            const auto m = s.at("mode");
            if (m == "gaussian")
                p.initial_mode = InitialStateMode::gaussian;
            else if (m == "procedural")
                p.initial_mode = InitialStateMode::procedural;
            else
                throw ConfigError("initial_state.mode: expected \"gaussian\" or \"procedural\"");
        }
    });
    return p;
}

// ---- schedule -------------------------------------------------------------

inline json schedule_json(const Schedule &s) {
    json a = json::array();
    for (const auto &ph : s.phases()) {
        std::string axes;
        for (Axis ax : ph.axes)
            axes.push_back(axis_label(ax));
        a.push_back({{"kind", ph.kind == PhaseKind::measure_only ? "measure_only" : "measure_feedback"},
                     {"axes", axes},
                     {"normalized_gain", ph.normalized_gain}});
    }
    return a;
}

inline Schedule schedule_from_json(const json &j) {
    if (!j.is_array())
        throw ConfigError("schedule: expected a preset name or a list of phases");
    std::vector<Phase> phases;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json &e = j[i];
        const std::string where = "schedule[" + std::to_string(i) + "]";
        if (!e.is_object())
            throw ConfigError(where + ": expected an object");
        Phase ph;
        const std::string kind = e.value("kind", "");
        if (kind == "measure_only")
            ph.kind = PhaseKind::measure_only;
        else if (kind == "measure_feedback")
            ph.kind = PhaseKind::measure_feedback;
        else
            throw ConfigError(where + ".kind: expected measure_only or measure_feedback");
        if (e.contains("axes")) {
            ph.axes.clear();
            const json &ax = e.at("axes");
            try {
                if (ax.is_string()) {
                    for (char c : ax.get<std::string>())
                        ph.axes.push_back(parse_axis(c));
                } else if (ax.is_array()) {
                    for (const auto &a : ax) {
                        const auto str = a.get<std::string>();
                        if (str.size() != 1)
                            throw std::invalid_argument("axis labels are single characters");
                        ph.axes.push_back(parse_axis(str[0]));
                    }
                } else {
                    throw std::invalid_argument("expected a string or list of labels");
                }
            } catch (const std::exception &ex) {
                throw ConfigError(where + ".axes: " + ex.what());
            }
        }
        if (e.contains("normalized_gain"))
            ph.normalized_gain = number_from(e.at("normalized_gain"), where + ".normalized_gain", NAN);
        phases.push_back(std::move(ph));
    }
    try {
        return Schedule(std::move(phases));
    } catch (const std::invalid_argument &ex) {
        throw ConfigError(ex.what());
    }
}

/// Copy of `s` with the gain of its last feedback phase replaced.
inline Schedule with_last_feedback_gain(const Schedule &s, double g) {
    std::vector<Phase> phases = s.phases();
    for (auto it = phases.rbegin(); it != phases.rend(); ++it) {
        if (it->kind == PhaseKind::measure_feedback) {
            it->normalized_gain = g;
            return Schedule(std::move(phases));
        }
    }
    throw ConfigError("schedule has no feedback phase to sweep");
}

// ---- run configuration ----------------------------------------------------

enum class EngineChoice { mc, moments, both };

inline const char *to_string(EngineChoice e) {
    switch (e) {
    case EngineChoice::mc: return "mc";
    case EngineChoice::moments: return "moments";
    case EngineChoice::both: return "both";
    }
    return "?";
}

struct RunConfig {
    ExperimentParams params = calibrated_params();
    std::string preset = "paper-one-round";  // empty for an explicit schedule
    std::vector<double> gains;
    Schedule schedule;
    EngineChoice engine = EngineChoice::both;
    std::size_t n_trials = 10000;
    std::uint64_t master_seed = 2014;
    std::string output_dir;  // empty: CLI flag, then $SPINCOOL_OUTPUT_DIR, then "."
};

inline const std::vector<std::string> &preset_names() {
    static const std::vector<std::string> names{"paper-one-round", "paper-two-round", "no-atoms"};
    return names;
}

/// Expands `preset` into a schedule (and, for "no-atoms", an empty trap).
inline void apply_preset(RunConfig &c) {
    if (c.preset.empty())
        return;
    if (c.preset == "paper-one-round") {
        if (c.gains.empty())
            c.gains = {-0.75};
        if (c.gains.size() != 1)
            throw ConfigError("gains: paper-one-round takes exactly one gain");
    } else if (c.preset == "paper-two-round") {
        if (c.gains.empty())
            c.gains = {-0.75, -0.5};
        if (c.gains.size() != 2)
            throw ConfigError("gains: paper-two-round takes exactly two gains");
    } else if (c.preset == "no-atoms") {
        c.gains = {0.0};
        c.params.ensemble.n_atoms = 0.0;
        c.params.initial_covariance.setZero();
        c.params.initial_mean.setZero();
    } else {
        throw ConfigError("schedule: unknown preset \"" + c.preset + "\"");
    }
    c.schedule = characterization_schedule(c.gains);
}

/// Full resolved configuration, excluding output location and thread count
/// so that it can be embedded in reproducible outputs.
inline json config_json(const RunConfig &c) {
    json j = params_json(c.params);
    j["schedule"] = c.preset.empty() ? schedule_json(c.schedule) : json(c.preset);
    j["gains"] = c.gains;
    j["resolved_schedule"] = schedule_json(c.schedule);
    j["engine"] = to_string(c.engine);
    j["n_trials"] = c.n_trials;
    j["master_seed"] = c.master_seed;
    return j;
}

/// Sets `value` at a dotted path ("probe.n_photons").  The value is parsed as
/// JSON when possible and kept as a string otherwise.
inline void set_dotted(json &root, const std::string &path, const std::string &value) {
    if (path.empty())
        throw ConfigError("--set: empty key");
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded())
        parsed = value;
    json *node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty())
            throw ConfigError("--set: malformed key \"" + path + "\"");
        if (!node->is_object())
            throw ConfigError("--set: \"" + path + "\" descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            return;
        }
        node = &(*node)[key];
        if (node->is_null())
            *node = json::object();
        start = dot + 1;
    }
}

inline RunConfig config_from_json(const json &j) {
    if (!j.is_object())
        throw ConfigError("config: top level must be an object");
    static const std::vector<std::string> known{"ensemble", "probe",  "field",    "noise",       "initial_state",
                                                "schedule", "gains",  "engine",   "n_trials",    "master_seed",
                                                "output_dir", "resolved_schedule"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError(it.key() + ": unknown key");

    RunConfig c;
    c.params = params_from_json(j, c.params);
    if (j.contains("gains")) {
        if (!j.at("gains").is_array())
            throw ConfigError("gains: expected a list of numbers");
        c.gains.clear();
        for (const auto &g : j.at("gains"))
            c.gains.push_back(number_from(g, "gains", NAN));
    }
    if (j.contains("schedule")) {
        const json &s = j.at("schedule");
        if (s.is_string()) {
            c.preset = s.get<std::string>();
        } else {
            c.preset.clear();
            c.schedule = schedule_from_json(s);
        }
    }
    apply_preset(c);
    if (j.contains("engine")) {
        const auto e = j.at("engine");
        if (e == "mc")
            c.engine = EngineChoice::mc;
        else if (e == "moments")
            c.engine = EngineChoice::moments;
        else if (e == "both")
            c.engine = EngineChoice::both;
        else
            throw ConfigError("engine: expected mc, moments or both");
    }
    if (j.contains("n_trials")) {
        if (!j.at("n_trials").is_number_integer() || j.at("n_trials").get<std::int64_t>() < 2)
            throw ConfigError("n_trials: expected an integer >= 2");
        c.n_trials = j.at("n_trials").get<std::size_t>();
    }
    if (j.contains("master_seed")) {
        if (!j.at("master_seed").is_number_integer())
            throw ConfigError("master_seed: expected an integer");
        c.master_seed = j.at("master_seed").get<std::uint64_t>();
    }
    if (j.contains("output_dir"))
        c.output_dir = j.at("output_dir").get<std::string>();
    try {
        c.params.validate();
    } catch (const ParamError &e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// Parses and merges a config document with `--set key=value` overrides.
inline RunConfig load_config(const std::string &text, const std::vector<std::string> &overrides) {
    json j = text.empty() ? json::object() : json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw ConfigError("config: invalid JSON");
    for (const auto &o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got \"" + o + "\"");
        set_dotted(j, o.substr(0, eq), o.substr(eq + 1));
    }
    return config_from_json(j);
}

// ---- results --------------------------------------------------------------

inline json summary_json(const RunSummary &s) {
    json j;
    j["engine"] = s.engine;
    j["n_trials"] = s.n_trials;
    j["mean_spin"] = vec_json(s.mean_spin);
    j["component_variances"] = vec_json(s.component_variances);
    j["total_variance"] = number_json(s.total_variance);
    j["total_variance_se"] = number_json(s.total_variance_se);
    j["input_total_variance"] = number_json(s.input_total_variance);
    j["input_total_variance_se"] = number_json(s.input_total_variance_se);
    j["record_total_variance"] = number_json(s.record_total_variance);
    j["record_total_variance_se"] = number_json(s.record_total_variance_se);
    j["readout_floor"] = number_json(s.readout_floor);
    j["floor_subtracted_variance"] = number_json(s.floor_subtracted_variance);
    if (s.input_total_variance > 0.0 && s.total_variance > 0.0) {
        j["db_reduction"] = db_reduction(s.input_total_variance, s.total_variance);
        j["volume_factor"] = volume_factor(s.input_total_variance, s.total_variance);
    }
    j["record_labels"] = s.record_labels;
    j["record_mean"] = vec_json(s.record_mean);
    j["record_cov"] = mat_json(s.record_cov);
    j["record_cov_se"] = mat_json(s.record_cov_se);
    return j;
}

/// Shortest-round-trip-safe decimal: 17 significant digits.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV with a '#'-prefixed reproducibility header (version + resolved config).
class CsvWriter {
public:
    CsvWriter(const json &config, const std::vector<std::string> &columns) {
        out_ << "# spincool " << kVersion << "\n";
        out_ << "# config: " << config.dump() << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    void row(const std::vector<double> &values, const std::string &lead = {}) {
        bool first = true;
        if (!lead.empty()) {
            out_ << lead;
            first = false;
        }
        for (double v : values) {
            out_ << (first ? "" : ",") << format_double(v);
            first = false;
        }
        out_ << "\n";
    }

    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

inline std::string matrix_csv(const json &config, const std::vector<std::string> &labels, const MatrixXd &m) {
    std::vector<std::string> cols{"step"};
    cols.insert(cols.end(), labels.begin(), labels.end());
    CsvWriter w(config, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> vals;
        for (Eigen::Index k = 0; k < m.cols(); ++k)
            vals.push_back(m(i, k));
        w.row(vals, labels[static_cast<std::size_t>(i)]);
    }
    return w.str();
}

inline std::string sweep_csv(const json &config, const std::vector<SweepPoint> &sweep, double input_level) {
    CsvWriter w(config, {"g", "total_variance", "std_err", "db_vs_input"});
    for (const auto &pt : sweep)
        w.row({pt.g, pt.total_variance, pt.std_err, db_reduction(input_level, pt.total_variance)});
    return w.str();
}

inline void write_text(const std::string &path, const std::string &text) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot open " + path + " for writing");
    f << text;
    if (!f)
        throw std::runtime_error("write failed: " + path);
}

}  // namespace spincool
