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

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spincool/dynamics.hpp"

namespace spincool {

enum class PhaseKind { measure_only, measure_feedback };

struct Phase {
    PhaseKind kind = PhaseKind::measure_only;
    std::vector<Axis> axes{Axis::z, Axis::y, Axis::x};
    double normalized_gain = 0.0;

    bool operator==(const Phase &) const = default;
};

/// One expanded measurement step.
struct Step {
    std::size_t index = 0;  // 0-based position in the record
    std::size_t phase = 0;
    Axis axis         = Axis::z;
    double normalized_gain = 0.0;
};

class Schedule {
public:
    Schedule() = default;
    explicit Schedule(std::vector<Phase> phases) : phases_(std::move(phases)) { validate(); }

    const std::vector<Phase> &phases() const { return phases_; }

    /// Axes must follow the z -> y -> x cycle starting at z; measure-only
    /// phases carry zero gain.
    void validate() const {
        for (std::size_t i = 0; i < phases_.size(); ++i) {
            const auto &ph = phases_[i];
            const std::string where = "schedule[" + std::to_string(i) + "]";
            if (ph.axes.empty())
                throw std::invalid_argument(where + ": phase has no measurement steps");
            static constexpr Axis cycle[3] = {Axis::z, Axis::y, Axis::x};
            for (std::size_t j = 0; j < ph.axes.size(); ++j)
                if (ph.axes[j] != cycle[j % 3])
                    throw std::invalid_argument(where + ": axes must cycle z -> y -> x");
            if (ph.kind == PhaseKind::measure_only && ph.normalized_gain != 0.0)
                throw std::invalid_argument(where + ": measure_only phase must have zero gain");
            if (!std::isfinite(ph.normalized_gain))
                throw std::invalid_argument(where + ": gain must be finite");
        }
    }

    std::vector<Step> steps() const {
        std::vector<Step> out;
        for (std::size_t i = 0; i < phases_.size(); ++i)
            for (Axis a : phases_[i].axes)
                out.push_back({out.size(), i, a, phases_[i].normalized_gain});
        return out;
    }

    std::size_t n_steps() const {
        std::size_t n = 0;
        for (const auto &ph : phases_)
            n += ph.axes.size();
        return n;
    }

    /// Number of steps executed before the readout point.  The readout point
    /// is the start of a trailing measure-only phase, or the end of the
    /// schedule when there is none (or it is the only phase).
    std::size_t readout_step() const {
        if (phases_.size() >= 2 && phases_.back().kind == PhaseKind::measure_only)
            return n_steps() - phases_.back().axes.size();
        return n_steps();
    }

    /// Record labels "z1,y1,x1,z2,...", numbered per three-axis group.
    std::vector<std::string> record_labels() const {
        std::vector<std::string> out;
        std::size_t group = 0;
        for (const auto &s : steps()) {
            if (s.axis == Axis::z)
                ++group;
            out.push_back(std::string(1, axis_label(s.axis)) + std::to_string(std::max<std::size_t>(group, 1)));
        }
        return out;
    }

    bool operator==(const Schedule &) const = default;

private:
    std::vector<Phase> phases_;
};

inline Phase measure_only_phase() { return Phase{PhaseKind::measure_only, {Axis::z, Axis::y, Axis::x}, 0.0}; }

inline Phase feedback_phase(double g) {
    return Phase{PhaseKind::measure_feedback, {Axis::z, Axis::y, Axis::x}, g};
}

/// measure -> feedback rounds -> measure.  With one gain this is the 9-step
/// characterization sequence; each extra gain adds a three-axis feedback round.
inline Schedule characterization_schedule(std::span<const double> round_gains) {
    std::vector<Phase> phases{measure_only_phase()};
    for (double g : round_gains)
        phases.push_back(feedback_phase(g));
    phases.push_back(measure_only_phase());
    return Schedule(std::move(phases));
}

inline Schedule paper_characterization_schedule(double g) {
    const double gains[] = {g};
    return characterization_schedule(gains);
}

inline Schedule paper_two_round_schedule(double g1, double g2) {
    const double gains[] = {g1, g2};
    return characterization_schedule(gains);
}

/// The same schedule with every feedback phase demoted to measure-only.
inline Schedule measure_only_equivalent(const Schedule &s) {
    std::vector<Phase> phases = s.phases();
    for (auto &ph : phases) {
        ph.kind            = PhaseKind::measure_only;
        ph.normalized_gain = 0.0;
    }
    return Schedule(std::move(phases));
}

}  // namespace spincool
