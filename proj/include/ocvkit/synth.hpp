#pragma once

// Synthetic low-rate OCV test generator with known ground truth.
//
// Terminal voltage on the constant-current branches is
//     v = E(s) + offset + i * (r0 + rh) + distortion * |i| * (1 - 2 s) + noise
// and on the pulse train v = E(s) + offset + i * r0 + noise. There are no RC dynamics.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ocvkit/datamodel.hpp"
#include "ocvkit/electrical.hpp"
#include "ocvkit/error.hpp"
#include "ocvkit/models.hpp"

namespace ocvkit {

/// SplitMix64 with a Box-Muller normal transform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on (0, 1): 53 random bits, never exactly 0.
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Discharge pulses separated by rests, logged at a fixed period.
struct PulseSpec {
    double amplitude = 1.0; ///< discharge current magnitude [A]
    double on_time = 0.050; ///< [s]
    double off_time = 0.050; ///< [s]
    int count = 5;
    double sample_period = 0.005; ///< [s]
    /// The logged voltage ramps linearly to its new level over this time after each step [s].
    double switch_time = 0.0;
};

struct SynthScenario {
    FittedModel truth_model;
    double q_true = 4.0;          ///< discharge capacity [Ah]
    double q_charge_excess = 0.0; ///< charge capacity minus discharge capacity [Ah]
    double r0_true = 0.016;       ///< [ohm]
    double rh_true = 0.0;         ///< [ohm]
    std::vector<double> cell_offsets; ///< [V]; missing entries are zero
    double noise_sigma = 0.0;     ///< [V]
    int c_rate_denominator = 2;
    double sample_period = 1.0;   ///< low-rate branch sampling [s]
    std::uint64_t seed = 1;
    double rest_duration = 600.0; ///< after discharge and after charge [s]
    double rate_distortion = 0.0; ///< [V/A], SOC shape (1 - 2s), same sign on both branches
    bool with_pulses = true;
    PulseSpec pulse;
    std::string id_prefix = "SYN";

    double current() const { return q_true / c_rate_denominator; }

    void validate() const {
        if (!(q_true > 0.0) || !(q_true + q_charge_excess > 0.0)) {
            throw UsageError("scenario capacity must be positive");
        }
        if (!(noise_sigma >= 0.0)) {
            throw UsageError("scenario noise must be non-negative");
        }
        if (c_rate_denominator <= 0 || !(sample_period > 0.0) || rest_duration < 0.0) {
            throw UsageError("scenario rate, sample period and rest must be positive");
        }
        if (truth_model.k.size() != parameter_count(truth_model.kind)) {
            throw UsageError("scenario truth model has the wrong parameter count");
        }
        if (with_pulses && (pulse.count < 1 || !(pulse.sample_period > 0.0) || !(pulse.on_time > 0.0) ||
                            !(pulse.off_time > 0.0))) {
            throw UsageError("scenario pulse specification is invalid");
        }
    }

    std::string battery_id(std::size_t cell_index) const {
        const auto n = std::to_string(cell_index + 1);
        return id_prefix + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
    }
};

/// Realistic Combined+3 curve used as the default ground truth (about 2.5 V empty to 4.4 V full).
inline FittedModel reference_truth_model() {
    FittedModel m;
    m.kind = ModelKind::CombinedPlus3;
    m.epsilon = default_epsilon;
    m.k = {3.14506274, -3.41937915e-02, 2.49348022e-04, -8.53285219e-07,
           1.06176906e-09, 9.00776820e-01, 1.88690992e-01, -3.87787356e-02};
    return m;
}

/// Independent offsets ~ N(0, sigma^2) for q cells.
inline std::vector<double> draw_offsets(std::size_t q, double sigma, std::uint64_t seed) {
    SplitMix64 rng(seed ^ 0x6f66667365747321ULL);
    std::vector<double> out(q);
    for (auto& o : out) {
        o = sigma * rng.normal();
    }
    return out;
}

namespace detail {

/// Appends a pulse train starting at t0. `ocv` is the open-circuit level during the train.
inline void append_pulses(std::vector<CyclingSample>& out, const PulseSpec& p, double t0, double ocv, double r0,
                          double noise_sigma, SplitMix64& rng) {
    const auto on_n = static_cast<long>(std::llround(p.on_time / p.sample_period));
    const auto off_n = static_cast<long>(std::llround(p.off_time / p.sample_period));
    long j = 0;
    double level_prev = ocv;
    double level = ocv;
    double t_step = t0;
    double i_prev = 0.0;
    for (int c = 0; c < p.count; ++c) {
        for (int phase = 0; phase < 2; ++phase) {
            const double i = phase == 0 ? -p.amplitude : 0.0;
            const long n = phase == 0 ? on_n : off_n;
            for (long m = 0; m < n; ++m, ++j) {
                const double t = t0 + static_cast<double>(j) * p.sample_period;
                if (i != i_prev) {
                    level_prev = level;
                    level = ocv + i * r0;
                    t_step = t;
                    i_prev = i;
                }
                double v = level;
                if (p.switch_time > 0.0 && t - t_step < p.switch_time) {
                    v = level_prev + (level - level_prev) * (t - t_step) / p.switch_time;
                }
                out.push_back({t, i, v + noise_sigma * rng.normal()});
            }
        }
    }
}

/// Sample times 0, dt, 2dt, ... ending exactly at `duration`.
inline std::vector<double> branch_times(double duration, double dt) {
    std::vector<double> t;
    const auto n = static_cast<long>(std::floor(duration / dt + 1e-9));
    for (long j = 0; j <= n; ++j) {
        t.push_back(static_cast<double>(j) * dt);
    }
    if (duration - t.back() > 1e-9 * duration) {
        t.push_back(duration);
    } else {
        t.back() = duration;
    }
    return t;
}

} // namespace detail

/// Stand-alone pulse window at a fixed OCV level; used to exercise the resistance estimator.
inline PulseWindow generate_pulse_window(const PulseSpec& spec, double ocv, double r0, double noise_sigma,
                                         std::uint64_t seed) {
    SplitMix64 rng(seed);
    PulseWindow w;
    w.sample_period = spec.sample_period;
    detail::append_pulses(w.samples, spec, 0.0, ocv, r0, noise_sigma, rng);
    return w;
}

/// Full discharge, rest, full charge, rest and pulse train for one cell.
/// Deterministic in (scenario.seed + cell_index).
inline CyclingRecord generate_cell(const SynthScenario& sc, std::size_t cell_index) {
    sc.validate();
    SplitMix64 rng(sc.seed + cell_index);
    const double offset = cell_index < sc.cell_offsets.size() ? sc.cell_offsets[cell_index] : 0.0;
    const double current = sc.current();
    const double r_branch = sc.r0_true + sc.rh_true;

    CyclingRecord rec;
    rec.battery_id = sc.battery_id(cell_index);
    rec.c_rate_denominator = sc.c_rate_denominator;
    rec.temperature_tag = "Room";
    auto& out = rec.samples;

    auto branch_v = [&](double s, double i) {
        return eval(sc.truth_model, s) + offset + i * r_branch + sc.rate_distortion * std::abs(i) * (1.0 - 2.0 * s) +
               sc.noise_sigma * rng.normal();
    };
    auto rest = [&](double t0, double s) {
        const auto n = static_cast<long>(std::floor(sc.rest_duration / sc.sample_period + 1e-9));
        for (long j = 1; j <= n; ++j) {
            out.push_back({t0 + static_cast<double>(j) * sc.sample_period, 0.0,
                           eval(sc.truth_model, s) + offset + sc.noise_sigma * rng.normal()});
        }
    };

    const double t_dis = sc.q_true / current * 3600.0;
    for (double tr : detail::branch_times(t_dis, sc.sample_period)) {
        const double s = 1.0 - tr / t_dis;
        out.push_back({tr, -current, branch_v(s, -current)});
    }
    rest(out.back().t, 0.0);

    const double q_charge = sc.q_true + sc.q_charge_excess;
    const double t_chg = q_charge / current * 3600.0;
    const double t0 = out.back().t + sc.sample_period;
    for (double tr : detail::branch_times(t_chg, sc.sample_period)) {
        const double s = tr / t_chg;
        out.push_back({t0 + tr, current, branch_v(s, current)});
    }
    rest(out.back().t, 1.0);

    if (sc.with_pulses) {
        const double tp = out.back().t + sc.pulse.sample_period;
        detail::append_pulses(out, sc.pulse, tp, eval(sc.truth_model, 1.0) + offset, sc.r0_true, sc.noise_sigma, rng);
    }
    return rec;
}

inline std::vector<CyclingRecord> generate_cohort(const SynthScenario& sc, std::size_t q_cells) {
    if (q_cells < 1) {
        throw UsageError("cohort needs at least one cell");
    }
    std::vector<CyclingRecord> out;
    out.reserve(q_cells);
    for (std::size_t c = 0; c < q_cells; ++c) {
        out.push_back(generate_cell(sc, c));
    }
    return out;
}

} // namespace ocvkit
