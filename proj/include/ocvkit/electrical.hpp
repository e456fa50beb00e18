#pragma once

// Pulse-based series resistance and hysteresis estimates.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ocvkit/analysis.hpp"
#include "ocvkit/datamodel.hpp"
#include "ocvkit/error.hpp"
#include "ocvkit/models.hpp"

namespace ocvkit {

/// Samples of a resistance pulse train.
struct PulseWindow {
    std::vector<CyclingSample> samples;
    double sample_period = 0.005; ///< [s]
};

/// Pulse window from the record's PulseTrain phase; the sample period is the median step.
inline PulseWindow pulse_window(const CyclingRecord& record) {
    const auto seg = record.phase(PhaseKind::PulseTrain);
    PulseWindow w;
    const auto s = record.slice(seg);
    w.samples.assign(s.begin(), s.end());
    if (w.samples.size() < 2) {
        throw DataError(record.battery_id + ": pulse train too short");
    }
    std::vector<double> dt;
    for (std::size_t k = 1; k < w.samples.size(); ++k) {
        dt.push_back(w.samples[k].t - w.samples[k - 1].t);
    }
    std::nth_element(dt.begin(), dt.begin() + static_cast<std::ptrdiff_t>(dt.size() / 2), dt.end());
    w.sample_period = dt[dt.size() / 2];
    return w;
}

struct R0Config {
    /// Samples closer than this to the preceding current step are dropped [s].
    double settle_time = 0.045;
    /// A change in logged current larger than this counts as a step [A].
    double step_threshold = 0.01;
};

struct R0Estimate {
    double r0 = 0.0;        ///< [ohm]
    double intercept = 0.0; ///< voltage at zero current [V]
    std::size_t samples_used = 0;
    /// Set when the slope came out negative (voltage rising on discharge).
    bool implausible = false;
};

/// Least-squares line v = a + r0 * i over the settled samples of the window.
/// With charging current positive, a resistive drop gives a positive slope.
inline R0Estimate estimate_r0(const PulseWindow& window, const R0Config& cfg = {}) {
    const auto& s = window.samples;
    if (s.empty()) {
        throw DataError("empty pulse window");
    }
    constexpr double time_slack = 1e-6;
    std::vector<const CyclingSample*> kept;
    double t_step = s.front().t;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (k > 0 && std::abs(s[k].i - s[k - 1].i) > cfg.step_threshold) {
            t_step = s[k].t;
        }
        if (s[k].t - t_step >= cfg.settle_time - time_slack) {
            kept.push_back(&s[k]);
        }
    }
    const double n = static_cast<double>(kept.size());
    double mi = 0.0;
    double mv = 0.0;
    for (const auto* p : kept) {
        mi += p->i;
        mv += p->v;
    }
    mi /= n;
    mv /= n;
    double sii = 0.0;
    double siv = 0.0;
    for (const auto* p : kept) {
        sii += (p->i - mi) * (p->i - mi);
        siv += (p->i - mi) * (p->v - mv);
    }
    if (kept.size() < 2 || !(sii > 0.0)) {
        throw DataError("pulse window has no current variation after settle exclusion");
    }
    R0Estimate e;
    e.r0 = siv / sii;
    e.intercept = mv - e.r0 * mi;
    e.samples_used = kept.size();
    e.implausible = e.r0 < 0.0;
    return e;
}

/// Instantaneous hysteresis h1(k) = v(k) - E(s(k)) - i(k) * r0, E being the model OCV.
inline std::vector<double> h1_series(std::span<const CyclingSample> samples, const FittedModel& model, double r0,
                                     std::span<const double> soc) {
    if (samples.size() != soc.size()) {
        throw DataError("h1: " + std::to_string(samples.size()) + " samples but " + std::to_string(soc.size()) +
                        " SOC values");
    }
    std::vector<double> h(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        h[k] = samples[k].v - eval(model, soc[k]) - samples[k].i * r0;
    }
    return h;
}

/// h1 over the discharge then charge branch, with SOC from Coulomb counting of each branch.
inline std::vector<double> h1_series(const LowRateBranches& br, const FittedModel& model, double r0) {
    std::vector<CyclingSample> samples;
    std::vector<double> soc;
    for (const auto* branch : {&br.discharge, &br.charge}) {
        for (const auto& x : *branch) {
            samples.push_back({x.t, x.i, x.v});
            soc.push_back(x.s);
        }
    }
    return h1_series(samples, model, r0, soc);
}

/// Model-implied hysteresis h2(k) = i(k) * r_h.
inline std::vector<double> h2_series(std::span<const CyclingSample> samples, double r_h) {
    if (r_h < 0.0) {
        throw UsageError("hysteresis resistance must be non-negative");
    }
    std::vector<double> h(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        h[k] = samples[k].i * r_h;
    }
    return h;
}

/// Average hysteresis (C/N) * r_h for a constant-current test.
inline double average_hysteresis(double c_over_n, double r_h) {
    if (!(c_over_n > 0.0) || r_h < 0.0) {
        throw UsageError("average hysteresis needs a positive current and non-negative resistance");
    }
    return c_over_n * r_h;
}

inline double mean_abs(std::span<const double> h) {
    if (h.empty()) {
        throw DataError("mean of an empty series");
    }
    double s = 0.0;
    for (double x : h) {
        s += std::abs(x);
    }
    return s / static_cast<double>(h.size());
}

struct ResistanceSplit {
    double r_h = 0.0;
    /// r_total came out below r0 and r_h was clamped to zero.
    bool clamped = false;
};

/// r_total = r0 + r_h; negative remainders clamp to zero.
inline ResistanceSplit split_resistance(double r_total, double r0) {
    const double rh = r_total - r0;
    return rh < 0.0 ? ResistanceSplit{0.0, true} : ResistanceSplit{rh, false};
}

} // namespace ocvkit
