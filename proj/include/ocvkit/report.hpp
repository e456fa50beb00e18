#pragma once

// Serialization of models, synthetic plans and metric reports, plus the capacity/resistance table.

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ocvkit/analysis.hpp"
#include "ocvkit/error.hpp"
#include "ocvkit/models.hpp"
#include "ocvkit/synth.hpp"
#include "ocvkit/text.hpp"
#include "ocvkit/uncertainty.hpp"

namespace ocvkit {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// FittedModel

inline json to_json(const FittedModel& m) {
    json j;
    j["kind"] = to_string(m.kind);
    j["epsilon"] = m.epsilon;
    j["k"] = m.k;
    if (m.r_total) {
        j["r_total_ohm"] = *m.r_total;
    }
    j["residual_rms_v"] = m.residual_rms;
    return j;
}

inline FittedModel model_from_json(const json& j) {
    try {
        FittedModel m;
        m.kind = parse_model_kind(j.at("kind").get<std::string>());
        m.epsilon = j.value("epsilon", default_epsilon);
        m.k = j.at("k").get<std::vector<double>>();
        if (j.contains("r_total_ohm") && !j["r_total_ohm"].is_null()) {
            m.r_total = j["r_total_ohm"].get<double>();
        }
        m.residual_rms = j.value("residual_rms_v", 0.0);
        if (m.k.size() != parameter_count(m.kind)) {
            throw DataError(std::string("model record: ") + to_string(m.kind) + " needs " +
                            std::to_string(parameter_count(m.kind)) + " parameters");
        }
        scale_soc(0.5, m.epsilon);
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model record: ") + e.what());
    }
}

inline void write_model(std::ostream& out, const FittedModel& m) { out << to_json(m).dump(2) << '\n'; }

inline FittedModel read_model(std::istream& in) {
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("model record: ") + e.what());
    }
    return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Synthetic dataset plan

/// A multi-rate synthetic dataset: one cohort of `cells_per_rate` cells per rate.
struct SynthPlan {
    SynthScenario base;
    std::vector<int> rates{2, 128};
    std::size_t cells_per_rate = 4;
    /// Per-cell offsets are drawn from N(0, offset_sigma^2) unless `base.cell_offsets` is given.
    double offset_sigma = 0.0;

    /// Scenario for one rate; seeds and offsets differ per rate.
    SynthScenario scenario_for(std::size_t rate_index) const {
        SynthScenario sc = base;
        sc.c_rate_denominator = rates.at(rate_index);
        sc.seed = base.seed + 1000 * static_cast<std::uint64_t>(rate_index);
        sc.id_prefix = base.id_prefix + "C" + std::to_string(sc.c_rate_denominator) + "-";
        if (base.cell_offsets.empty() && offset_sigma > 0.0) {
            sc.cell_offsets = draw_offsets(cells_per_rate, offset_sigma, sc.seed);
        }
        return sc;
    }
};

inline SynthPlan plan_from_json(const json& j) {
    try {
        SynthPlan p;
        auto& b = p.base;
        b.truth_model = j.contains("truth") ? model_from_json(j["truth"]) : reference_truth_model();
        b.q_true = j.value("q_ah", b.q_true);
        b.q_charge_excess = j.value("q_charge_excess_ah", b.q_charge_excess);
        b.r0_true = j.value("r0_ohm", b.r0_true);
        b.rh_true = j.value("rh_ohm", b.rh_true);
        b.noise_sigma = j.value("noise_sigma_v", b.noise_sigma);
        b.sample_period = j.value("sample_period_s", b.sample_period);
        b.seed = j.value("seed", b.seed);
        b.rest_duration = j.value("rest_s", b.rest_duration);
        b.rate_distortion = j.value("rate_distortion_v_per_a", b.rate_distortion);
        b.with_pulses = j.value("pulses", b.with_pulses);
        b.id_prefix = j.value("id_prefix", b.id_prefix);
        if (j.contains("cell_offsets_v")) {
            b.cell_offsets = j["cell_offsets_v"].get<std::vector<double>>();
        }
        p.offset_sigma = j.value("offset_sigma_v", 0.0);
        if (j.contains("rates")) {
            p.rates = j["rates"].get<std::vector<int>>();
        } else if (j.contains("c_rate")) {
            p.rates = {j["c_rate"].get<int>()};
        }
        p.cells_per_rate = j.value("cells_per_rate", p.cells_per_rate);
        if (p.rates.empty() || p.cells_per_rate < 1) {
            throw UsageError("synthetic plan needs at least one rate and one cell");
        }
        for (int r : p.rates) {
            if (r <= 0) {
                throw UsageError("synthetic plan rates must be positive");
            }
        }
        b.c_rate_denominator = p.rates.front();
        b.validate();
        return p;
    } catch (const json::exception& e) {
        throw UsageError(std::string("scenario file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Metrics

inline json to_json(const GridMetrics& g, const SocGrid& grid, std::optional<ZeroMeanVerdict> verdict) {
    json j;
    j["soc"] = grid.points();
    j["mu_v"] = g.mu;
    j["sigma_v"] = g.sigma;
    j["mu_avg_v"] = g.mu_avg;
    j["sigma_avg_v"] = g.sigma_avg;
    j["standard_mean"] = g.standard_mean ? json(*g.standard_mean) : json(nullptr);
    if (verdict) {
        j["zero_mean"] = {{"alpha", verdict->alpha}, {"critical", verdict->critical}, {"pass", verdict->pass}};
    }
    return j;
}

/// Window-of-uncertainty CSV: soc, mu, sigma, mu+sigma, mu-sigma (volts).
inline void write_window_csv(std::ostream& out, const GridMetrics& g, const SocGrid& grid) {
    out << "soc,mu_v,sigma_v,mu_plus_sigma_v,mu_minus_sigma_v\n";
    for (std::size_t l = 0; l < grid.k(); ++l) {
        out << text::exact(grid[l]) << ',' << text::exact(g.mu[l]) << ',' << text::exact(g.sigma[l]) << ','
            << text::exact(g.mu[l] + g.sigma[l]) << ',' << text::exact(g.mu[l] - g.sigma[l]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Capacity / resistance table

/// One row of the capacity and resistance table. Resistances in ohm, capacities in Ah.
struct ResistanceRow {
    std::string battery_id;
    int c_rate_denominator = 0;
    double current = 0.0; ///< constant-current magnitude [A]
    CapacityReport capacity;
    std::optional<double> r_total;
    std::optional<double> r0;
    std::optional<double> r_h;

    /// Voltage drop across the total resistance: current * r_total [V].
    std::optional<double> v_drop() const {
        return r_total ? std::optional<double>(current * *r_total) : std::nullopt;
    }
    /// Average hysteresis: current * r_h [V].
    std::optional<double> h2_bar() const {
        return r_h ? std::optional<double>(current * *r_h) : std::nullopt;
    }
};

inline const char* resistance_header() {
    return "battery_id,c_rate,i_a,q_c_ah,q_d_ah,q_c_minus_q_d_ah,r_oh_mohm,r0_mohm,rh_mohm,v_d_mv,h2_bar_mv";
}

/// Machine-readable row at full precision; absent values are left empty.
inline std::string format_resistance_row(const ResistanceRow& r) {
    auto opt = [](std::optional<double> v, double scale) { return v ? text::exact(*v * scale) : std::string(); };
    return r.battery_id + ',' + text::c_rate_label(r.c_rate_denominator) + ',' + text::exact(r.current) + ',' +
           text::exact(r.capacity.q_charge) + ',' + text::exact(r.capacity.q_discharge) + ',' +
           text::exact(r.capacity.delta()) + ',' + opt(r.r_total, 1e3) + ',' + opt(r.r0, 1e3) + ',' +
           opt(r.r_h, 1e3) + ',' + opt(r.v_drop(), 1e3) + ',' + opt(r.h2_bar(), 1e3);
}

/// Human-readable row at table precision.
inline std::string format_resistance_row_human(const ResistanceRow& r) {
    auto opt = [](std::optional<double> v, double scale, int dec) {
        return v ? text::fixed(*v * scale, dec) : std::string("-");
    };
    return r.battery_id + ", " + text::c_rate_label(r.c_rate_denominator) + ", " + text::fixed(r.current, 4) + ", " +
           text::fixed(r.capacity.q_charge, 4) + ", " + text::fixed(r.capacity.q_discharge, 4) + ", " +
           text::fixed(r.capacity.delta(), 4) + ", " + opt(r.r_total, 1e3, 1) + ", " + opt(r.r0, 1e3, 2) + ", " +
           opt(r.r_h, 1e3, 2) + ", " + opt(r.v_drop(), 1e3, 2) + ", " + opt(r.h2_bar(), 1e3, 2);
}

/// Capacity columns of the table as printed: "id, C/N, Q_c, Q_d, Q_c - Q_d" (Ah, 4 decimals).
struct CapacityRow {
    std::string battery_id;
    int c_rate_denominator = 0;
    double q_charge = 0.0;
    double q_discharge = 0.0;
    double delta = 0.0;
};

inline std::string format_capacity_row(const CapacityRow& r) {
    return r.battery_id + ", " + text::c_rate_label(r.c_rate_denominator) + ", " + text::fixed(r.q_charge, 4) + ", " +
           text::fixed(r.q_discharge, 4) + ", " + text::fixed(r.delta, 4);
}

/// Parses a capacity row; the difference column must equal Q_c - Q_d at 4 decimals.
inline CapacityRow parse_capacity_row(std::string_view line) {
    const auto f = text::split(line);
    if (f.size() != 5) {
        throw ParseError("capacity row needs 5 fields", 0);
    }
    CapacityRow r;
    r.battery_id = std::string(f[0]);
    const auto rate = text::parse_c_rate(f[1]);
    const auto qc = text::parse_double(f[2]);
    const auto qd = text::parse_double(f[3]);
    const auto dq = text::parse_double(f[4]);
    if (r.battery_id.empty() || !rate || !qc || !qd || !dq) {
        throw ParseError("malformed capacity row '" + std::string(line) + "'", 0);
    }
    r.c_rate_denominator = *rate;
    r.q_charge = *qc;
    r.q_discharge = *qd;
    r.delta = *dq;
    if (text::fixed(*qc - *qd, 4) != text::fixed(*dq, 4)) {
        throw DataError("capacity row " + r.battery_id + ": Q_c - Q_d = " + text::fixed(*qc - *qd, 4) +
                        " but the row states " + text::fixed(*dq, 4));
    }
    return r;
}

} // namespace ocvkit
