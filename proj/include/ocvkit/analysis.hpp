#pragma once

// Coulomb counting and pseudo-OCV extraction.

#include <algorithm>
#include <utility>
#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ocvkit/datamodel.hpp"
#include "ocvkit/error.hpp"
#include "ocvkit/text.hpp"

namespace ocvkit {

/// Equally spaced SOC points strictly inside (0, 1).
class SocGrid {
public:
    SocGrid() = default;
    explicit SocGrid(std::vector<double> points) : points_(std::move(points)) {}

    std::size_t k() const { return points_.size(); }
    double operator[](std::size_t l) const { return points_[l]; }
    const std::vector<double>& points() const& { return points_; }
    std::vector<double> points() && { return std::move(points_); }

    friend bool operator==(const SocGrid&, const SocGrid&) = default;

private:
    std::vector<double> points_;
};

/// Midpoint grid s_l = (l - 1/2) / k, l = 1..k.
inline SocGrid make_soc_grid(int k) {
    if (k < 2) {
        throw UsageError("SOC grid needs k >= 2, got " + std::to_string(k));
    }
    std::vector<double> p(static_cast<std::size_t>(k));
    for (int l = 1; l <= k; ++l) {
        p[static_cast<std::size_t>(l - 1)] = (l - 0.5) / k;
    }
    return SocGrid(std::move(p));
}

/// Charge moved during a phase: trapezoidal integral of |i| dt, in Ah.
inline double compute_capacity(std::span<const CyclingSample> segment) {
    if (segment.size() < 2) {
        throw DataError("capacity needs at least 2 samples");
    }
    double as = 0.0;
    for (std::size_t k = 1; k < segment.size(); ++k) {
        const double dt = segment[k].t - segment[k - 1].t;
        if (dt < 0.0) {
            throw DataError("capacity: time not monotone at sample " + std::to_string(k));
        }
        as += 0.5 * (std::abs(segment[k].i) + std::abs(segment[k - 1].i)) * dt;
    }
    return as / 3600.0;
}

enum class Direction { Charge, Discharge };

struct SocPoint {
    double t;
    double s;
};

/// Coulomb-counted SOC over one branch, normalized by `q_ah`. Charge runs 0 -> 1, discharge 1 -> 0;
/// when `q_ah` is the branch's own capacity the final point is exactly 1 (or 0).
inline std::vector<SocPoint> soc_trajectory(std::span<const CyclingSample> segment, double q_ah, Direction dir) {
    if (!(q_ah > 0.0)) {
        throw DataError("SOC trajectory needs a positive capacity");
    }
    if (segment.empty()) {
        throw DataError("SOC trajectory of an empty segment");
    }
    const double q_as = q_ah * 3600.0;
    std::vector<SocPoint> out;
    out.reserve(segment.size());
    double moved = 0.0;
    for (std::size_t k = 0; k < segment.size(); ++k) {
        if (k > 0) {
            moved += 0.5 * (std::abs(segment[k].i) + std::abs(segment[k - 1].i)) * (segment[k].t - segment[k - 1].t);
        }
        const double frac = moved / q_as;
        out.push_back({segment[k].t, dir == Direction::Charge ? frac : 1.0 - frac});
    }
    const double end_frac = moved / q_as;
    if (std::abs(end_frac - 1.0) <= 1e-12) {
        out.back().s = dir == Direction::Charge ? 1.0 : 0.0;
    }
    return out;
}

/// (SOC, value) knot of a piecewise-linear curve.
struct BranchPoint {
    double s;
    double v;
};

namespace detail {

/// Linear interpolation over ascending knots; `x` must lie inside the knot range.
inline double interpolate(std::span<const BranchPoint> knots, double x) {
    if (knots.empty() || x < knots.front().s || x > knots.back().s || std::isnan(x)) {
        throw DataError("interpolation point " + text::exact(x) + " outside the curve's SOC range");
    }
    const auto hi = std::upper_bound(knots.begin(), knots.end(), x,
                                     [](double value, const BranchPoint& p) { return value < p.s; });
    if (hi == knots.end()) {
        return knots.back().v;
    }
    const auto lo = hi - 1;
    const double w = (x - lo->s) / (hi->s - lo->s);
    return lo->v + w * (hi->v - lo->v);
}

} // namespace detail

/// Linear interpolation of an ascending branch at each grid point.
inline std::vector<double> resample_branch(std::span<const BranchPoint> branch, const SocGrid& grid) {
    for (std::size_t k = 1; k < branch.size(); ++k) {
        if (!(branch[k].s > branch[k - 1].s)) {
            throw DataError("branch SOC values must be strictly ascending (index " + std::to_string(k) + ")");
        }
    }
    std::vector<double> out;
    out.reserve(grid.k());
    for (double s : grid.points()) {
        out.push_back(detail::interpolate(branch, s));
    }
    return out;
}

/// SOC -> OCV lookup table with the experiment it came from.
struct OcvTable {
    std::vector<BranchPoint> rows;
    std::string battery_id;
    int c_rate_denominator = 0;

    /// Row indices l where v drops by more than `tolerance` from row l-1.
    std::vector<std::size_t> monotonicity_violations(double tolerance = 1e-3) const {
        std::vector<std::size_t> bad;
        for (std::size_t l = 1; l < rows.size(); ++l) {
            if (rows[l].v < rows[l - 1].v - tolerance) {
                bad.push_back(l);
            }
        }
        return bad;
    }

    std::vector<double> voltages() const {
        std::vector<double> v;
        v.reserve(rows.size());
        for (const auto& r : rows) {
            v.push_back(r.v);
        }
        return v;
    }
};

/// Pseudo-OCV: mean of the charge and discharge branch voltages at each grid point.
inline OcvTable pseudo_ocv(std::span<const double> v_charge, std::span<const double> v_discharge,
                           const SocGrid& grid) {
    if (v_charge.size() != grid.k() || v_discharge.size() != grid.k()) {
        throw DataError("pseudo-OCV: branch lengths (" + std::to_string(v_charge.size()) + ", " +
                        std::to_string(v_discharge.size()) + ") do not match grid size " +
                        std::to_string(grid.k()));
    }
    OcvTable t;
    t.rows.reserve(grid.k());
    for (std::size_t l = 0; l < grid.k(); ++l) {
        t.rows.push_back({grid[l], 0.5 * (v_charge[l] + v_discharge[l])});
    }
    return t;
}

inline double ocv_lookup(const OcvTable& table, double s) {
    return detail::interpolate(table.rows, s);
}

inline void write_ocv_csv(std::ostream& out, const OcvTable& t) {
    out << "soc,ocv_v\n";
    for (const auto& r : t.rows) {
        out << text::exact(r.s) << ',' << text::exact(r.v) << '\n';
    }
}

inline OcvTable read_ocv_csv(std::istream& in) {
    OcvTable t;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) {
            continue;
        }
        const auto f = text::split(line);
        if (!header) {
            if (f.size() != 2 || f[0] != "soc" || f[1] != "ocv_v") {
                throw ParseError("expected header 'soc,ocv_v'", line_no);
            }
            header = true;
            continue;
        }
        const auto s = f.size() == 2 ? text::parse_double(f[0]) : std::nullopt;
        const auto v = f.size() == 2 ? text::parse_double(f[1]) : std::nullopt;
        if (!s || !v) {
            throw ParseError("malformed OCV row", line_no);
        }
        if (!t.rows.empty() && !(*s > t.rows.back().s)) {
            throw ParseError("SOC column not strictly increasing", line_no);
        }
        t.rows.push_back({*s, *v});
    }
    if (!header) {
        throw ParseError("empty OCV table", line_no);
    }
    return t;
}

struct CapacityReport {
    double q_charge = 0.0;    ///< Ah
    double q_discharge = 0.0; ///< Ah
    double delta() const { return q_charge - q_discharge; }
};

/// One branch sample with its Coulomb-counted SOC.
struct BranchSample {
    double t;
    double s;
    double v;
    double i;
};

/// The discharge and (following) charge branches of a segmented low-rate record.
struct LowRateBranches {
    std::vector<BranchSample> discharge;
    std::vector<BranchSample> charge;
    CapacityReport capacity;
};

namespace detail {

inline std::vector<BranchSample> branch_samples(std::span<const CyclingSample> seg, double q, Direction dir) {
    const auto traj = soc_trajectory(seg, q, dir);
    std::vector<BranchSample> out;
    out.reserve(seg.size());
    for (std::size_t k = 0; k < seg.size(); ++k) {
        out.push_back({seg[k].t, traj[k].s, seg[k].v, seg[k].i});
    }
    return out;
}

} // namespace detail

/// Each branch is normalized by its own integrated charge, so both span SOC [0, 1].
inline LowRateBranches split_branches(const CyclingRecord& record) {
    const auto dis = record.phase(PhaseKind::Discharge);
    const auto chg = record.phase(PhaseKind::Charge);
    LowRateBranches b;
    b.capacity.q_discharge = compute_capacity(record.slice(dis));
    b.capacity.q_charge = compute_capacity(record.slice(chg));
    b.discharge = detail::branch_samples(record.slice(dis), b.capacity.q_discharge, Direction::Discharge);
    b.charge = detail::branch_samples(record.slice(chg), b.capacity.q_charge, Direction::Charge);
    return b;
}

/// Ascending (s, v) knots of a branch. Discharge data is reversed; samples sharing an SOC value
/// (zero-current stretches) are averaged into one knot.
inline std::vector<BranchPoint> branch_curve(std::span<const BranchSample> samples) {
    std::vector<BranchPoint> pts;
    pts.reserve(samples.size());
    for (const auto& x : samples) {
        pts.push_back({x.s, x.v});
    }
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.s < b.s; });
    std::vector<BranchPoint> out;
    out.reserve(pts.size());
    std::size_t run = 0;
    for (const auto& p : pts) {
        if (!out.empty() && out.back().s == p.s) {
            ++run;
            out.back().v += (p.v - out.back().v) / static_cast<double>(run);
        } else {
            out.push_back(p);
            run = 1;
        }
    }
    return out;
}

struct PseudoOcvResult {
    OcvTable table;
    std::vector<double> v_charge;
    std::vector<double> v_discharge;
    CapacityReport capacity;
};

/// Full pseudo-OCV extraction for one segmented record.
inline PseudoOcvResult extract_pseudo_ocv(const CyclingRecord& record, const SocGrid& grid) {
    const auto br = split_branches(record);
    PseudoOcvResult r;
    r.capacity = br.capacity;
    r.v_charge = resample_branch(branch_curve(br.charge), grid);
    r.v_discharge = resample_branch(branch_curve(br.discharge), grid);
    r.table = pseudo_ocv(r.v_charge, r.v_discharge, grid);
    r.table.battery_id = record.battery_id;
    r.table.c_rate_denominator = record.c_rate_denominator;
    return r;
}

} // namespace ocvkit
