#pragma once

// Cycling-data records, experiment manifests, CSV ingestion and phase segmentation.

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ocvkit/error.hpp"
#include "ocvkit/text.hpp"

namespace ocvkit {

/// One logged point. Current is signed: positive charges the cell, negative discharges it.
struct CyclingSample {
    double t = 0.0; ///< elapsed time [s]
    double i = 0.0; ///< current [A]
    double v = 0.0; ///< terminal voltage [V]

    friend bool operator==(const CyclingSample&, const CyclingSample&) = default;
};

enum class PhaseKind { Precharge, Discharge, Charge, PulseTrain, Rest };

inline const char* to_string(PhaseKind k) {
    switch (k) {
    case PhaseKind::Precharge: return "Precharge";
    case PhaseKind::Discharge: return "Discharge";
    case PhaseKind::Charge: return "Charge";
    case PhaseKind::PulseTrain: return "PulseTrain";
    case PhaseKind::Rest: return "Rest";
    }
    return "?";
}

/// Half-open sample range [start_index, end_index).
struct PhaseSegment {
    PhaseKind kind = PhaseKind::Rest;
    std::size_t start_index = 0;
    std::size_t end_index = 0;

    std::size_t size() const { return end_index - start_index; }
    friend bool operator==(const PhaseSegment&, const PhaseSegment&) = default;
};

/// C-rates of the low-rate characterization plan (C/2 ... C/128).
inline bool is_standard_rate(int denominator) {
    switch (denominator) {
    case 2: case 4: case 8: case 16: case 32: case 64: case 128: return true;
    default: return false;
    }
}

struct CyclingRecord {
    std::string battery_id;
    int c_rate_denominator = 1;
    std::string temperature_tag = "Room";
    std::vector<CyclingSample> samples;
    std::vector<PhaseSegment> phases;
    /// Sample indices whose voltage fell outside the plausibility window at ingestion.
    std::vector<std::size_t> implausible_voltage;

    std::span<const CyclingSample> slice(const PhaseSegment& seg) const {
        return std::span<const CyclingSample>(samples).subspan(seg.start_index, seg.size());
    }

    /// First segment of the given kind, if any.
    std::optional<PhaseSegment> find_phase(PhaseKind kind) const {
        for (const auto& p : phases) {
            if (p.kind == kind) {
                return p;
            }
        }
        return std::nullopt;
    }

    PhaseSegment phase(PhaseKind kind) const {
        auto p = find_phase(kind);
        if (!p) {
            throw DataError(battery_id + ": record has no " + to_string(kind) + " phase");
        }
        return *p;
    }
};

struct ParseConfig {
    std::string time_column = "t_s";
    std::string current_column = "i_a";
    std::string voltage_column = "v_v";
    /// Set when the source logs discharge current as positive; currents are negated on ingestion.
    bool discharge_positive = false;
    double v_min = 0.5;
    double v_max = 5.5;

    std::string battery_id;
    int c_rate_denominator = 1;
    std::string temperature_tag = "Room";
};

/// Reads a cycling CSV. Column mapping comes from `config`; nothing is inferred.
/// Consecutive rows sharing a timestamp collapse to the last one.
inline CyclingRecord parse_cycling_csv(std::istream& in, const ParseConfig& config) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string_view> header;
    std::string header_line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!text::trim(line).empty()) {
            header_line = line;
            break;
        }
    }
    if (header_line.empty()) {
        throw ParseError("empty cycling CSV (no header)", line_no);
    }
    header = text::split(header_line);
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw ParseError("missing column '" + name + "'", line_no);
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ct = column(config.time_column);
    const std::size_t ci = column(config.current_column);
    const std::size_t cv = column(config.voltage_column);

    CyclingRecord rec;
    rec.battery_id = config.battery_id;
    rec.c_rate_denominator = config.c_rate_denominator;
    rec.temperature_tag = config.temperature_tag;

    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) {
            continue;
        }
        const auto fields = text::split(line);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        const auto t = text::parse_double(fields[ct]);
        const auto i = text::parse_double(fields[ci]);
        const auto v = text::parse_double(fields[cv]);
        if (!t || !i || !v || !std::isfinite(*t) || !std::isfinite(*i) || !std::isfinite(*v)) {
            throw ParseError("malformed numeric field", line_no);
        }
        CyclingSample s{*t, config.discharge_positive ? -*i : *i, *v};
        if (!rec.samples.empty()) {
            const double prev = rec.samples.back().t;
            if (s.t < prev) {
                throw ParseError("time not monotone at sample index " + std::to_string(row_index) +
                                     " (t=" + text::exact(s.t) + " after " + text::exact(prev) + ")",
                                 line_no);
            }
            if (s.t == prev) {
                rec.samples.back() = s;
                ++row_index;
                continue;
            }
        }
        rec.samples.push_back(s);
        ++row_index;
    }
    for (std::size_t k = 0; k < rec.samples.size(); ++k) {
        const double v = rec.samples[k].v;
        if (v < config.v_min || v > config.v_max) {
            rec.implausible_voltage.push_back(k);
        }
    }
    return rec;
}

/// Writes the default `t_s,i_a,v_v` layout at full precision.
inline void write_cycling_csv(std::ostream& out, const CyclingRecord& rec) {
    out << "t_s,i_a,v_v\n";
    for (const auto& s : rec.samples) {
        out << text::exact(s.t) << ',' << text::exact(s.i) << ',' << text::exact(s.v) << '\n';
    }
}

struct SegmentConfig {
    /// |i| below this is rest [A].
    double rest_epsilon = 0.004;
    /// Runs shorter than this are absorbed into a neighbouring run [s].
    double min_dwell = 10.0;
    /// Longest single run allowed inside a trailing pulse train [s].
    double pulse_max_run = 1.0;

    /// Thresholds scaled to a nominal capacity: rest below C/1000.
    static SegmentConfig for_capacity(double nominal_ah) {
        SegmentConfig c;
        c.rest_epsilon = nominal_ah / 1000.0;
        return c;
    }
};

namespace detail {

struct CurrentRun {
    int sign = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    double duration = 0.0;
};

inline std::vector<CurrentRun> current_runs(std::span<const CyclingSample> s, double rest_epsilon) {
    auto sign_of = [&](double i) { return i > rest_epsilon ? 1 : (i < -rest_epsilon ? -1 : 0); };
    std::vector<CurrentRun> runs;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const int sg = sign_of(s[k].i);
        if (runs.empty() || runs.back().sign != sg) {
            runs.push_back({sg, k, k + 1, 0.0});
        } else {
            runs.back().end = k + 1;
        }
    }
    for (auto& r : runs) {
        const double t_end = r.end < s.size() ? s[r.end].t : s.back().t;
        r.duration = t_end - s[r.start].t;
    }
    return runs;
}

} // namespace detail

/// Splits a record into Precharge/Discharge/Charge/Rest/PulseTrain segments from the current trace.
/// Existing phases are ignored, so the operation is idempotent.
inline CyclingRecord segment_phases(CyclingRecord record, const SegmentConfig& cfg = {}) {
    record.phases.clear();
    const std::span<const CyclingSample> s(record.samples);
    auto incomplete = [&] { return DataError(record.battery_id + ": incomplete low-rate test"); };
    if (s.empty()) {
        throw incomplete();
    }
    auto runs = detail::current_runs(s, cfg.rest_epsilon);

    // Trailing pulse train: a suffix of short runs holding at least two current pulses.
    std::size_t pulse_begin = runs.size();
    {
        std::size_t k = runs.size();
        int pulses = 0;
        while (k > 0 && runs[k - 1].duration <= cfg.pulse_max_run) {
            --k;
            pulses += runs[k].sign != 0 ? 1 : 0;
        }
        while (k < runs.size() && runs[k].sign == 0) {
            ++k;
        }
        if (pulses >= 2) {
            pulse_begin = k;
        }
    }

    struct Block {
        int sign;
        std::size_t start;
        std::size_t end;
    };
    std::vector<Block> blocks;
    std::size_t pending_start = 0;
    bool pending = false;
    for (std::size_t k = 0; k < pulse_begin; ++k) {
        const auto& r = runs[k];
        if (r.duration >= cfg.min_dwell) {
            if (!blocks.empty() && blocks.back().sign == r.sign) {
                blocks.back().end = r.end;
            } else {
                blocks.push_back({r.sign, pending ? pending_start : r.start, r.end});
            }
            pending = false;
        } else if (!blocks.empty()) {
            blocks.back().end = r.end;
        } else if (!pending) {
            pending = true;
            pending_start = r.start;
        }
    }
    bool seen_discharge = false;
    bool seen_charge = false;
    for (const auto& b : blocks) {
        PhaseKind kind = PhaseKind::Rest;
        if (b.sign < 0) {
            kind = PhaseKind::Discharge;
            seen_discharge = true;
        } else if (b.sign > 0) {
            kind = seen_discharge ? PhaseKind::Charge : PhaseKind::Precharge;
            seen_charge = seen_charge || seen_discharge;
        }
        record.phases.push_back({kind, b.start, b.end});
    }
    if (pulse_begin < runs.size()) {
        record.phases.push_back({PhaseKind::PulseTrain, runs[pulse_begin].start, s.size()});
    }
    if (!seen_discharge || !seen_charge) {
        throw incomplete();
    }
    for (const auto& p : record.phases) {
        if (p.kind != PhaseKind::Discharge && p.kind != PhaseKind::Charge) {
            continue;
        }
        double sum = 0.0;
        for (const auto& x : record.slice(p)) {
            sum += x.i;
        }
        if ((p.kind == PhaseKind::Discharge) != (sum < 0.0)) {
            throw DataError(record.battery_id + ": " + to_string(p.kind) +
                            " segment has mean current of the wrong sign");
        }
    }
    return record;
}

struct ManifestEntry {
    std::string battery_id;
    int c_rate_denominator = 1;
    std::string temperature = "Room";
    std::string path;

    std::string c_rate_label() const { return text::c_rate_label(c_rate_denominator); }
};

/// Which cell was cycled at which rate, and where its log lives.
struct Manifest {
    /// Stable-sorted by C-rate denominator (fastest rate first).
    std::vector<ManifestEntry> entries;
    /// Denominator of the reference (slowest) rate.
    int reference_c_rate = 0;

    std::vector<int> rates() const {
        std::set<int> r;
        for (const auto& e : entries) {
            r.insert(e.c_rate_denominator);
        }
        return {r.begin(), r.end()};
    }

    std::vector<ManifestEntry> entries_for(int denominator) const {
        std::vector<ManifestEntry> out;
        std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                     [&](const ManifestEntry& e) { return e.c_rate_denominator == denominator; });
        return out;
    }
};

/// Manifest text format:
///
///     # comment
///     reference: C/128            (optional)
///     battery_id,c_rate,temperature,path   (optional header)
///     D3213,C/128,Room,d3213_c128.csv
///
/// temperature and path may be omitted (defaults "Room" and "").
inline Manifest load_manifest(std::istream& in) {
    Manifest m;
    std::optional<int> declared_ref;
    std::set<std::pair<std::string, int>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = text::trim(line);
        if (body.empty() || body.front() == '#') {
            continue;
        }
        if (body.rfind("reference", 0) == 0 && body.find(':') != std::string_view::npos) {
            const auto r = text::parse_c_rate(body.substr(body.find(':') + 1));
            if (!r) {
                throw ParseError("bad reference C-rate", line_no);
            }
            declared_ref = *r;
            continue;
        }
        const auto f = text::split(body);
        if (f[0] == "battery_id") {
            continue;
        }
        if (f.size() < 2 || f.size() > 4 || f[0].empty()) {
            throw ParseError("expected battery_id,c_rate[,temperature[,path]]", line_no);
        }
        const auto rate = text::parse_c_rate(f[1]);
        if (!rate) {
            throw ParseError("bad C-rate '" + std::string(f[1]) + "'", line_no);
        }
        ManifestEntry e;
        e.battery_id = std::string(f[0]);
        e.c_rate_denominator = *rate;
        if (f.size() > 2 && !f[2].empty()) {
            e.temperature = std::string(f[2]);
        }
        if (f.size() > 3) {
            e.path = std::string(f[3]);
        }
        if (!seen.emplace(e.battery_id, e.c_rate_denominator).second) {
            throw ParseError("duplicate entry " + e.battery_id + " at " + e.c_rate_label(), line_no);
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) {
        throw DataError("manifest has no entries");
    }
    std::stable_sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) {
        return a.c_rate_denominator < b.c_rate_denominator;
    });
    m.reference_c_rate = m.entries.back().c_rate_denominator;
    if (declared_ref && *declared_ref != m.reference_c_rate) {
        throw DataError("declared reference " + text::c_rate_label(*declared_ref) +
                        " is not the slowest rate present (" + text::c_rate_label(m.reference_c_rate) + ")");
    }
    return m;
}

inline void write_manifest(std::ostream& out, const Manifest& m) {
    out << "reference: " << text::c_rate_label(m.reference_c_rate) << '\n';
    out << "battery_id,c_rate,temperature,path\n";
    for (const auto& e : m.entries) {
        out << e.battery_id << ',' << e.c_rate_label() << ',' << e.temperature << ',' << e.path << '\n';
    }
}

} // namespace ocvkit
