#pragma once

// Command implementations behind the `ocvkit` tool. Each command reads its inputs from the
// manifest, writes files under the output directory and returns a process exit code:
// 0 success, 1 usage error, 2 data error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ocvkit/analysis.hpp"
#include "ocvkit/datamodel.hpp"
#include "ocvkit/electrical.hpp"
#include "ocvkit/error.hpp"
#include "ocvkit/models.hpp"
#include "ocvkit/report.hpp"
#include "ocvkit/synth.hpp"
#include "ocvkit/uncertainty.hpp"

namespace ocvkit::cli {

namespace fs = std::filesystem;

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_data = 2;

enum class Which { C2C, Crate, Curvefit, All };

inline Which parse_which(std::string_view s) {
    if (s == "c2c") return Which::C2C;
    if (s == "crate") return Which::Crate;
    if (s == "curvefit") return Which::Curvefit;
    if (s == "all") return Which::All;
    throw UsageError("--which must be one of c2c, crate, curvefit, all");
}

inline std::vector<ModelKind> parse_models(const std::string& list) {
    std::vector<ModelKind> out;
    for (auto name : text::split(list)) {
        if (!name.empty()) {
            out.push_back(parse_model_kind(name));
        }
    }
    if (out.empty()) {
        throw UsageError("--models is empty");
    }
    return out;
}

struct RunConfig {
    fs::path manifest;
    int grid_k = 100;
    std::vector<ModelKind> models{ModelKind::Nernst, ModelKind::Combined, ModelKind::CombinedPlus3};
    double epsilon = default_epsilon;
    double alpha = 0.05;
    fs::path out = "out";
    Which which = Which::All;
    std::optional<std::uint64_t> seed;
    fs::path scenario;
    /// Nominal capacity used to scale the rest threshold of phase segmentation [Ah].
    double nominal_ah = 4.0;
    ParseConfig parse;

    void validate() const {
        if (grid_k < 2) {
            throw UsageError("--grid-k must be >= 2");
        }
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw UsageError("--alpha must be in (0, 1)");
        }
        scale_soc(0.5, epsilon);
        if (!(nominal_ah > 0.0)) {
            throw UsageError("--nominal-ah must be positive");
        }
    }
};

inline std::string experiment_name(const ManifestEntry& e) {
    return e.battery_id + "_C" + std::to_string(e.c_rate_denominator);
}

inline std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) {
        throw DataError("cannot write " + p.string());
    }
    return f;
}

inline Manifest read_manifest_file(const fs::path& p) {
    std::ifstream f(p);
    if (!f) {
        throw DataError("cannot open manifest " + p.string());
    }
    return load_manifest(f);
}

/// Parsed, segmented record of one manifest entry.
inline CyclingRecord load_experiment(const ManifestEntry& e, const RunConfig& cfg) {
    const fs::path path = e.path.empty() ? fs::path(experiment_name(e) + ".csv") : fs::path(e.path);
    const fs::path full = path.is_absolute() ? path : cfg.manifest.parent_path() / path;
    std::ifstream f(full);
    if (!f) {
        throw DataError(e.battery_id + " " + e.c_rate_label() + ": cannot open " + full.string());
    }
    ParseConfig pc = cfg.parse;
    pc.battery_id = e.battery_id;
    pc.c_rate_denominator = e.c_rate_denominator;
    pc.temperature_tag = e.temperature;
    auto rec = parse_cycling_csv(f, pc);
    return segment_phases(std::move(rec), SegmentConfig::for_capacity(cfg.nominal_ah));
}

/// Everything the commands derive from one experiment.
struct Experiment {
    ManifestEntry entry;
    CyclingRecord record;
    LowRateBranches branches;
    PseudoOcvResult pseudo;
    std::map<ModelKind, FittedModel> models;
    std::optional<R0Estimate> r0;
};

struct LoadResult {
    std::vector<Experiment> experiments;
    int failures = 0;
};

/// Loads every manifest entry; failing entries are reported on `log` and skipped.
inline LoadResult load_all(const Manifest& m, const RunConfig& cfg, bool with_models, std::ostream& log) {
    const auto grid = make_soc_grid(cfg.grid_k);
    LoadResult out;
    for (const auto& e : m.entries) {
        try {
            Experiment x;
            x.entry = e;
            x.record = load_experiment(e, cfg);
            if (!x.record.implausible_voltage.empty()) {
                log << "warning: " << experiment_name(e) << ": " << x.record.implausible_voltage.size()
                    << " sample(s) outside the voltage plausibility window\n";
            }
            x.branches = split_branches(x.record);
            x.pseudo = extract_pseudo_ocv(x.record, grid);
            const auto bad = x.pseudo.table.monotonicity_violations();
            if (!bad.empty()) {
                log << "warning: " << experiment_name(e) << ": OCV drops by more than 1 mV at " << bad.size()
                    << " grid point(s)\n";
            }
            if (with_models) {
                for (auto kind : cfg.models) {
                    x.models.emplace(kind, fit(branch_problem(x.branches, kind, true), cfg.epsilon));
                }
                if (x.record.find_phase(PhaseKind::PulseTrain)) {
                    x.r0 = estimate_r0(pulse_window(x.record));
                    if (x.r0->implausible) {
                        log << "warning: " << experiment_name(e) << ": negative pulse resistance\n";
                    }
                }
            }
            out.experiments.push_back(std::move(x));
        } catch (const DataError& err) {
            log << "error: " << experiment_name(e) << ": " << err.what() << '\n';
            ++out.failures;
        }
    }
    return out;
}

inline int cmd_pseudo_ocv(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto manifest = read_manifest_file(cfg.manifest);
    const auto loaded = load_all(manifest, cfg, false, log);
    for (const auto& x : loaded.experiments) {
        auto f = open_out(cfg.out / "ocv" / (experiment_name(x.entry) + ".csv"));
        write_ocv_csv(f, x.pseudo.table);
    }
    if (!loaded.experiments.empty()) {
        auto f = open_out(cfg.out / "ocv_overlay.csv");
        f << "soc";
        for (const auto& x : loaded.experiments) {
            f << ',' << experiment_name(x.entry);
        }
        f << '\n';
        const auto grid = make_soc_grid(cfg.grid_k);
        for (std::size_t l = 0; l < grid.k(); ++l) {
            f << text::exact(grid[l]);
            for (const auto& x : loaded.experiments) {
                f << ',' << text::exact(x.pseudo.table.rows[l].v);
            }
            f << '\n';
        }
    }
    log << "pseudo-ocv: " << loaded.experiments.size() << " table(s) written, " << loaded.failures << " failed\n";
    return loaded.failures == 0 ? exit_ok : exit_data;
}

/// Model whose resistance term is reported: the richest kind that was fitted.
inline const FittedModel* resistance_model(const Experiment& x) {
    for (auto kind : {ModelKind::CombinedPlus3, ModelKind::Combined, ModelKind::Nernst}) {
        if (auto it = x.models.find(kind); it != x.models.end()) {
            return &it->second;
        }
    }
    return nullptr;
}

inline ResistanceRow resistance_row(const Experiment& x) {
    ResistanceRow row;
    row.battery_id = x.entry.battery_id;
    row.c_rate_denominator = x.entry.c_rate_denominator;
    double isum = 0.0;
    for (const auto& s : x.branches.discharge) {
        isum += std::abs(s.i);
    }
    row.current = isum / static_cast<double>(x.branches.discharge.size());
    row.capacity = x.pseudo.capacity;
    if (const auto* m = resistance_model(x)) {
        row.r_total = m->r_total;
    }
    if (x.r0) {
        row.r0 = x.r0->r0;
        if (row.r_total) {
            row.r_h = split_resistance(*row.r_total, x.r0->r0).r_h;
        }
    }
    return row;
}

inline void write_resistance_tables(const std::vector<Experiment>& xs, const fs::path& out) {
    auto f = open_out(out / "capacity_resistance.csv");
    f << resistance_header() << '\n';
    auto h = open_out(out / "capacity_resistance.txt");
    h << "Battery, C-Rate, i (A), Q_c (Ah), Q_d (Ah), Q_c-Q_d (Ah), R_oh (mOhm), R0 (mOhm), R_h (mOhm), "
         "V_d (mV), h2_bar (mV)\n";
    for (const auto& x : xs) {
        const auto row = resistance_row(x);
        f << format_resistance_row(row) << '\n';
        h << format_resistance_row_human(row) << '\n';
    }
}

inline int cmd_fit(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto manifest = read_manifest_file(cfg.manifest);
    const auto loaded = load_all(manifest, cfg, true, log);
    for (const auto& x : loaded.experiments) {
        for (const auto& [kind, model] : x.models) {
            auto f = open_out(cfg.out / "models" / (experiment_name(x.entry) + "_" + to_string(kind) + ".json"));
            write_model(f, model);
        }
    }
    write_resistance_tables(loaded.experiments, cfg.out);
    log << "fit: " << loaded.experiments.size() << " experiment(s) fitted, " << loaded.failures << " failed\n";
    return loaded.failures == 0 ? exit_ok : exit_data;
}

namespace detail {

inline std::string mv(double volts) { return text::fixed(volts * 1e3, 4); }

inline std::string summary_line(const std::string& label, const GridMetrics& g, const ZeroMeanVerdict* v) {
    std::string s = label + ": mu = " + mv(g.mu_avg) + " mV, sigma = " + mv(g.sigma_avg) + " mV";
    if (g.standard_mean) {
        s += ", standard mean = " + text::fixed(*g.standard_mean, 4);
    }
    if (v) {
        s += v->pass ? " (zero-mean: pass)" : " (zero-mean: FAIL)";
    }
    return s;
}

} // namespace detail

/// Computes the requested metrics for already-loaded experiments and writes the report files.
inline int write_metrics(const std::vector<Experiment>& xs, const Manifest& manifest, const RunConfig& cfg,
                         std::ostream& log) {
    const auto grid = make_soc_grid(cfg.grid_k);
    const bool all = cfg.which == Which::All;

    std::map<int, CohortOcv> cohorts;
    std::map<int, std::map<ModelKind, std::vector<FittedModel>>> models;
    for (const auto& x : xs) {
        auto& c = cohorts[x.entry.c_rate_denominator];
        c.grid = grid;
        c.c_rate_denominator = x.entry.c_rate_denominator;
        c.cells.push_back({x.entry.battery_id, x.pseudo.table.voltages()});
        for (const auto& [kind, m] : x.models) {
            models[x.entry.c_rate_denominator][kind].push_back(m);
        }
    }

    json report;
    report["grid_k"] = cfg.grid_k;
    report["epsilon"] = cfg.epsilon;
    report["alpha"] = cfg.alpha;
    report["reference_c_rate"] = text::c_rate_label(manifest.reference_c_rate);
    json notes = json::array();
    std::ostringstream summary;
    auto window = [&](const std::string& name, const GridMetrics& g) {
        auto f = open_out(cfg.out / "windows" / (name + ".csv"));
        write_window_csv(f, g, grid);
    };
    auto metric = [&](const GridMetrics& g) {
        std::optional<ZeroMeanVerdict> v;
        if (g.standard_mean) {
            v = zero_mean_test(*g.standard_mean, cfg.alpha);
        }
        return std::make_pair(to_json(g, grid, v), v);
    };

    if (all || cfg.which == Which::C2C) {
        json c2c = json::object();
        summary << "Cell-to-cell variation\n";
        for (const auto& [rate, cohort] : cohorts) {
            const auto label = text::c_rate_label(rate);
            if (cohort.cells.size() < 2) {
                notes.push_back("c2c " + label + ": fewer than 2 cells, skipped");
                continue;
            }
            const auto g = c2c_metrics(cohort);
            const auto [j, v] = metric(g);
            c2c[label] = j;
            window("c2c_C" + std::to_string(rate), g);
            summary << "  " << detail::summary_line(label, g, v ? &*v : nullptr) << '\n';
        }
        report["c2c"] = c2c;
    }

    if (all || cfg.which == Which::Crate) {
        std::vector<CohortOcv> list;
        for (const auto& [rate, c] : cohorts) {
            list.push_back(c);
        }
        const auto avg = crate_reference(list);
        if (avg.by_rate.size() < 2) {
            if (!all) {
                throw DataError("no non-reference rates in the manifest");
            }
            notes.push_back("crate: no non-reference rates, skipped");
        } else {
            const auto cm = crate_metrics(avg);
            json crate;
            json per = json::object();
            summary << "Cycle-rate error (reference " << text::c_rate_label(avg.reference) << ")\n";
            for (const auto& [rate, g] : cm.per_rate) {
                const auto label = text::c_rate_label(rate);
                const auto [j, v] = metric(g);
                per[label] = j;
                window("crate_C" + std::to_string(rate), g);
                summary << "  " << detail::summary_line(label, g, v ? &*v : nullptr) << '\n';
            }
            crate["per_rate"] = per;
            if (cm.pooled) {
                const auto [j, v] = metric(*cm.pooled);
                crate["pooled"] = j;
                window("crate_pooled", *cm.pooled);
                summary << "  " << detail::summary_line("pooled", *cm.pooled, v ? &*v : nullptr) << '\n';
            }
            report["crate"] = crate;
        }
    }

    if (all || cfg.which == Which::Curvefit) {
        json cf = json::object();
        summary << "Curve-fitting error\n";
        for (const auto& [rate, by_kind] : models) {
            const auto label = text::c_rate_label(rate);
            std::vector<CohortOcv> one{cohorts.at(rate)};
            const auto ref = crate_reference(one).reference_curve();
            json per = json::object();
            for (const auto& [kind, ms] : by_kind) {
                const auto g = curvefit_metrics(curvefit_predicted(ms, grid), ref);
                const auto [j, v] = metric(g);
                per[to_string(kind)] = j;
                window("curvefit_C" + std::to_string(rate) + "_" + to_string(kind), g);
                summary << "  " << detail::summary_line(label + " " + display_name(kind), g, v ? &*v : nullptr)
                        << '\n';
            }
            cf[label] = per;
        }
        report["curvefit"] = cf;
    }
    report["notes"] = notes;

    auto f = open_out(cfg.out / "metrics.json");
    f << report.dump(2) << '\n';
    auto s = open_out(cfg.out / "metrics_summary.txt");
    s << summary.str();
    log << summary.str();
    return exit_ok;
}

inline int cmd_metrics(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto manifest = read_manifest_file(cfg.manifest);
    if (cfg.which == Which::Crate && manifest.rates().size() < 2) {
        throw DataError("no non-reference rates in the manifest");
    }
    const bool need_models = cfg.which == Which::All || cfg.which == Which::Curvefit;
    const auto loaded = load_all(manifest, cfg, need_models, log);
    if (loaded.experiments.empty()) {
        throw DataError("no experiment could be loaded");
    }
    const int rc = write_metrics(loaded.experiments, manifest, cfg, log);
    return loaded.failures == 0 ? rc : exit_data;
}

/// pseudo-ocv + fit + metrics in one pass.
inline int cmd_report(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const auto manifest = read_manifest_file(cfg.manifest);
    const auto loaded = load_all(manifest, cfg, true, log);
    if (loaded.experiments.empty()) {
        throw DataError("no experiment could be loaded");
    }
    for (const auto& x : loaded.experiments) {
        auto f = open_out(cfg.out / "ocv" / (experiment_name(x.entry) + ".csv"));
        write_ocv_csv(f, x.pseudo.table);
        for (const auto& [kind, model] : x.models) {
            auto g = open_out(cfg.out / "models" / (experiment_name(x.entry) + "_" + to_string(kind) + ".json"));
            write_model(g, model);
        }
    }
    write_resistance_tables(loaded.experiments, cfg.out);
    RunConfig all = cfg;
    all.which = Which::All;
    write_metrics(loaded.experiments, manifest, all, log);
    return loaded.failures == 0 ? exit_ok : exit_data;
}

inline int cmd_synth(const RunConfig& cfg, std::ostream& log) {
    std::ifstream f(cfg.scenario);
    if (!f) {
        throw UsageError("cannot open scenario file '" + cfg.scenario.string() + "'");
    }
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw UsageError(std::string("scenario file: ") + e.what());
    }
    auto plan = plan_from_json(j);
    if (cfg.seed) {
        plan.base.seed = *cfg.seed;
    }
    Manifest m;
    for (std::size_t r = 0; r < plan.rates.size(); ++r) {
        const auto sc = plan.scenario_for(r);
        for (std::size_t c = 0; c < plan.cells_per_rate; ++c) {
            const auto rec = generate_cell(sc, c);
            ManifestEntry e;
            e.battery_id = rec.battery_id;
            e.c_rate_denominator = rec.c_rate_denominator;
            e.temperature = rec.temperature_tag;
            e.path = experiment_name(e) + ".csv";
            auto out = open_out(cfg.out / e.path);
            write_cycling_csv(out, rec);
            m.entries.push_back(std::move(e));
        }
    }
    std::stable_sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) {
        return a.c_rate_denominator < b.c_rate_denominator;
    });
    m.reference_c_rate = m.entries.back().c_rate_denominator;
    auto mf = open_out(cfg.out / "manifest.txt");
    write_manifest(mf, m);
    log << "synth: " << m.entries.size() << " record(s) written to " << cfg.out.string() << '\n';
    return exit_ok;
}

/// Maps exceptions from a command onto the exit-code contract.
template <class Fn>
int run_guarded(Fn&& fn, std::ostream& err) {
    try {
        return fn();
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    }
}

} // namespace ocvkit::cli
