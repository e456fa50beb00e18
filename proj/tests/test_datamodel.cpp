#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ocvkit/datamodel.hpp"
#include "ocvkit/synth.hpp"
#include "oracles.hpp"

using namespace ocvkit;

namespace {

ParseConfig short_columns() {
    ParseConfig c;
    c.time_column = "t";
    c.current_column = "i";
    c.voltage_column = "v";
    return c;
}

CyclingRecord parse(const std::string& csv, const ParseConfig& cfg = {}) {
    std::istringstream in(csv);
    return parse_cycling_csv(in, cfg);
}

std::string error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

CyclingRecord from_currents(const std::vector<double>& currents, double dt) {
    CyclingRecord r;
    r.battery_id = "T";
    for (std::size_t k = 0; k < currents.size(); ++k) {
        r.samples.push_back({static_cast<double>(k) * dt, currents[k], 3.7});
    }
    return r;
}

} // namespace

TEST(ParseCyclingCsv, ThreeRows) {
    const auto r = parse("t,i,v\n0,-2,4.1\n1,-2,4.099\n2,-2,4.098\n", short_columns());
    ASSERT_EQ(r.samples.size(), 3u);
    for (const auto& s : r.samples) {
        EXPECT_EQ(s.i, -2.0);
    }
    EXPECT_EQ(r.samples[1].v, 4.099);
    EXPECT_TRUE(r.phases.empty());
}

TEST(ParseCyclingCsv, NonMonotoneTimeNamesIndex) {
    const auto msg = error_of([] { parse("t,i,v\n0,-2,4.1\n2,-2,4.0\n1,-2,4.0\n", short_columns()); });
    EXPECT_NE(msg.find("index 2"), std::string::npos) << msg;
}

TEST(ParseCyclingCsv, MissingColumnNamed) {
    const auto msg = error_of([] { parse("t_s,i_a\n0,1\n"); });
    EXPECT_NE(msg.find("v_v"), std::string::npos) << msg;
}

TEST(ParseCyclingCsv, MalformedRowCarriesLineNumber) {
    try {
        parse("t_s,i_a,v_v\n0,1,3.7\n1,abc,3.7\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse("t_s,i_a,v_v\n0,1\n"), ParseError);
    EXPECT_THROW(parse(""), ParseError);
}

TEST(ParseCyclingCsv, DuplicateTimestampsKeepLast) {
    const auto r = parse("t_s,i_a,v_v\n0,1,3.0\n1,1,3.1\n1,1,3.2\n2,1,3.3\n");
    ASSERT_EQ(r.samples.size(), 3u);
    EXPECT_EQ(r.samples[1].v, 3.2);
}

TEST(ParseCyclingCsv, PolarityFlagNegatesCurrent) {
    ParseConfig c;
    c.discharge_positive = true;
    const auto r = parse("t_s,i_a,v_v\n0,2,4.1\n", c);
    EXPECT_EQ(r.samples[0].i, -2.0);
}

TEST(ParseCyclingCsv, ImplausibleVoltageFlaggedNotDropped) {
    const auto r = parse("t_s,i_a,v_v\n0,1,3.7\n1,1,7.0\n2,1,0.1\n3,1,3.7\n");
    EXPECT_EQ(r.samples.size(), 4u);
    EXPECT_EQ(r.implausible_voltage, (std::vector<std::size_t>{1, 2}));
}

TEST(ParseCyclingCsv, ExtraColumnsAndReordering) {
    const auto r = parse("step,v_v,i_a,t_s\n1,3.5,-0.5,10\n1,3.4,-0.5,20\n");
    ASSERT_EQ(r.samples.size(), 2u);
    EXPECT_EQ(r.samples[1].t, 20.0);
    EXPECT_EQ(r.samples[1].v, 3.4);
}

TEST(ParseCyclingCsv, SynthExportRoundTrips) {
    SynthScenario sc;
    sc.truth_model = reference_truth_model();
    sc.c_rate_denominator = 128;
    sc.sample_period = 600.0;
    sc.noise_sigma = 1e-4;
    sc.r0_true = 0.018;
    const auto rec = generate_cell(sc, 0);
    std::stringstream buf;
    write_cycling_csv(buf, rec);
    const auto back = parse_cycling_csv(buf, {});
    ASSERT_EQ(back.samples.size(), rec.samples.size());
    for (std::size_t k = 0; k < rec.samples.size(); ++k) {
        EXPECT_NEAR(back.samples[k].t, rec.samples[k].t, 1e-12 * std::abs(rec.samples[k].t));
        EXPECT_NEAR(back.samples[k].i, rec.samples[k].i, 1e-12 * std::abs(rec.samples[k].i));
        EXPECT_NEAR(back.samples[k].v, rec.samples[k].v, 1e-12 * std::abs(rec.samples[k].v));
    }
}

TEST(ParseCyclingCsv, RoundTripPropertyOverRandomRecords) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dt(1e-3, 100.0);
    std::uniform_real_distribution<double> cur(-10.0, 10.0);
    std::uniform_real_distribution<double> volt(2.0, 4.5);
    for (int trial = 0; trial < 20; ++trial) {
        CyclingRecord rec;
        double t = 0.0;
        for (int k = 0; k < 200; ++k) {
            t += dt(rng);
            rec.samples.push_back({t, cur(rng), volt(rng)});
        }
        std::stringstream buf;
        write_cycling_csv(buf, rec);
        const auto back = parse_cycling_csv(buf, {});
        EXPECT_EQ(back.samples, rec.samples);
    }
}

TEST(SegmentPhases, TwoHomogeneousRuns) {
    std::vector<double> i(100, -0.031);
    i.insert(i.end(), 100, 0.031);
    const auto r = segment_phases(from_currents(i, 1.0));
    ASSERT_EQ(r.phases.size(), 2u);
    EXPECT_EQ(r.phases[0], (PhaseSegment{PhaseKind::Discharge, 0, 100}));
    EXPECT_EQ(r.phases[1], (PhaseSegment{PhaseKind::Charge, 100, 200}));
}

TEST(SegmentPhases, TrailingAlternationBecomesPulseTrain) {
    std::vector<double> i(2000, -0.031);
    i.insert(i.end(), 2000, 0.031);
    i.insert(i.end(), 4000, 0.0);
    for (int p = 0; p < 5; ++p) {
        i.insert(i.end(), 10, -1.0);
        i.insert(i.end(), 10, 0.0);
    }
    const auto r = segment_phases(from_currents(i, 0.005));

    // oracle: the pulse train starts at the first run of the trailing block of 10-sample runs
    std::vector<int> labels;
    for (double x : i) {
        labels.push_back(x < -0.5 ? 2 : (x < 0 ? -1 : (x > 0 ? 1 : 0)));
    }
    const auto runs = oracle::run_lengths(labels);
    std::size_t first = runs.size();
    while (first > 0 && runs[first - 1].length <= 10) {
        --first;
    }
    const std::size_t expected_start = runs[first].start;

    ASSERT_FALSE(r.phases.empty());
    const auto last = r.phases.back();
    EXPECT_EQ(last.kind, PhaseKind::PulseTrain);
    EXPECT_EQ(last.start_index, expected_start);
    EXPECT_EQ(last.end_index, i.size());
    EXPECT_EQ(r.phases[0].kind, PhaseKind::Discharge);
    EXPECT_EQ(r.phases[1].kind, PhaseKind::Charge);
    EXPECT_EQ(r.phases[2].kind, PhaseKind::Rest);
}

TEST(SegmentPhases, AllZeroIsIncomplete) {
    const auto msg = error_of([] { segment_phases(from_currents(std::vector<double>(500, 0.0), 1.0)); });
    EXPECT_NE(msg.find("incomplete low-rate test"), std::string::npos);
}

TEST(SegmentPhases, DischargeOnlyIsIncomplete) {
    EXPECT_THROW(segment_phases(from_currents(std::vector<double>(500, -1.0), 1.0)), DataError);
}

TEST(SegmentPhases, ChargeBeforeDischargeIsPrecharge) {
    std::vector<double> i(100, 0.5);
    i.insert(i.end(), 100, -0.5);
    i.insert(i.end(), 100, 0.5);
    const auto r = segment_phases(from_currents(i, 1.0));
    ASSERT_EQ(r.phases.size(), 3u);
    EXPECT_EQ(r.phases[0].kind, PhaseKind::Precharge);
    EXPECT_EQ(r.phases[1].kind, PhaseKind::Discharge);
    EXPECT_EQ(r.phases[2].kind, PhaseKind::Charge);
}

TEST(SegmentPhases, ShortGlitchMergesIntoNeighbour) {
    std::vector<double> i(100, -0.5);
    i.insert(i.end(), 3, 0.0); // 3 s dropout, below min dwell
    i.insert(i.end(), 100, -0.5);
    i.insert(i.end(), 100, 0.5);
    const auto r = segment_phases(from_currents(i, 1.0));
    ASSERT_EQ(r.phases.size(), 2u);
    EXPECT_EQ(r.phases[0], (PhaseSegment{PhaseKind::Discharge, 0, 203}));
}

TEST(SegmentPhases, IdempotentAndNeverSplitsLongRuns) {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> len(1, 40);
    std::uniform_int_distribution<int> sign(-1, 1);
    const SegmentConfig cfg;
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> i(60, -0.2);
        i.insert(i.end(), 60, 0.2);
        const int extra = len(rng) % 6;
        for (int r = 0; r < extra; ++r) {
            i.insert(i.end(), static_cast<std::size_t>(len(rng)), 0.2 * sign(rng));
        }
        const auto rec = from_currents(i, 1.0);
        CyclingRecord once;
        try {
            once = segment_phases(rec, cfg);
        } catch (const DataError&) {
            continue;
        }
        const auto twice = segment_phases(once, cfg);
        EXPECT_EQ(once.phases, twice.phases);

        // every maximal run lasting at least min_dwell lies inside one segment
        std::vector<int> labels;
        for (double x : i) {
            labels.push_back(x > cfg.rest_epsilon ? 1 : (x < -cfg.rest_epsilon ? -1 : 0));
        }
        for (const auto& run : oracle::run_lengths(labels)) {
            const std::size_t end = run.start + run.length;
            const double t_end = end < i.size() ? static_cast<double>(end) : static_cast<double>(i.size() - 1);
            if (t_end - static_cast<double>(run.start) < cfg.min_dwell) {
                continue;
            }
            const bool inside = std::any_of(once.phases.begin(), once.phases.end(), [&](const PhaseSegment& p) {
                return p.start_index <= run.start && end <= p.end_index;
            });
            EXPECT_TRUE(inside) << "run at " << run.start << " split";
        }
        ++checked;
    }
    EXPECT_GT(checked, 100);
}

TEST(SegmentPhases, SynthRecordHasAllPhases) {
    SynthScenario sc;
    sc.truth_model = reference_truth_model();
    sc.sample_period = 10.0;
    const auto r = segment_phases(generate_cell(sc, 0));
    std::vector<PhaseKind> kinds;
    for (const auto& p : r.phases) {
        kinds.push_back(p.kind);
    }
    EXPECT_EQ(kinds, (std::vector<PhaseKind>{PhaseKind::Discharge, PhaseKind::Rest, PhaseKind::Charge, PhaseKind::Rest,
                                             PhaseKind::PulseTrain}));
}

namespace {

Manifest manifest(const std::string& text) {
    std::istringstream in(text);
    return load_manifest(in);
}

} // namespace

TEST(LoadManifest, ReferenceIsSlowestRate) {
    const auto m = manifest(
        "battery_id,c_rate,temperature,path\n"
        "D3209,C/2,Room,a.csv\nD3210,C/2,Room,b.csv\nD3211,C/2,Room,c.csv\nD3212,C/2,Room,d.csv\n"
        "D3209,C/64,Room,e.csv\nD3210,C/64,Room,f.csv\nD3211,C/64,Room,g.csv\nD3212,C/64,Room,h.csv\n"
        "D3213,C/128,Room,i.csv\nD3214,C/128,Room,j.csv\nD3215,C/128,Room,k.csv\nD3216,C/128,Room,l.csv\n");
    EXPECT_EQ(m.reference_c_rate, 128);
    EXPECT_EQ(m.rates(), (std::vector<int>{2, 64, 128}));
    EXPECT_EQ(m.entries_for(64).size(), 4u);
    EXPECT_EQ(m.entries.front().c_rate_denominator, 2);
}

TEST(LoadManifest, SingleEntry) {
    const auto m = manifest("D3201,C/8\n");
    EXPECT_EQ(m.reference_c_rate, 8);
    EXPECT_EQ(m.entries[0].temperature, "Room");
}

TEST(LoadManifest, DuplicateRejected) {
    EXPECT_THROW(manifest("D3201,C/8\nD3201,C/8\n"), ParseError);
}

TEST(LoadManifest, EmptyRejected) {
    EXPECT_THROW(manifest("# nothing\n\n"), DataError);
}

TEST(LoadManifest, ReferenceLine) {
    EXPECT_EQ(manifest("reference: C/128\nA,C/2\nB,C/128\n").reference_c_rate, 128);
    EXPECT_THROW(manifest("reference: C/64\nA,C/2\nB,C/128\n"), DataError);
    EXPECT_THROW(manifest("A,2\n"), ParseError);
}

TEST(LoadManifest, WriteLoadRoundTrip) {
    const auto m = manifest("X1,C/4,Cold,x1.csv\nX2,C/16,Room,x2.csv\n");
    std::stringstream buf;
    write_manifest(buf, m);
    const auto back = load_manifest(buf);
    ASSERT_EQ(back.entries.size(), 2u);
    EXPECT_EQ(back.entries[0].temperature, "Cold");
    EXPECT_EQ(back.entries[1].path, "x2.csv");
    EXPECT_EQ(back.reference_c_rate, 16);
}

TEST(StandardRates, Membership) {
    for (int n : {2, 4, 8, 16, 32, 64, 128}) {
        EXPECT_TRUE(is_standard_rate(n));
    }
    EXPECT_FALSE(is_standard_rate(3));
}
