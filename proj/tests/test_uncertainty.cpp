#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ocvkit/synth.hpp"
#include "ocvkit/uncertainty.hpp"
#include "oracles.hpp"

using namespace ocvkit;

namespace {

CohortOcv random_cohort(std::size_t q, std::size_t k, std::mt19937_64& rng, int rate = 2) {
    std::normal_distribution<double> n(3.7, 0.01);
    CohortOcv c;
    c.grid = make_soc_grid(static_cast<int>(k));
    c.c_rate_denominator = rate;
    for (std::size_t i = 0; i < q; ++i) {
        CellOcv cell{"cell" + std::to_string(i + 1), {}};
        for (std::size_t l = 0; l < k; ++l) {
            cell.v.push_back(n(rng));
        }
        c.cells.push_back(cell);
    }
    return c;
}

std::vector<double> column(const CohortOcv& c, std::size_t l) {
    std::vector<double> v;
    for (const auto& cell : c.cells) {
        v.push_back(cell.v[l]);
    }
    return v;
}

} // namespace

TEST(C2c, SinglePairConstantOffset) {
    CohortOcv c;
    c.grid = make_soc_grid(10);
    const double delta = 0.0042;
    CellOcv a{"a", {}};
    CellOcv b{"b", {}};
    for (double s : c.grid.points()) {
        a.v.push_back(3.5 + s + delta);
        b.v.push_back(3.5 + s);
    }
    c.cells = {a, b};
    const auto g = c2c_metrics(c);
    for (std::size_t l = 0; l < 10; ++l) {
        EXPECT_NEAR(g.mu[l], delta, 1e-15);
        EXPECT_NEAR(g.sigma[l], delta, 1e-15);
    }
}

TEST(C2c, IdenticalCellsAreZero) {
    std::mt19937_64 rng(1);
    auto c = random_cohort(1, 20, rng);
    c.cells.resize(4, c.cells[0]);
    const auto g = c2c_metrics(c);
    for (std::size_t l = 0; l < 20; ++l) {
        EXPECT_EQ(g.mu[l], 0.0);
        EXPECT_EQ(g.sigma[l], 0.0);
    }
    EXPECT_FALSE(g.standard_mean.has_value());
}

TEST(C2c, PairEnumerationOracle) {
    std::mt19937_64 rng(2);
    const auto q4 = oracle::pair_enumeration({1, 2, 3, 4});
    EXPECT_EQ(q4.pairs, (std::vector<std::pair<int, int>>{{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}}));
    for (std::size_t q = 2; q <= 6; ++q) {
        const auto c = random_cohort(q, 50, rng);
        const auto g = c2c_metrics(c);
        double mu_sum = 0.0;
        double sg_sum = 0.0;
        for (std::size_t l = 0; l < 50; ++l) {
            const auto o = oracle::pair_enumeration(column(c, l));
            EXPECT_NEAR(g.mu[l], o.mean, 1e-12);
            EXPECT_NEAR(g.sigma[l], o.rms, 1e-12);
            EXPECT_EQ(o.pairs.size(), q * (q - 1) / 2);
            mu_sum += o.mean;
            sg_sum += o.rms;
        }
        EXPECT_NEAR(g.mu_avg, mu_sum / 50, 1e-12);
        EXPECT_NEAR(g.sigma_avg, sg_sum / 50, 1e-12);
        EXPECT_NEAR(*g.standard_mean, g.mu_avg / g.sigma_avg, 1e-12);
    }
}

TEST(C2c, NeedsTwoCells) {
    std::mt19937_64 rng(3);
    EXPECT_THROW(c2c_metrics(random_cohort(1, 5, rng)), DataError);
    auto bad = random_cohort(3, 5, rng);
    bad.cells[1].v.pop_back();
    EXPECT_THROW(c2c_metrics(bad), DataError);
}

TEST(C2c, PermutationSymmetry) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = random_cohort(5, 30, rng);
        const auto g = c2c_metrics(c);
        std::shuffle(c.cells.begin(), c.cells.end(), rng);
        const auto h = c2c_metrics(c);
        for (std::size_t l = 0; l < 30; ++l) {
            EXPECT_NEAR(h.sigma[l], g.sigma[l], 1e-15);
        }
    }
    auto two = random_cohort(2, 30, rng);
    const auto g = c2c_metrics(two);
    std::swap(two.cells[0], two.cells[1]);
    const auto h = c2c_metrics(two);
    for (std::size_t l = 0; l < 30; ++l) {
        EXPECT_EQ(h.mu[l], -g.mu[l]);
        EXPECT_EQ(h.sigma[l], g.sigma[l]);
    }
}

TEST(C2c, TranslationInvariance) {
    std::mt19937_64 rng(5);
    auto c = random_cohort(4, 30, rng);
    const auto g = c2c_metrics(c);
    for (auto& cell : c.cells) {
        for (double& v : cell.v) {
            v += 0.5;
        }
    }
    const auto h = c2c_metrics(c);
    for (std::size_t l = 0; l < 30; ++l) {
        EXPECT_NEAR(h.mu[l], g.mu[l], 1e-12);
        EXPECT_NEAR(h.sigma[l], g.sigma[l], 1e-12);
    }

    auto two = random_cohort(2, 30, rng);
    const auto a = c2c_metrics(two);
    for (double& v : two.cells[0].v) {
        v += 0.003;
    }
    const auto b = c2c_metrics(two);
    for (std::size_t l = 0; l < 30; ++l) {
        EXPECT_NEAR(b.mu[l], a.mu[l] + 0.003, 1e-12);
    }
}

TEST(C2c, SyntheticOffsetsRecoverSqrt2Sigma) {
    const double sigma0 = 1e-3;
    double mean_sigma = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CohortOcv c;
        c.grid = make_soc_grid(1000);
        const auto offsets = draw_offsets(8, sigma0, seed);
        const auto truth = reference_truth_model();
        for (std::size_t i = 0; i < 8; ++i) {
            CellOcv cell{"c" + std::to_string(i), {}};
            for (double s : c.grid.points()) {
                cell.v.push_back(eval(truth, s) + offsets[i]);
            }
            c.cells.push_back(cell);
        }
        mean_sigma += c2c_metrics(c).sigma_avg / 10.0;
    }
    EXPECT_NEAR(mean_sigma, sigma0 * std::sqrt(2.0), 0.1 * sigma0 * std::sqrt(2.0));
}

TEST(CrateReference, Means) {
    CohortOcv one;
    one.grid = make_soc_grid(2);
    one.c_rate_denominator = 8;
    one.cells = {{"a", {3.1, 3.9}}};
    std::vector<CohortOcv> v{one};
    EXPECT_EQ(crate_reference(v).by_rate.at(8), (std::vector<double>{3.1, 3.9}));

    CohortOcv four;
    four.grid = make_soc_grid(2);
    four.c_rate_denominator = 128;
    four.cells = {{"a", {3.0, 4.0}}, {"b", {3.2, 4.0}}, {"c", {3.4, 4.0}}, {"d", {3.6, 4.0}}};
    v.push_back(four);
    const auto avg = crate_reference(v);
    EXPECT_NEAR(avg.by_rate.at(128)[0], 3.3, 1e-15);
    EXPECT_EQ(avg.reference, 128);
}

TEST(CrateReference, MatchesMeanOracle) {
    std::mt19937_64 rng(6);
    std::vector<CohortOcv> cohorts;
    for (int rate : {2, 16, 64}) {
        cohorts.push_back(random_cohort(4, 40, rng, rate));
    }
    const auto avg = crate_reference(cohorts);
    for (const auto& c : cohorts) {
        for (std::size_t l = 0; l < 40; ++l) {
            const auto col = column(c, l);
            double s = 0.0;
            for (double x : col) s += x;
            EXPECT_NEAR(avg.by_rate.at(c.c_rate_denominator)[l], s / col.size(), 1e-12);
        }
    }
    EXPECT_EQ(avg.reference, 64);
}

TEST(CrateReference, GridMismatch) {
    std::mt19937_64 rng(7);
    std::vector<CohortOcv> cohorts{random_cohort(2, 10, rng, 2), random_cohort(2, 11, rng, 4)};
    EXPECT_THROW(crate_reference(cohorts), DataError);
}

TEST(CrateMetrics, IdenticalRateIsZero) {
    const std::vector<double> ref{3.5, 3.6, 3.7};
    const auto m = crate_metrics({{2, ref}}, ref);
    for (double x : m.per_rate.at(2).mu) {
        EXPECT_EQ(x, 0.0);
    }
    EXPECT_FALSE(m.pooled.has_value());
}

TEST(CrateMetrics, PooledPlusMinusDelta) {
    const std::vector<double> ref{3.5, 3.6, 3.7};
    const double d = 0.002;
    std::vector<double> up;
    std::vector<double> down;
    for (double x : ref) {
        up.push_back(x + d);
        down.push_back(x - d);
    }
    const auto m = crate_metrics({{2, up}, {4, down}}, ref);
    ASSERT_TRUE(m.pooled.has_value());
    for (std::size_t l = 0; l < 3; ++l) {
        EXPECT_NEAR(m.pooled->mu[l], 0.0, 1e-15);
        EXPECT_NEAR(m.pooled->sigma[l], d * std::sqrt(2.0), 1e-12);
    }
    EXPECT_NEAR(m.per_rate.at(2).mu_avg, d, 1e-12);
    EXPECT_NEAR(m.per_rate.at(4).sigma_avg, d, 1e-12);
}

TEST(CrateMetrics, Errors) {
    const std::vector<double> ref{3.5, 3.6};
    EXPECT_THROW(crate_metrics(std::map<int, std::vector<double>>{}, ref), DataError);
    try {
        crate_pooled_metrics({{2, ref}}, ref);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("r-1 = 0"), std::string::npos);
    }
}

TEST(CrateMetrics, AllRatesEqualReferenceGiveZeroSigma) {
    const std::vector<double> ref{3.5, 3.6, 3.7};
    const auto g = crate_pooled_metrics({{2, ref}, {4, ref}, {128, ref}}, ref);
    for (double s : g.sigma) {
        EXPECT_EQ(s, 0.0);
    }
}

TEST(CrateMetrics, PublishedRowStandardMean) {
    EXPECT_NEAR(standard_mean(-0.3159, 1.2214), -0.2586, 5e-5);
}

TEST(Curvefit, PredictedExamples) {
    const auto m = reference_truth_model();
    const auto grid = make_soc_grid(25);
    const std::vector<FittedModel> one{m};
    const auto p1 = curvefit_predicted(one, grid);
    const std::vector<FittedModel> four(4, m);
    const auto p4 = curvefit_predicted(four, grid);
    for (std::size_t l = 0; l < grid.k(); ++l) {
        EXPECT_EQ(p1[l], eval(m, grid[l]));
        EXPECT_NEAR(p4[l], eval(m, grid[l]), 1e-15);
    }
    auto mixed = four;
    mixed[2].kind = ModelKind::Combined;
    mixed[2].k.resize(5);
    EXPECT_THROW(curvefit_predicted(mixed, grid), DataError);
}

TEST(Curvefit, PredictedMatchesLoopOracle) {
    std::mt19937_64 rng(15);
    std::normal_distribution<double> n(0.0, 1e-3);
    std::vector<FittedModel> ms(4, reference_truth_model());
    for (auto& m : ms) {
        for (double& k : m.k) {
            k *= 1.0 + n(rng);
        }
    }
    const auto grid = make_soc_grid(100);
    const auto p = curvefit_predicted(ms, grid);
    for (std::size_t l = 0; l < grid.k(); ++l) {
        double sum = 0.0;
        for (const auto& m : ms) {
            sum += eval(m, grid[l]);
        }
        EXPECT_NEAR(p[l], sum / 4.0, 1e-12);
    }
}

TEST(Curvefit, Metrics) {
    const std::vector<double> ref(100, 3.7);
    const auto zero = curvefit_metrics(ref, ref);
    EXPECT_EQ(zero.mu_avg, 0.0);
    EXPECT_EQ(zero.sigma_avg, 0.0);
    std::vector<double> pred;
    for (double r : ref) {
        pred.push_back(r + 1e-3);
    }
    const auto g = curvefit_metrics(pred, ref);
    EXPECT_NEAR(g.mu_avg, 1e-3, 1e-12);
    EXPECT_NEAR(g.sigma_avg, 1e-3, 1e-12);
    EXPECT_THROW(curvefit_metrics(pred, std::vector<double>(99, 3.7)), DataError);
    EXPECT_NEAR(standard_mean(0.296, 13.0189), 0.0227, 5e-5);
}

TEST(Curvefit, RmsSummaryMatchesOracle) {
    const std::vector<double> ref{3.0, 3.1, 3.2, 3.3};
    const std::vector<double> pred{3.001, 3.098, 3.203, 3.3};
    const auto g = curvefit_metrics(pred, ref);
    double sq = 0.0;
    double m = 0.0;
    for (std::size_t l = 0; l < 4; ++l) {
        sq += (pred[l] - ref[l]) * (pred[l] - ref[l]);
        m += pred[l] - ref[l];
        EXPECT_NEAR(g.sigma[l], std::abs(pred[l] - ref[l]), 1e-15);
    }
    EXPECT_NEAR(g.sigma_avg, std::sqrt(sq / 4), 1e-15);
    EXPECT_NEAR(g.mu_avg, m / 4, 1e-15);
}

TEST(StandardMean, Examples) {
    EXPECT_NEAR(standard_mean(3.4464, 5.0489), 0.6826, 5e-5);
    EXPECT_EQ(standard_mean(0.0, 2.0), 0.0);
    EXPECT_THROW(standard_mean(1.0, 0.0), DataError);
    EXPECT_THROW(standard_mean(1.0, -1.0), DataError);
}

TEST(StandardMean, ScaleInvariance) {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_real_distribution<double> pos(0.01, 10.0);
    for (int n = 0; n < 1000; ++n) {
        const double mu = u(rng);
        const double sg = pos(rng);
        const double c = pos(rng);
        EXPECT_NEAR(standard_mean(c * mu, c * sg), standard_mean(mu, sg), 1e-12 * std::max(1.0, std::abs(mu / sg)));
    }
}

TEST(ZeroMean, Verdicts) {
    EXPECT_TRUE(zero_mean_test(0.6826).pass);
    EXPECT_EQ(zero_mean_test(0.6826).critical, 1.96);
    EXPECT_FALSE(zero_mean_test(1.96).pass);
    EXPECT_FALSE(zero_mean_test(-1.96).pass);
    EXPECT_FALSE(zero_mean_test(-2.5).pass);
    EXPECT_TRUE(zero_mean_test(-1.9599).pass);
    EXPECT_THROW(zero_mean_test(0.1, 0.0), UsageError);
    EXPECT_THROW(zero_mean_test(0.1, 1.0), UsageError);
}

TEST(ZeroMean, CriticalValues) {
    EXPECT_EQ(critical_value(0.10), 1.645);
    EXPECT_EQ(critical_value(0.01), 2.576);
    // reference quantiles of the standard normal
    EXPECT_NEAR(critical_value(0.2), 1.2815515655446004, 1e-9);
    EXPECT_NEAR(critical_value(0.02), 2.3263478740408408, 1e-9);
    EXPECT_NEAR(critical_value(0.001), 3.2905267314918945, 1e-9);
    EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-12);
    EXPECT_NEAR(normal_quantile(1e-6), -4.753424308822899, 1e-8);
}

TEST(ZeroMean, QuantileInvertsCdf) {
    for (double p = 0.001; p < 1.0; p += 0.00731) {
        const double x = normal_quantile(p);
        EXPECT_NEAR(0.5 * std::erfc(-x / std::sqrt(2.0)), p, 1e-12);
    }
}

TEST(SocError, Examples) {
    const auto m = reference_truth_model();
    EXPECT_EQ(soc_error_std(m, 0.5, 0.0), 0.0);
    // f(s) = 3 + s written as a Combined model with eps = 0: k = [3, 0, 1, 0, 0]
    FittedModel lin{ModelKind::Combined, {3.0, 0.0, 1.0, 0.0, 0.0}, std::nullopt, 0.0, 0.0};
    EXPECT_NEAR(soc_error_std(lin, 0.4, 0.005), 0.005, 1e-15);
    FittedModel flat{ModelKind::Nernst, {3.7, 1.0, 1.0}, std::nullopt, 0.0, 0.0};
    EXPECT_THROW(soc_error_std(flat, 0.5, 0.001), NumericError);
    EXPECT_THROW(soc_error_std(m, 0.5, -1.0), UsageError);
}

TEST(SocError, MonteCarloInversion) {
    const auto m = reference_truth_model();
    const double s0 = 0.6;
    const double sigma_e = 1e-4;
    const double v0 = eval(m, s0);
    SplitMix64 rng(2024);
    std::vector<double> recovered;
    recovered.reserve(100000);
    auto f = [&](double s) { return eval(m, s); };
    for (int n = 0; n < 100000; ++n) {
        recovered.push_back(oracle::bisect(f, v0 + sigma_e * rng.normal(), 0.4, 0.8));
    }
    const double sd = oracle::sample_std(recovered);
    EXPECT_NEAR(sd, soc_error_std(m, s0, sigma_e), 0.05 * sd);
}

TEST(GridMetricsInvariants, SigmaNonNegative) {
    std::mt19937_64 rng(17);
    const auto c = random_cohort(5, 40, rng);
    const auto g = c2c_metrics(c);
    for (double s : g.sigma) {
        EXPECT_GE(s, 0.0);
    }
    EXPECT_GE(g.sigma_avg, 0.0);
    std::vector<double> ref(40, 3.7);
    const auto h = curvefit_metrics(c.cells[0].v, ref);
    for (double s : h.sigma) {
        EXPECT_GE(s, 0.0);
    }
}
