#pragma once

// Empirical OCV models that are linear in their parameters: Nernst, Combined and Combined+3.
// Fitting is ordinary least squares via Householder QR on an equilibrated design matrix.

#include <cctype>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ocvkit/analysis.hpp"
#include "ocvkit/error.hpp"
#include "ocvkit/text.hpp"

namespace ocvkit {

enum class ModelKind { Nernst, Combined, CombinedPlus3 };

inline constexpr std::size_t parameter_count(ModelKind kind) {
    switch (kind) {
    case ModelKind::Nernst: return 3;
    case ModelKind::Combined: return 5;
    case ModelKind::CombinedPlus3: return 8;
    }
    return 0;
}

inline const char* to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::Nernst: return "nernst";
    case ModelKind::Combined: return "combined";
    case ModelKind::CombinedPlus3: return "combined+3";
    }
    return "?";
}

inline std::string display_name(ModelKind kind) {
    switch (kind) {
    case ModelKind::Nernst: return "Nernst";
    case ModelKind::Combined: return "Combined";
    case ModelKind::CombinedPlus3: return "Combined+3";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view name) {
    std::string n;
    for (char c : text::trim(name)) {
        n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (n == "nernst") return ModelKind::Nernst;
    if (n == "combined") return ModelKind::Combined;
    if (n == "combined+3" || n == "combined3" || n == "combinedplus3") return ModelKind::CombinedPlus3;
    throw UsageError("unknown model '" + std::string(name) + "' (expected nernst, combined or combined+3)");
}

inline constexpr double default_epsilon = 0.002;

/// Maps [0, 1] onto [eps, 1 - eps] so the 1/s and log terms stay finite at the ends.
inline double scale_soc(double s, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon < 0.5)) {
        throw UsageError("SOC scaling epsilon must be in [0, 0.5), got " + text::exact(epsilon));
    }
    return s * (1.0 - 2.0 * epsilon) + epsilon;
}

/// Regressor values in parameter order:
///   Nernst      [1, ln s, ln(1-s)]
///   Combined    [1, 1/s, s, ln s, ln(1-s)]
///   Combined+3  [1, 1/s, 1/s^2, 1/s^3, 1/s^4, s, ln s, ln(1-s)]
inline std::vector<double> basis(ModelKind kind, double s) {
    if (!(s > 0.0 && s < 1.0)) {
        throw NumericError("model basis is singular at s=" + text::exact(s));
    }
    const double ls = std::log(s);
    const double l1 = std::log1p(-s);
    switch (kind) {
    case ModelKind::Nernst: return {1.0, ls, l1};
    case ModelKind::Combined: return {1.0, 1.0 / s, s, ls, l1};
    case ModelKind::CombinedPlus3: {
        const double r = 1.0 / s;
        return {1.0, r, r * r, r * r * r, r * r * r * r, s, ls, l1};
    }
    }
    return {};
}

inline std::vector<std::string> basis_names(ModelKind kind) {
    switch (kind) {
    case ModelKind::Nernst: return {"1", "ln s", "ln(1-s)"};
    case ModelKind::Combined: return {"1", "1/s", "s", "ln s", "ln(1-s)"};
    case ModelKind::CombinedPlus3: return {"1", "1/s", "1/s^2", "1/s^3", "1/s^4", "s", "ln s", "ln(1-s)"};
    }
    return {};
}

struct FittedModel {
    ModelKind kind = ModelKind::CombinedPlus3;
    /// k[0] is the intercept; order matches basis().
    std::vector<double> k;
    /// Series resistance estimated jointly with the OCV parameters [ohm].
    std::optional<double> r_total;
    double epsilon = default_epsilon;
    /// RMS of the fit residual on the fitting data [V].
    double residual_rms = 0.0;
};

/// OCV predicted by the model (the current term is not included).
inline double eval(const FittedModel& m, double s) {
    const auto b = basis(m.kind, scale_soc(s, m.epsilon));
    if (b.size() != m.k.size()) {
        throw UsageError("model has " + std::to_string(m.k.size()) + " parameters, " + to_string(m.kind) +
                         " needs " + std::to_string(b.size()));
    }
    double v = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
        v += m.k[j] * b[j];
    }
    return v;
}

/// Terminal voltage including the fitted resistance term.
inline double eval_terminal(const FittedModel& m, double s, double current) {
    return eval(m, s) + current * m.r_total.value_or(0.0);
}

/// dOCV/dSOC, including the (1 - 2 eps) factor from SOC scaling.
inline double derivative(const FittedModel& m, double s) {
    const double x = scale_soc(s, m.epsilon);
    if (!(x > 0.0 && x < 1.0)) {
        throw NumericError("model derivative is singular at s=" + text::exact(s));
    }
    if (m.k.size() != parameter_count(m.kind)) {
        throw UsageError("parameter vector length does not match model kind");
    }
    const auto& k = m.k;
    const double chain = 1.0 - 2.0 * m.epsilon;
    const double r = 1.0 / x;
    const double r2 = r * r;
    const double tail = 1.0 / (1.0 - x);
    double d = 0.0;
    switch (m.kind) {
    case ModelKind::Nernst:
        d = k[1] * r - k[2] * tail;
        break;
    case ModelKind::Combined:
        d = -k[1] * r2 + k[2] + k[3] * r - k[4] * tail;
        break;
    case ModelKind::CombinedPlus3:
        d = -k[1] * r2 - 2.0 * k[2] * r2 * r - 3.0 * k[3] * r2 * r2 - 4.0 * k[4] * r2 * r2 * r + k[5] +
            k[6] * r - k[7] * tail;
        break;
    }
    return chain * d;
}

struct RegressionRow {
    double s;
    double v;
    std::optional<double> i;
};

struct RegressionProblem {
    std::vector<RegressionRow> rows;
    ModelKind kind = ModelKind::CombinedPlus3;
    /// Adds the signed current as an extra regressor whose coefficient is the series resistance.
    bool with_resistance = false;
};

/// Condition-number ceiling for the column-equilibrated design matrix.
inline constexpr double max_condition = 1e12;

/// Ordinary least squares v ~ sum_j k_j basis_j(scale(s)) [+ i * r_total].
inline FittedModel fit(const RegressionProblem& problem, double epsilon = default_epsilon) {
    const std::size_t p_ocv = parameter_count(problem.kind);
    const std::size_t p = p_ocv + (problem.with_resistance ? 1 : 0);
    const std::size_t n = problem.rows.size();
    if (n < p) {
        throw DataError("fit needs at least " + std::to_string(p) + " rows, got " + std::to_string(n));
    }
    auto names = basis_names(problem.kind);
    if (problem.with_resistance) {
        names.emplace_back("i");
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = problem.rows[r];
        const auto b = basis(problem.kind, scale_soc(row.s, epsilon));
        for (std::size_t j = 0; j < p_ocv; ++j) {
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = b[j];
        }
        if (problem.with_resistance) {
            if (!row.i) {
                throw DataError("resistance fit needs a current on every row (row " + std::to_string(r) + ")");
            }
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p_ocv)) = *row.i;
        }
        y(static_cast<Eigen::Index>(r)) = row.v;
    }

    const Eigen::VectorXd norms = x.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < norms.size(); ++j) {
        if (!(norms(j) > 0.0) || !std::isfinite(norms(j))) {
            throw NumericError("rank-deficient design: column '" + names[static_cast<std::size_t>(j)] +
                               "' is zero or non-finite");
        }
    }
    const Eigen::MatrixXd xs = x * norms.cwiseInverse().asDiagonal();
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(xs);
    const Eigen::MatrixXd r_mat =
        qr.matrixQR().topRows(static_cast<Eigen::Index>(p)).triangularView<Eigen::Upper>();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(r_mat, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
    if (!(cond <= max_condition)) {
        const Eigen::VectorXd null_dir = svd.matrixV().col(sv.size() - 1);
        std::string cols;
        for (Eigen::Index j = 0; j < null_dir.size(); ++j) {
            if (std::abs(null_dir(j)) > 0.1) {
                cols += (cols.empty() ? "" : ", ") + names[static_cast<std::size_t>(j)];
            }
        }
        throw NumericError("rank-deficient design (condition " + text::exact(cond) + "); degenerate columns: " +
                           cols);
    }
    const Eigen::VectorXd coef_scaled = qr.solve(y);
    const Eigen::VectorXd coef = coef_scaled.cwiseQuotient(norms);

    FittedModel m;
    m.kind = problem.kind;
    m.epsilon = epsilon;
    m.k.assign(coef.data(), coef.data() + p_ocv);
    if (problem.with_resistance) {
        m.r_total = coef(static_cast<Eigen::Index>(p_ocv));
    }
    const Eigen::VectorXd res = y - x * coef;
    m.residual_rms = std::sqrt(res.squaredNorm() / static_cast<double>(n));
    return m;
}

/// Fits directly to an OCV table (no current regressor).
inline FittedModel fit_table(const OcvTable& table, ModelKind kind, double epsilon = default_epsilon) {
    RegressionProblem prob;
    prob.kind = kind;
    for (const auto& r : table.rows) {
        prob.rows.push_back({r.s, r.v, std::nullopt});
    }
    return fit(prob, epsilon);
}

/// Joint problem over both low-rate branches: every sample contributes (s, v, i).
inline RegressionProblem branch_problem(const LowRateBranches& br, ModelKind kind, bool with_resistance) {
    RegressionProblem prob;
    prob.kind = kind;
    prob.with_resistance = with_resistance;
    prob.rows.reserve(br.discharge.size() + br.charge.size());
    for (const auto* branch : {&br.discharge, &br.charge}) {
        for (const auto& x : *branch) {
            prob.rows.push_back({x.s, x.v, x.i});
        }
    }
    return prob;
}

} // namespace ocvkit
