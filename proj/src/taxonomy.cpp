#include "invmatch/taxonomy.hpp"

#include <cmath>

#include "invmatch/errors.hpp"

namespace invmatch {

std::string to_string(ModuleKind kind) {
    switch (kind) {
        case ModuleKind::Matched: return "matched";
        case ModuleKind::Redundant: return "redundant";
        case ModuleKind::AntiMatching: return "anti-matching";
    }
    return "?";
}

Lmmse population_lmmse(const Moments& moments, int target,
                       const std::vector<int>& given) {
    const int g = static_cast<int>(given.size());
    Eigen::MatrixXd cov_gg(g, g);
    Eigen::VectorXd cov_gt(g);
    Eigen::VectorXd mean_g(g);
    for (int i = 0; i < g; ++i) {
        mean_g(i) = moments.mean(given[i]);
        cov_gt(i) = moments.cov(given[i], target);
        for (int j = 0; j < g; ++j) {
            cov_gg(i, j) = moments.cov(given[i], given[j]);
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cov_gg);
    if (!lu.isInvertible()) {
        throw SingularError("population_lmmse: covariance sub-block singular");
    }
    Lmmse out;
    out.coeff = lu.solve(cov_gt);
    out.intercept = moments.mean(target) - out.coeff.dot(mean_g);
    return out;
}

namespace {

// Module (k, R) as an affine function of the full X: d coefficients (zero off
// R) plus an intercept coordinate.
Eigen::VectorXd module_affine(const ScmModel& model, const EnvParams& env,
                              const ModuleId& id) {
    const Moments m = population_moments(model, env);
    const Lmmse fit = population_lmmse(m, id.k, id.r_set);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(model.d + 1);
    for (std::size_t i = 0; i < id.r_set.size(); ++i) {
        w(id.r_set[i]) = fit.coeff(i);
    }
    w(model.d) = fit.intercept;
    return w;
}

// E[Y|X] in the same affine representation.
Eigen::VectorXd response_affine(const ScmModel& model, const EnvParams& env) {
    const Moments m = population_moments(model, env);
    std::vector<int> all(model.d);
    for (int j = 0; j < model.d; ++j) all[j] = j;
    const Lmmse fit = population_lmmse(m, model.d, all);
    Eigen::VectorXd c(model.d + 1);
    c.head(model.d) = fit.coeff;
    c(model.d) = fit.intercept;
    return c;
}

}  // namespace

double coefficient_variation(const ScmModel& model,
                             const std::vector<EnvParams>& envs,
                             const ModuleId& id) {
    if (envs.size() < 2) {
        throw ConfigError("coefficient_variation needs >= 2 environments");
    }
    std::vector<Eigen::VectorXd> ws;
    ws.reserve(envs.size());
    for (const auto& env : envs) ws.push_back(module_affine(model, env, id));
    double score = 0.0;
    for (std::size_t e = 0; e < ws.size(); ++e) {
        for (std::size_t h = e + 1; h < ws.size(); ++h) {
            score = std::max(score, (ws[e] - ws[h]).cwiseAbs().maxCoeff());
        }
    }
    return score;
}

ImpCertificate certify_imp(const ScmModel& model,
                           const std::vector<EnvParams>& envs,
                           const ModuleId& id) {
    if (envs.empty()) throw ConfigError("certify_imp needs environments");
    ImpCertificate cert;
    cert.module = id;

    std::vector<Eigen::VectorXd> cs, ws;
    for (const auto& env : envs) {
        cs.push_back(response_affine(model, env));
        ws.push_back(module_affine(model, env, id));
    }

    // Least-squares scalar on stacked pairwise differences
    // c_e - c_h = lambda * (w_e - w_h).
    double num = 0.0, den = 0.0;
    for (std::size_t e = 0; e < envs.size(); ++e) {
        for (std::size_t h = e + 1; h < envs.size(); ++h) {
            const Eigen::VectorXd dc = cs[e] - cs[h];
            const Eigen::VectorXd dw = ws[e] - ws[h];
            num += dc.dot(dw);
            den += dw.squaredNorm();
        }
    }
    double scale = 0.0;
    for (const auto& w : ws) scale = std::max(scale, w.cwiseAbs().maxCoeff());
    if (envs.size() < 2 || den <= 1e-20 * std::max(1.0, scale * scale)) {
        cert.degenerate = true;
        cert.lambda_imp = 0.0;
    } else {
        cert.lambda_imp = num / den;
    }

    Eigen::VectorXd eta = Eigen::VectorXd::Zero(model.d + 1);
    for (std::size_t e = 0; e < envs.size(); ++e) {
        eta += cs[e] - cert.lambda_imp * ws[e];
    }
    eta /= static_cast<double>(envs.size());
    cert.eta = eta;

    double resid = 0.0;
    for (std::size_t e = 0; e < envs.size(); ++e) {
        resid = std::max(resid, (cs[e] - cert.lambda_imp * ws[e] - eta)
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    cert.feasibility_residual = resid;
    return cert;
}

ModuleLabel classify_module(const ScmModel& model,
                            const std::vector<EnvParams>& envs,
                            const ModuleId& id, double tol) {
    ModuleLabel label;
    label.module = id;
    const ImpCertificate cert = certify_imp(model, envs, id);
    label.residual = cert.feasibility_residual;
    label.variation = coefficient_variation(model, envs, id);
    if (label.residual <= tol) {
        label.kind = ModuleKind::Matched;
    } else if (label.variation <= tol) {
        label.kind = ModuleKind::Redundant;
    } else {
        label.kind = ModuleKind::AntiMatching;
    }
    return label;
}

std::vector<ScatterRow> diagnostic_scatter(const std::vector<ModuleLabel>& labels,
                                           const GimpModel& fit) {
    if (labels.size() != fit.module_ids.size()) {
        throw ConfigError("diagnostic_scatter: label/fit module mismatch");
    }
    std::vector<ScatterRow> rows;
    rows.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!(labels[i].module == fit.module_ids[i])) {
            throw ConfigError("diagnostic_scatter: module id mismatch at " +
                              std::to_string(i));
        }
        rows.push_back({labels[i].module, std::abs(fit.theta(i)),
                        labels[i].kind});
    }
    return rows;
}

}  // namespace invmatch
