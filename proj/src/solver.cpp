#include "invmatch/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "invmatch/errors.hpp"

namespace invmatch {

namespace {

double soft_threshold(double z, double t) {
    return std::copysign(std::max(std::abs(z) - t, 0.0), z);
}

Eigen::MatrixXd thin_q(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                       Eigen::Index n, Eigen::Index r) {
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
}

void check_full_rank(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                     Eigen::Index cols) {
    if (qr.rank() == cols) return;
    std::ostringstream os;
    os << "unpenalized block is rank deficient (rank " << qr.rank() << " of "
       << cols << "); dependent columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < cols; ++i) os << ' ' << perm(i);
    throw SingularError(os.str());
}

}  // namespace

PartialLassoProblem PartialLassoProblem::make(Eigen::VectorXd y,
                                              Eigen::MatrixXd z,
                                              const Eigen::MatrixXd& x,
                                              double lambda) {
    PartialLassoProblem p;
    const Eigen::Index n = y.size();
    if (z.rows() != 0 && z.rows() != n) throw ConfigError("Z row count mismatch");
    if (x.rows() != n) throw ConfigError("X row count mismatch");
    if (n <= x.cols() + 1) throw ConfigError("need n > d + 1");
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    p.y = std::move(y);
    p.z = std::move(z);
    p.x_aug.resize(n, x.cols() + 1);
    p.x_aug.leftCols(x.cols()) = x;
    p.x_aug.col(x.cols()).setOnes();
    p.lambda = lambda;
    return p;
}

Projection project_out(const PartialLassoProblem& problem) {
    const Eigen::Index n = problem.x_aug.rows();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(problem.x_aug);
    check_full_rank(qr, problem.x_aug.cols());
    const Eigen::MatrixXd q = thin_q(qr, n, problem.x_aug.cols());

    Projection out;
    out.y_proj = problem.y - q * (q.transpose() * problem.y);
    out.z_proj = problem.z;
    if (problem.z.cols() > 0) {
        out.z_proj.noalias() -= q * (q.transpose() * problem.z);
    }
    return out;
}

double kkt_residual(const Eigen::VectorXd& y_proj,
                    const Eigen::MatrixXd& z_proj,
                    const Eigen::VectorXd& theta, double lambda) {
    const Eigen::VectorXd resid = y_proj - z_proj * theta;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < z_proj.cols(); ++j) {
        if (z_proj.col(j).squaredNorm() == 0.0) continue;
        const double g = 2.0 * z_proj.col(j).dot(resid);
        const double viol = (theta(j) == 0.0)
                                ? std::max(std::abs(g) - lambda, 0.0)
                                : std::abs(g - lambda * (theta(j) > 0 ? 1.0 : -1.0));
        worst = std::max(worst, viol);
    }
    return worst;
}

Eigen::VectorXd coordinate_descent(const Eigen::VectorXd& y_proj,
                                   const Eigen::MatrixXd& z_proj, double lambda,
                                   std::optional<Eigen::VectorXd> warm_start,
                                   const CdOptions& opts,
                                   SolverDiagnostics* diag) {
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    const Eigen::Index p = z_proj.cols();
    Eigen::VectorXd theta = warm_start ? std::move(*warm_start)
                                       : Eigen::VectorXd::Zero(p);
    if (theta.size() != p) throw ConfigError("warm start dimension mismatch");

    Eigen::VectorXd norms2(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        norms2(j) = z_proj.col(j).squaredNorm();
        if (norms2(j) == 0.0) theta(j) = 0.0;  // pinned
    }
    Eigen::VectorXd resid = y_proj - z_proj * theta;

    const double half_lambda = lambda / 2.0;
    auto update = [&](Eigen::Index j) -> double {
        if (norms2(j) == 0.0) return 0.0;
        const double zj = z_proj.col(j).dot(resid) + norms2(j) * theta(j);
        const double next = soft_threshold(zj, half_lambda) / norms2(j);
        const double delta = next - theta(j);
        if (delta != 0.0) {
            resid.noalias() -= z_proj.col(j) * delta;
            theta(j) = next;
        }
        return std::abs(delta);
    };

    const double kkt_gate = lambda > 0.0
                                ? opts.kkt_rel_tol * lambda
                                : opts.kkt_rel_tol * std::max(1.0, y_proj.norm());
    const double half = lambda / 2.0;
    std::vector<Eigen::Index> active;

    // Working-set refinement seeded from the coordinate-descent support.
    // Repeatedly solves the equality-constrained optimum for the current
    // support and signs, Z_A' Z_A theta_A = Z_A' y - (l/2) s. A sign flip in
    // the solution drops the first coordinate to cross zero along the step; a
    // subgradient violation outside the support pulls the worst offender in.
    // Commits theta (and returns true) only once the full KKT check passes,
    // so a failed refinement just hands control back to the sweeps.
    auto refine = [&]() -> bool {
        if (active.empty()) {
            return kkt_residual(y_proj, z_proj, theta, lambda) <= kkt_gate;
        }
        std::vector<Eigen::Index> ws(active);
        std::vector<double> th_ws(ws.size());
        std::vector<double> sgn(ws.size());
        for (size_t i = 0; i < ws.size(); ++i) {
            th_ws[i] = theta(ws[i]);
            sgn[i] = th_ws[i] > 0 ? 1.0 : -1.0;
        }
        const int limit = 10 + 4 * static_cast<int>(ws.size());
        for (int iter = 0; iter < limit; ++iter) {
            const Eigen::Index a = static_cast<Eigen::Index>(ws.size());
            if (a == 0 || a > 500) return false;
            Eigen::MatrixXd za(y_proj.size(), a);
            Eigen::VectorXd sign_a(a);
            for (Eigen::Index i = 0; i < a; ++i) {
                za.col(i) = z_proj.col(ws[i]);
                sign_a(i) = sgn[i];
            }
            const Eigen::MatrixXd gram = za.transpose() * za;
            const Eigen::VectorXd rhs = za.transpose() * y_proj - half * sign_a;
            // Minimum-norm solve: the active columns are often numerically
            // rank deficient at the small end of the lambda grid.
            const Eigen::VectorXd cand =
                gram.completeOrthogonalDecomposition().solve(rhs);
            if (!cand.allFinite() ||
                (gram * cand - rhs).norm() > 1e-8 * (rhs.norm() + 1.0)) {
                return false;
            }
            bool signs_ok = lambda == 0.0;
            if (!signs_ok) {
                signs_ok = true;
                for (Eigen::Index i = 0; i < a; ++i) {
                    if (cand(i) == 0.0 || (cand(i) > 0) != (sign_a(i) > 0)) {
                        signs_ok = false;
                        break;
                    }
                }
            }
            if (!signs_ok) {
                // Step from th_ws toward cand until the first sign crossing.
                double gamma = 1.0;
                Eigen::Index drop = -1;
                for (Eigen::Index i = 0; i < a; ++i) {
                    if (cand(i) != 0.0 && (cand(i) > 0) == (sign_a(i) > 0)) continue;
                    const double denom = th_ws[i] - cand(i);
                    const double g = denom != 0.0 ? th_ws[i] / denom : 0.0;
                    if (g < gamma) {
                        gamma = g;
                        drop = i;
                    }
                }
                if (drop < 0) return false;
                for (Eigen::Index i = 0; i < a; ++i) {
                    th_ws[i] += gamma * (cand(i) - th_ws[i]);
                }
                ws.erase(ws.begin() + drop);
                th_ws.erase(th_ws.begin() + drop);
                sgn.erase(sgn.begin() + drop);
                continue;
            }
            for (Eigen::Index i = 0; i < a; ++i) th_ws[i] = cand(i);
            const Eigen::VectorXd resid_c = y_proj - za * cand;
            double worst = 0.0;
            Eigen::Index worst_j = -1;
            double worst_g = 0.0;
            for (Eigen::Index j = 0; j < p; ++j) {
                if (norms2(j) == 0.0) continue;
                if (std::find(ws.begin(), ws.end(), j) != ws.end()) continue;
                const double g = 2.0 * z_proj.col(j).dot(resid_c);
                const double viol = std::max(std::abs(g) - lambda, 0.0);
                if (viol > worst) {
                    worst = viol;
                    worst_j = j;
                    worst_g = g;
                }
            }
            // Active-coordinate residuals: g_i - l s_i = 2 (rhs - gram cand)_i.
            const double active_viol =
                2.0 * (gram * cand - rhs).cwiseAbs().maxCoeff();
            if (worst <= kkt_gate && active_viol <= kkt_gate) {
                theta.setZero();
                for (size_t i = 0; i < ws.size(); ++i) theta(ws[i]) = th_ws[i];
                resid = resid_c;
                return true;
            }
            if (worst_j < 0) {
                // Stationarity is unattainable at these signs because the
                // working set is rank deficient; shed the weakest coordinate.
                Eigen::Index weakest = 0;
                for (Eigen::Index i = 1; i < a; ++i) {
                    if (std::abs(cand(i)) < std::abs(cand(weakest))) weakest = i;
                }
                ws.erase(ws.begin() + weakest);
                th_ws.erase(th_ws.begin() + weakest);
                sgn.erase(sgn.begin() + weakest);
                continue;
            }
            ws.push_back(worst_j);
            th_ws.push_back(0.0);
            sgn.push_back(worst_g > 0 ? 1.0 : -1.0);
        }
        return false;
    };

    int sweeps = 0;
    while (sweeps < opts.max_sweeps) {
        // Full sweep; collect the active set for the cheap inner loops.
        active.clear();
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            max_change = std::max(max_change, update(j));
            if (theta(j) != 0.0) active.push_back(j);
        }
        ++sweeps;
        if (max_change >= opts.tol || opts.tol == 0.0) {
            // Inner sweeps are capped: once the support stabilizes the exact
            // refinement below finishes the job, so grinding the coordinate
            // updates down to tol here is wasted work.
            const int inner_cap = opts.tol == 0.0 ? opts.max_sweeps : sweeps + 50;
            while (sweeps < opts.max_sweeps && sweeps < inner_cap) {
                double inner_change = 0.0;
                for (Eigen::Index j : active) {
                    inner_change = std::max(inner_change, update(j));
                }
                ++sweeps;
                if (opts.tol > 0.0 && inner_change < opts.tol) break;
            }
        }
        if (opts.tol == 0.0) break;  // caller controls sweeps exactly
        if (refine()) break;
    }

    if (diag) {
        diag->sweeps = sweeps;
        diag->kkt_residual = kkt_residual(y_proj, z_proj, theta, lambda);
        diag->converged = diag->kkt_residual <= kkt_gate;
        diag->active_set.clear();
        for (Eigen::Index j = 0; j < p; ++j) {
            if (theta(j) != 0.0) diag->active_set.push_back(static_cast<int>(j));
        }
    }
    return theta;
}

namespace {

struct XFactor {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    explicit XFactor(const Eigen::MatrixXd& x_aug) : qr(x_aug) {
        check_full_rank(qr, x_aug.cols());
    }
    Eigen::VectorXd zeta(const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                         const Eigen::VectorXd& theta) const {
        if (z.cols() == 0) return qr.solve(y);
        return qr.solve(y - z * theta);
    }
};

GimpModel assemble(const PartialLassoProblem& problem, const Projection& proj,
                   const XFactor& xf, Eigen::VectorXd theta,
                   const std::vector<ModuleId>& ids, SolverDiagnostics diag) {
    GimpModel model;
    model.theta = std::move(theta);
    model.zeta = xf.zeta(problem.y, problem.z, model.theta);
    model.module_ids = ids;
    model.lambda_used = problem.lambda;
    model.col_scale = proj.z_proj.colwise().norm();
    const Eigen::VectorXd fitted =
        (problem.z.cols() ? (problem.z * model.theta).eval()
                          : Eigen::VectorXd::Zero(problem.y.size())) +
        problem.x_aug * model.zeta;
    diag.objective = (problem.y - fitted).squaredNorm() +
                     problem.lambda * model.theta.template lpNorm<1>();
    model.diag = std::move(diag);
    return model;
}

}  // namespace

GimpModel solve_partial_lasso(const PartialLassoProblem& problem,
                              const std::vector<ModuleId>& ids,
                              const CdOptions& opts) {
    if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != problem.z.cols()) {
        throw ConfigError("module id list does not match Z columns");
    }
    const Projection proj = project_out(problem);
    const XFactor xf(problem.x_aug);
    SolverDiagnostics diag;
    Eigen::VectorXd theta =
        coordinate_descent(proj.y_proj, proj.z_proj, problem.lambda, {}, opts,
                           &diag);
    return assemble(problem, proj, xf, std::move(theta), ids, std::move(diag));
}

double lambda_max(const Projection& proj) {
    if (proj.z_proj.cols() == 0) return 0.0;
    return 2.0 * (proj.z_proj.transpose() * proj.y_proj)
                     .cwiseAbs()
                     .maxCoeff();
}

std::vector<double> make_lambda_grid(double lam_max, int grid_size,
                                     double epsilon_ratio) {
    if (grid_size < 2) throw ConfigError("lambda grid needs at least 2 points");
    if (epsilon_ratio <= 0.0 || epsilon_ratio >= 1.0) {
        throw ConfigError("epsilon_ratio must lie in (0, 1)");
    }
    if (lam_max <= 0.0) lam_max = 1.0;  // degenerate projected response
    std::vector<double> grid(grid_size);
    const double log_max = std::log(lam_max);
    const double log_min = std::log(lam_max * epsilon_ratio);
    for (int i = 0; i < grid_size; ++i) {
        const double t = static_cast<double>(i) / (grid_size - 1);
        grid[i] = std::exp(log_max + t * (log_min - log_max));
    }
    return grid;
}

std::vector<std::pair<double, GimpModel>> lambda_path(
    const PartialLassoProblem& problem, int grid_size, double epsilon_ratio,
    const std::vector<ModuleId>& ids, const CdOptions& opts) {
    const Projection proj = project_out(problem);
    const XFactor xf(problem.x_aug);
    const std::vector<double> grid =
        make_lambda_grid(lambda_max(proj), grid_size, epsilon_ratio);

    std::vector<std::pair<double, GimpModel>> out;
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(problem.z.cols());
    for (double lam : grid) {
        PartialLassoProblem sub = problem;
        sub.lambda = lam;
        SolverDiagnostics diag;
        warm = coordinate_descent(proj.y_proj, proj.z_proj, lam, warm, opts,
                                  &diag);
        out.emplace_back(lam,
                         assemble(sub, proj, xf, warm, ids, std::move(diag)));
    }
    return out;
}

CvResult cross_validate(const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                        const Eigen::MatrixXd& x_aug,
                        const std::vector<std::pair<std::string, int>>& env_blocks,
                        int folds, const std::vector<double>& grid,
                        const CdOptions& opts, const DesignRefitter* refitter) {
    if (folds < 2) throw ConfigError("cross validation needs folds >= 2");
    if (grid.empty()) throw ConfigError("empty lambda grid");
    const Eigen::Index n = y.size();
    int total = 0;
    for (const auto& [id, rows] : env_blocks) {
        if (rows < folds) {
            throw ConfigError("environment " + id + " has fewer rows (" +
                              std::to_string(rows) + ") than folds: " +
                              "stratification infeasible");
        }
        total += rows;
    }
    if (total != n) throw ConfigError("env block sizes do not sum to n");

    CvResult cv;
    cv.grid = grid;
    cv.fold_of_row.resize(n);
    int row0 = 0;
    for (const auto& [id, rows] : env_blocks) {
        for (int i = 0; i < rows; ++i) cv.fold_of_row[row0 + i] = i % folds;
        row0 += rows;
    }

    const int g = static_cast<int>(grid.size());
    cv.fold_mse.setZero(folds, g);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_idx, held_idx;
        std::vector<char> held_mask(n, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (cv.fold_of_row[i] == f) {
                held_idx.push_back(static_cast<int>(i));
                held_mask[i] = 1;
            } else {
                train_idx.push_back(static_cast<int>(i));
            }
        }
        Eigen::MatrixXd z_fold = refitter ? (*refitter)(held_mask) : z;
        const Eigen::VectorXd y_tr = y(train_idx);
        const Eigen::MatrixXd z_tr = z_fold(train_idx, Eigen::all);
        const Eigen::MatrixXd x_tr = x_aug(train_idx, Eigen::all);
        const Eigen::VectorXd y_ho = y(held_idx);
        const Eigen::MatrixXd z_ho = z_fold(held_idx, Eigen::all);
        const Eigen::MatrixXd x_ho = x_aug(held_idx, Eigen::all);

        PartialLassoProblem sub;
        sub.y = y_tr;
        sub.z = z_tr;
        sub.x_aug = x_tr;
        const Projection proj = project_out(sub);
        const XFactor xf(x_tr);

        Eigen::VectorXd warm = Eigen::VectorXd::Zero(z.cols());
        for (int gi = 0; gi < g; ++gi) {
            warm = coordinate_descent(proj.y_proj, proj.z_proj, grid[gi], warm,
                                      opts, nullptr);
            const Eigen::VectorXd zeta = xf.zeta(y_tr, z_tr, warm);
            const Eigen::VectorXd pred =
                (z.cols() ? (z_ho * warm).eval()
                          : Eigen::VectorXd::Zero(y_ho.size())) +
                x_ho * zeta;
            cv.fold_mse(f, gi) = (y_ho - pred).squaredNorm() / y_ho.size();
        }
    }

    // Ties go to the larger lambda; the grid is descending.
    Eigen::VectorXd mean_mse = cv.fold_mse.colwise().mean();
    int best = 0;
    for (int gi = 1; gi < g; ++gi) {
        if (mean_mse(gi) < mean_mse(best)) best = gi;
    }
    cv.selected_lambda = grid[best];
    return cv;
}

}  // namespace invmatch
