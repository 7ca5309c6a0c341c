#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "invmatch/modules.hpp"

namespace invmatch {

// min_{theta, zeta} ||Y - Z theta - X zeta||^2 + lambda ||theta||_1
// with X the unpenalized block augmented with a constant column.
struct PartialLassoProblem {
    Eigen::VectorXd y;      // n
    Eigen::MatrixXd z;      // n x p, penalized block
    Eigen::MatrixXd x_aug;  // n x (d+1), constant column last
    double lambda = 0.0;

    static PartialLassoProblem make(Eigen::VectorXd y, Eigen::MatrixXd z,
                                    const Eigen::MatrixXd& x, double lambda);
};

struct SolverDiagnostics {
    std::vector<int> active_set;
    double kkt_residual = 0.0;
    double objective = 0.0;
    int sweeps = 0;
    bool converged = true;
};

struct GimpModel {
    Eigen::VectorXd theta;  // p, sparse
    Eigen::VectorXd zeta;   // d+1, intercept last
    std::vector<ModuleId> module_ids;
    double lambda_used = 0.0;
    Eigen::VectorXd col_scale;  // column norms of the projected design
    bool module_intercept = true;
    SolverDiagnostics diag;
};

struct CvResult {
    std::vector<double> grid;       // descending
    Eigen::MatrixXd fold_mse;       // folds x grid
    double selected_lambda = 0.0;
    std::vector<int> fold_of_row;
};

struct CdOptions {
    double tol = 1e-8;
    int max_sweeps = 100000;
    double kkt_rel_tol = 1e-6;
};

// Y' = (I - P) Y and X' = (I - P) Z for P the projector onto col(x_aug),
// computed through a Householder QR of x_aug (P is never formed).
// Throws SingularError when x_aug is rank deficient, naming the columns.
struct Projection {
    Eigen::VectorXd y_proj;
    Eigen::MatrixXd z_proj;
};
Projection project_out(const PartialLassoProblem& problem);

// Cyclic coordinate descent with active-set inner loops on the reduced Lasso
// min ||y' - X' theta||^2 + lambda ||theta||_1.
Eigen::VectorXd coordinate_descent(const Eigen::VectorXd& y_proj,
                                   const Eigen::MatrixXd& z_proj, double lambda,
                                   std::optional<Eigen::VectorXd> warm_start = {},
                                   const CdOptions& opts = {},
                                   SolverDiagnostics* diag = nullptr);

// Max violation of the subgradient conditions at theta; 0 means optimal.
double kkt_residual(const Eigen::VectorXd& y_proj, const Eigen::MatrixXd& z_proj,
                    const Eigen::VectorXd& theta, double lambda);

GimpModel solve_partial_lasso(const PartialLassoProblem& problem,
                              const std::vector<ModuleId>& ids = {},
                              const CdOptions& opts = {});

double lambda_max(const Projection& proj);
std::vector<double> make_lambda_grid(double lam_max, int grid_size,
                                     double epsilon_ratio);

std::vector<std::pair<double, GimpModel>> lambda_path(
    const PartialLassoProblem& problem, int grid_size, double epsilon_ratio,
    const std::vector<ModuleId>& ids = {}, const CdOptions& opts = {});

// Strict-mode hook: cross_validate refits the module design per fold through
// this callback (exclude_row marks held-out rows).
using DesignRefitter =
    std::function<Eigen::MatrixXd(const std::vector<char>& exclude_row)>;

// Environment-stratified K-fold CV over a fixed lambda grid. By default the
// held-out rows are scored against the full-training-data z columns; pass a
// refitter for the strict mode. Ties in mean CV error go to the larger
// lambda.
CvResult cross_validate(const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                        const Eigen::MatrixXd& x_aug,
                        const std::vector<std::pair<std::string, int>>& env_blocks,
                        int folds, const std::vector<double>& grid,
                        const CdOptions& opts = {},
                        const DesignRefitter* refitter = nullptr);

}  // namespace invmatch
