#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "invmatch/modules.hpp"
#include "invmatch/scm.hpp"
#include "invmatch/solver.hpp"

namespace invmatch {

struct Lmmse {
    Eigen::VectorXd coeff;
    double intercept = 0.0;
};

enum class ModuleKind { Matched, Redundant, AntiMatching };
std::string to_string(ModuleKind kind);

// Witness of the invariance E[Y|X] = lambda * module + eta' X across all
// environments; feasibility_residual <= tol certifies it.
struct ImpCertificate {
    ModuleId module;
    double lambda_imp = 0.0;
    Eigen::VectorXd eta;  // d+1, intercept coordinate last
    double feasibility_residual = 0.0;
    bool degenerate = false;  // module coefficients identical in every env
};

struct ModuleLabel {
    ModuleId module;
    ModuleKind kind = ModuleKind::Redundant;
    double variation = 0.0;  // coefficient-variation score
    double residual = 0.0;   // certificate feasibility residual
};

struct ScatterRow {
    ModuleId module;
    double theta_abs = 0.0;
    ModuleKind kind = ModuleKind::Redundant;
};

// Best linear predictor of `target` given `given` under the exact joint
// moments: coeff = Cov_GG^-1 Cov_GT, intercept = mean_T - coeff' mean_G.
Lmmse population_lmmse(const Moments& moments, int target,
                       const std::vector<int>& given);

// Max over environment pairs of the inf-norm difference of the module's
// population coefficient-and-intercept vector.
double coefficient_variation(const ScmModel& model,
                             const std::vector<EnvParams>& envs,
                             const ModuleId& id);

ImpCertificate certify_imp(const ScmModel& model,
                           const std::vector<EnvParams>& envs,
                           const ModuleId& id);

ModuleLabel classify_module(const ScmModel& model,
                            const std::vector<EnvParams>& envs,
                            const ModuleId& id, double tol = 1e-6);

std::vector<ScatterRow> diagnostic_scatter(const std::vector<ModuleLabel>& labels,
                                           const GimpModel& fit);

}  // namespace invmatch
