#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "invmatch/scm.hpp"

namespace invmatch {

// A prediction module (k, R): regress X_k on X_R within each environment.
// Indices are 0-based internally; the text form "k|r1,r2" is 1-based.
struct ModuleId {
    int k = 0;
    std::vector<int> r_set;  // sorted, nonempty, excludes k

    std::string str() const;
    static ModuleId parse(const std::string& s);

    bool operator==(const ModuleId& other) const = default;
};

// Stacked per-environment OLS design, one column per module (Eq.-(7) layout:
// rows grouped by environment in bundle order).
struct ModuleDesign {
    std::vector<ModuleId> module_ids;
    Eigen::MatrixXd z_hat;                // n x p
    std::vector<std::string> row_env;     // environment label per row
    std::vector<std::pair<std::string, int>> env_blocks;  // (id, rows)
    // per_env_coeffs[m][e]: fitted coefficients for module m in environment e,
    // intercept last (absent when fitted without intercept).
    std::vector<std::vector<Eigen::VectorXd>> per_env_coeffs;
    std::vector<std::vector<char>> skipped;  // rank-deficient fits, mean-filled
};

struct ModuleFit {
    Eigen::VectorXd coeff;  // |R|
    double intercept = 0.0;
    Eigen::VectorXd fitted;  // n_e
    bool skipped = false;    // rank deficient; fitted = column mean of X_k
};

// All (k, R) tuples in deterministic order: ascending k, then R by ascending
// cardinality, then lexicographic. Exhaustive count is d*(2^(d-1) - 1).
std::vector<ModuleId> enumerate_modules(int d, std::optional<int> max_r = {});

ModuleFit fit_module_env(const Eigen::MatrixXd& x_env, const ModuleId& id,
                         bool with_intercept = true);

ModuleDesign build_train_design(const DataBundle& data,
                                const std::vector<ModuleId>& ids,
                                bool with_intercept = true,
                                bool parallel = true);

// Modules re-estimated within the unlabeled test sample itself, mirroring the
// per-environment estimation used at training time.
Eigen::MatrixXd build_test_design(const Eigen::MatrixXd& x_test,
                                  const std::vector<ModuleId>& ids,
                                  bool with_intercept = true,
                                  bool parallel = true);

// Training design where each environment's module coefficients are fitted
// only on rows with exclude_row false; fitted values are produced for all
// rows. Used by strict-mode cross validation.
Eigen::MatrixXd build_train_design_excluding(const DataBundle& data,
                                             const std::vector<ModuleId>& ids,
                                             const std::vector<char>& exclude_row,
                                             bool with_intercept = true);

}  // namespace invmatch
