#pragma once

#include <Eigen/Dense>

#include "invmatch/modules.hpp"
#include "invmatch/solver.hpp"

namespace invmatch {

struct PooledOls {
    Eigen::VectorXd coeff;  // d
    double intercept = 0.0;
};

// theta' Z + zeta' [X, 1] with the module columns re-estimated within the
// test sample. Only modules with nonzero theta are fitted; zero coefficients
// annihilate their columns, so the output is identical to fitting all p.
Eigen::VectorXd predict_gimp(const GimpModel& fit, const Eigen::MatrixXd& x_test);

PooledOls pooled_ols(const DataBundle& data);

Eigen::VectorXd predict_pooled(const PooledOls& fit, const Eigen::MatrixXd& x);

// Mean residual sum of squares.
double score(const Eigen::VectorXd& y_hat, const Eigen::VectorXd& y_true);

}  // namespace invmatch
