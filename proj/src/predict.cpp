#include "invmatch/predict.hpp"

#include "invmatch/errors.hpp"

namespace invmatch {

Eigen::VectorXd predict_gimp(const GimpModel& fit, const Eigen::MatrixXd& x_test) {
    const int d = static_cast<int>(x_test.cols());
    if (fit.zeta.size() != d + 1) {
        throw ConfigError("predict_gimp: zeta dimension mismatch");
    }
    if (fit.theta.size() != static_cast<Eigen::Index>(fit.module_ids.size())) {
        throw ConfigError("predict_gimp: theta/module_ids mismatch");
    }
    Eigen::VectorXd y_hat =
        x_test * fit.zeta.head(d) +
        Eigen::VectorXd::Constant(x_test.rows(), fit.zeta(d));

    std::vector<ModuleId> active_ids;
    std::vector<double> active_theta;
    for (std::size_t j = 0; j < fit.module_ids.size(); ++j) {
        if (fit.theta(j) != 0.0) {
            active_ids.push_back(fit.module_ids[j]);
            active_theta.push_back(fit.theta(j));
        }
    }
    if (!active_ids.empty()) {
        const Eigen::MatrixXd z =
            build_test_design(x_test, active_ids, fit.module_intercept);
        for (std::size_t j = 0; j < active_ids.size(); ++j) {
            y_hat += active_theta[j] * z.col(j);
        }
    }
    return y_hat;
}

PooledOls pooled_ols(const DataBundle& data) {
    if (data.train.empty()) throw ConfigError("pooled_ols: no training data");
    const int d = static_cast<int>(data.train.front().x.cols());
    int n = 0;
    for (const auto& env : data.train) n += static_cast<int>(env.x.rows());
    Eigen::MatrixXd design(n, d + 1);
    Eigen::VectorXd y(n);
    int row = 0;
    for (const auto& env : data.train) {
        const int ne = static_cast<int>(env.x.rows());
        design.block(row, 0, ne, d) = env.x;
        y.segment(row, ne) = env.y;
        row += ne;
    }
    design.col(d).setOnes();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < d + 1) {
        throw SingularError("pooled_ols: pooled design is rank deficient");
    }
    const Eigen::VectorXd sol = qr.solve(y);
    PooledOls fit;
    fit.coeff = sol.head(d);
    fit.intercept = sol(d);
    return fit;
}

Eigen::VectorXd predict_pooled(const PooledOls& fit, const Eigen::MatrixXd& x) {
    return x * fit.coeff + Eigen::VectorXd::Constant(x.rows(), fit.intercept);
}

double score(const Eigen::VectorXd& y_hat, const Eigen::VectorXd& y_true) {
    if (y_hat.size() != y_true.size() || y_hat.size() == 0) {
        throw ConfigError("score: length mismatch or empty input");
    }
    return (y_hat - y_true).squaredNorm() / y_hat.size();
}

}  // namespace invmatch
