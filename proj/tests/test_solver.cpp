#include <doctest.h>

#include <random>

#include "invmatch/errors.hpp"
#include "invmatch/solver.hpp"

using namespace invmatch;

namespace {

std::mt19937_64 seeded(unsigned s) { return std::mt19937_64(s); }

Eigen::MatrixXd gaussian(int n, int p, std::mt19937_64& gen) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(n, p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) m(i, j) = nd(gen);
    }
    return m;
}

// Independent joint minimizer of the partially penalized objective: block
// coordinate descent alternating an exact zeta solve with theta sweeps.
// Deliberately avoids the projection reduction under test.
struct JointSolution {
    Eigen::VectorXd theta;
    Eigen::VectorXd zeta;
    double objective = 0.0;
};

JointSolution joint_minimizer(const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                              const Eigen::MatrixXd& x_aug, double lambda,
                              int outer = 20000, double tol = 1e-13) {
    const Eigen::Index p = z.cols();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd norms2(p);
    for (Eigen::Index j = 0; j < p; ++j) norms2(j) = z.col(j).squaredNorm();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> xqr(x_aug);
    Eigen::VectorXd zeta = xqr.solve(y);

    for (int it = 0; it < outer; ++it) {
        Eigen::VectorXd resid = y - z * theta - x_aug * zeta;
        double change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (norms2(j) == 0.0) continue;
            const double zj = z.col(j).dot(resid) + norms2(j) * theta(j);
            const double mag = std::abs(zj) - lambda / 2.0;
            const double next =
                mag > 0.0 ? (zj > 0 ? mag : -mag) / norms2(j) : 0.0;
            resid -= z.col(j) * (next - theta(j));
            change = std::max(change, std::abs(next - theta(j)));
            theta(j) = next;
        }
        const Eigen::VectorXd zeta_next = xqr.solve(y - z * theta);
        change = std::max(change, (zeta_next - zeta).cwiseAbs().maxCoeff());
        zeta = zeta_next;
        if (change < tol) break;
    }
    JointSolution out;
    out.theta = theta;
    out.zeta = zeta;
    out.objective = (y - z * theta - x_aug * zeta).squaredNorm() +
                    lambda * theta.lpNorm<1>();
    return out;
}

}  // namespace

TEST_CASE("projection annihilates the unpenalized span") {
    auto gen = seeded(1);
    const int n = 50, d = 3;
    Eigen::MatrixXd x = gaussian(n, d, gen);
    Eigen::MatrixXd z = gaussian(n, 5, gen);
    z.col(2) = 0.5 * x.col(0) - x.col(1);  // inside span(X)
    auto problem = PartialLassoProblem::make(gaussian(n, 1, gen), z, x, 1.0);
    auto proj = project_out(problem);

    CHECK(proj.z_proj.col(2).norm() < 1e-10);
    CHECK((problem.x_aug.transpose() * proj.y_proj).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((problem.x_aug.transpose() * proj.z_proj).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("projection onto constants is mean removal") {
    auto gen = seeded(2);
    const int n = 30;
    Eigen::MatrixXd z = gaussian(n, 4, gen);
    auto problem = PartialLassoProblem::make(gaussian(n, 1, gen), z,
                                             Eigen::MatrixXd(n, 0), 1.0);
    auto proj = project_out(problem);
    for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd centered = z.col(j).array() - z.col(j).mean();
        CHECK(proj.z_proj.col(j).isApprox(centered, 1e-10));
    }
}

TEST_CASE("projection rejects rank-deficient unpenalized block") {
    auto gen = seeded(3);
    const int n = 20;
    Eigen::MatrixXd x = gaussian(n, 3, gen);
    x.col(2) = x.col(0);
    auto problem = PartialLassoProblem::make(gaussian(n, 1, gen),
                                             Eigen::MatrixXd(n, 0), x, 1.0);
    problem.x_aug.col(2) = problem.x_aug.col(0);
    CHECK_THROWS_AS(project_out(problem), SingularError);
}

TEST_CASE("coordinate descent limits") {
    auto gen = seeded(4);

    SUBCASE("lambda = 0 reaches least squares") {
        const int n = 60, p = 4;
        Eigen::MatrixXd x = gaussian(n, p, gen);
        Eigen::VectorXd y = gaussian(n, 1, gen);
        auto theta = coordinate_descent(y, x, 0.0);
        Eigen::VectorXd ls = x.colPivHouseholderQr().solve(y);
        CHECK(theta.isApprox(ls, 1e-6));
    }
    SUBCASE("scalar closed form") {
        Eigen::VectorXd y(2), col(2);
        y << 1.0, 1.0;
        col << 1.0, 1.0;
        Eigen::MatrixXd x = col;
        auto theta = coordinate_descent(y, x, 2.0);
        CHECK(theta(0) == doctest::Approx(0.5));
    }
    SUBCASE("lambda beyond lambda_max deactivates everything") {
        const int n = 40, p = 6;
        Eigen::MatrixXd x = gaussian(n, p, gen);
        Eigen::VectorXd y = gaussian(n, 1, gen);
        const double lmax = 2.0 * (x.transpose() * y).cwiseAbs().maxCoeff();
        auto theta = coordinate_descent(y, x, lmax * 1.0001);
        CHECK(theta.isZero());
    }
    SUBCASE("zero column stays pinned at zero") {
        const int n = 30;
        Eigen::MatrixXd x = gaussian(n, 3, gen);
        x.col(1).setZero();
        Eigen::VectorXd y = gaussian(n, 1, gen);
        auto theta = coordinate_descent(y, x, 0.5);
        CHECK(theta(1) == 0.0);
    }
}

TEST_CASE("KKT conditions hold at the returned solution") {
    auto gen = seeded(5);
    const int n = 80, p = 12;
    Eigen::MatrixXd x = gaussian(n, p, gen);
    Eigen::VectorXd y = gaussian(n, 1, gen);
    for (double lambda : {0.05, 1.0, 20.0}) {
        SolverDiagnostics diag;
        auto theta = coordinate_descent(y, x, lambda, {}, {}, &diag);
        CHECK(diag.kkt_residual <= 1e-6 * lambda + 1e-10);
    }
}

TEST_CASE("objective never increases across sweeps") {
    auto gen = seeded(6);
    const int n = 60, p = 10;
    Eigen::MatrixXd x = gaussian(n, p, gen);
    Eigen::VectorXd y = gaussian(n, 1, gen);
    const double lambda = 3.0;
    CdOptions opts;
    opts.tol = 0.0;  // force exactly max_sweeps sweeps
    double prev = std::numeric_limits<double>::infinity();
    for (int sweeps = 1; sweeps <= 12; ++sweeps) {
        opts.max_sweeps = sweeps;
        auto theta = coordinate_descent(y, x, lambda, {}, opts);
        const double obj =
            (y - x * theta).squaredNorm() + lambda * theta.lpNorm<1>();
        CHECK(obj <= prev + 1e-12);
        prev = obj;
    }
}

TEST_CASE("partial lasso solve") {
    auto gen = seeded(7);

    SUBCASE("empty Z reduces to pooled OLS") {
        const int n = 50, d = 3;
        Eigen::MatrixXd x = gaussian(n, d, gen);
        Eigen::VectorXd y = gaussian(n, 1, gen);
        auto problem = PartialLassoProblem::make(y, Eigen::MatrixXd(n, 0), x, 1.0);
        auto fit = solve_partial_lasso(problem);
        Eigen::MatrixXd xa(n, d + 1);
        xa << x, Eigen::VectorXd::Ones(n);
        Eigen::VectorXd ols = xa.colPivHouseholderQr().solve(y);
        CHECK(fit.zeta.isApprox(ols, 1e-8));
        CHECK(fit.theta.size() == 0);
    }
    SUBCASE("exactly representable column becomes active") {
        const int n = 100, d = 2;
        Eigen::MatrixXd x = gaussian(n, d, gen);
        Eigen::VectorXd beta0(d);
        beta0 << 1.0, -2.0;
        Eigen::MatrixXd z = gaussian(n, 3, gen);
        Eigen::VectorXd y = x * beta0 + 0.7 * z.col(1);
        auto problem = PartialLassoProblem::make(y, z, x, 1e-4);
        auto fit = solve_partial_lasso(problem);
        CHECK(fit.theta(1) == doctest::Approx(0.7).epsilon(1e-2));
        CHECK(fit.diag.objective ==
              doctest::Approx(problem.lambda * fit.theta.lpNorm<1>())
                  .epsilon(1e-2));
    }
    SUBCASE("zeta satisfies the closed-form normal equations") {
        const int n = 70, d = 3, p = 8;
        Eigen::MatrixXd x = gaussian(n, d, gen);
        Eigen::MatrixXd z = gaussian(n, p, gen);
        Eigen::VectorXd y = gaussian(n, 1, gen);
        auto problem = PartialLassoProblem::make(y, z, x, 2.0);
        auto fit = solve_partial_lasso(problem);
        Eigen::VectorXd direct = problem.x_aug.colPivHouseholderQr().solve(
            y - z * fit.theta);
        CHECK(fit.zeta.isApprox(direct, 1e-8));
    }
}

TEST_CASE("projection reduction agrees with the joint minimizer") {
    auto gen = seeded(8);
    const int n = 100, d = 4, p = 10;
    Eigen::MatrixXd x = gaussian(n, d, gen);
    Eigen::MatrixXd z = gaussian(n, p, gen);
    Eigen::VectorXd y = gaussian(n, 1, gen);
    for (double lambda : {0.1, 2.0, 25.0}) {
        auto problem = PartialLassoProblem::make(y, z, x, lambda);
        auto fit = solve_partial_lasso(problem);
        auto joint = joint_minimizer(y, z, problem.x_aug, lambda);
        Eigen::VectorXd fitted = z * fit.theta + problem.x_aug * fit.zeta;
        Eigen::VectorXd jfitted = z * joint.theta + problem.x_aug * joint.zeta;
        CHECK((fitted - jfitted).norm() <= 1e-6 * (1.0 + jfitted.norm()));
        CHECK(fit.diag.objective ==
              doctest::Approx(joint.objective).epsilon(1e-8));
    }
}

TEST_CASE("scale covariance: (cY, c lambda) -> (c theta, c zeta)") {
    auto gen = seeded(9);
    const int n = 60, d = 2, p = 6;
    Eigen::MatrixXd x = gaussian(n, d, gen);
    Eigen::MatrixXd z = gaussian(n, p, gen);
    Eigen::VectorXd y = gaussian(n, 1, gen);
    const double lambda = 1.5, c = 3.0;
    auto base = solve_partial_lasso(PartialLassoProblem::make(y, z, x, lambda));
    auto scaled =
        solve_partial_lasso(PartialLassoProblem::make(c * y, z, x, c * lambda));
    CHECK(scaled.theta.isApprox(c * base.theta, 1e-6));
    CHECK(scaled.zeta.isApprox(c * base.zeta, 1e-6));
}

TEST_CASE("appending a zero column changes nothing") {
    auto gen = seeded(10);
    const int n = 50, d = 2, p = 5;
    Eigen::MatrixXd x = gaussian(n, d, gen);
    Eigen::MatrixXd z = gaussian(n, p, gen);
    Eigen::VectorXd y = gaussian(n, 1, gen);
    auto fit = solve_partial_lasso(PartialLassoProblem::make(y, z, x, 1.0));

    Eigen::MatrixXd z2(n, p + 1);
    z2 << z, Eigen::VectorXd::Zero(n);
    auto fit2 = solve_partial_lasso(PartialLassoProblem::make(y, z2, x, 1.0));
    CHECK(fit2.theta(p) == 0.0);
    CHECK(fit2.theta.head(p).isApprox(fit.theta, 1e-8));
    CHECK(fit2.zeta.isApprox(fit.zeta, 1e-8));
}

TEST_CASE("lambda path") {
    auto gen = seeded(11);
    const int n = 80, d = 3, p = 7;
    Eigen::MatrixXd x = gaussian(n, d, gen);
    Eigen::MatrixXd z = gaussian(n, p, gen);
    Eigen::VectorXd y = gaussian(n, 1, gen);
    auto problem = PartialLassoProblem::make(y, z, x, 1.0);

    auto path = lambda_path(problem, 12, 1e-3);
    REQUIRE(path.size() == 12);
    CHECK(path.front().second.theta.isZero());
    double prev_resid = std::numeric_limits<double>::infinity();
    for (const auto& [lam, fit] : path) {
        Eigen::VectorXd resid = y - z * fit.theta - problem.x_aug * fit.zeta;
        CHECK(resid.norm() <= prev_resid + 1e-9);
        prev_resid = resid.norm();
    }
    CHECK_THROWS_AS(lambda_path(problem, 1, 1e-3), ConfigError);
}

TEST_CASE("cross validation") {
    auto gen = seeded(12);

    SUBCASE("noiseless exact model has near-zero CV error at small lambda") {
        const int n_env = 20, d = 2, p = 3;
        Eigen::MatrixXd x1 = gaussian(n_env, d, gen);
        Eigen::MatrixXd x(2 * n_env, d);
        x << x1, x1;  // duplicated rows land in every fold
        Eigen::MatrixXd z = gaussian(2 * n_env, p, gen);
        z.bottomRows(n_env) = z.topRows(n_env);
        Eigen::VectorXd beta0(d);
        beta0 << 2.0, -1.0;
        Eigen::VectorXd y = x * beta0 + z.col(0);
        auto problem = PartialLassoProblem::make(y, z, x, 1.0);
        std::vector<std::pair<std::string, int>> blocks = {
            {"e1", n_env}, {"e2", n_env}};
        auto cv = cross_validate(y, z, problem.x_aug, blocks, 5, {1.0, 1e-6});
        CHECK(cv.fold_mse.col(1).maxCoeff() < 1e-10);
        CHECK(cv.selected_lambda == 1e-6);
    }
    SUBCASE("leave-one-out matches brute-force enumeration") {
        const int n = 12, d = 1, p = 2;
        Eigen::MatrixXd x = gaussian(n, d, gen);
        Eigen::MatrixXd z = gaussian(n, p, gen);
        Eigen::VectorXd y = gaussian(n, 1, gen);
        auto problem = PartialLassoProblem::make(y, z, x, 1.0);
        std::vector<std::pair<std::string, int>> blocks = {{"e", n}};
        const std::vector<double> grid = {4.0, 0.5};
        auto cv = cross_validate(y, z, problem.x_aug, blocks, n, grid);

        for (int g = 0; g < 2; ++g) {
            for (int held = 0; held < n; ++held) {
                std::vector<int> keep;
                for (int i = 0; i < n; ++i) {
                    if (i != held) keep.push_back(i);
                }
                auto sub = PartialLassoProblem::make(
                    y(keep), z(keep, Eigen::all), x(keep, Eigen::all), grid[g]);
                auto fit = solve_partial_lasso(sub);
                const double pred = z.row(held).dot(fit.theta) +
                                    x.row(held).dot(fit.zeta.head(d)) +
                                    fit.zeta(d);
                const double err = (y(held) - pred) * (y(held) - pred);
                CHECK(cv.fold_mse(held, g) == doctest::Approx(err).epsilon(1e-6));
            }
        }
        CHECK((cv.selected_lambda == grid[0] || cv.selected_lambda == grid[1]));
    }
    SUBCASE("stratification failure is reported") {
        const int n = 8;
        Eigen::VectorXd y = gaussian(n, 1, gen);
        Eigen::MatrixXd z = gaussian(n, 2, gen);
        Eigen::MatrixXd x = gaussian(n, 1, gen);
        auto problem = PartialLassoProblem::make(y, z, x, 1.0);
        std::vector<std::pair<std::string, int>> blocks = {{"e1", 5}, {"e2", 3}};
        CHECK_THROWS_AS(
            cross_validate(y, z, problem.x_aug, blocks, 4, {1.0, 0.1}),
            ConfigError);
    }
}
