#include <doctest.h>

#include <cmath>

#include "invmatch/errors.hpp"
#include "invmatch/scm.hpp"

using namespace invmatch;

namespace {

// X1 -> Y -> X2 with unit coefficients and standard normal noises.
// Predictor 0 is X1, predictor 1 is X2, node 2 is Y.
ScmModel chain_model(double beta1 = 1.0, double gamma2 = 1.0) {
    ScmModel m;
    m.d = 2;
    m.b_matrix = Eigen::MatrixXd::Zero(2, 2);
    m.gamma = Eigen::VectorXd::Zero(2);
    m.beta = Eigen::VectorXd::Zero(2);
    m.beta(0) = beta1;
    m.gamma(1) = gamma2;
    m.response_parents = {0};
    m.pe_set = {0};
    m.noise_mean = Eigen::VectorXd::Zero(3);
    m.noise_var = Eigen::VectorXd::Ones(3);
    m.topo_order = {0, 2, 1};
    return m;
}

EnvParams null_env(int d, const std::string& id = "e") {
    EnvParams e;
    e.env_id = id;
    e.alpha = Eigen::VectorXd::Zero(d);
    return e;
}

}  // namespace

TEST_CASE("degenerate deterministic model") {
    ScmModel m;
    m.d = 1;
    m.b_matrix = Eigen::MatrixXd::Zero(1, 1);
    m.gamma = Eigen::VectorXd::Zero(1);
    m.beta = Eigen::VectorXd::Ones(1);
    m.response_parents = {0};
    m.noise_mean = Eigen::VectorXd::Zero(2);
    m.noise_mean(0) = 2.0;
    m.noise_var = Eigen::VectorXd::Zero(2);
    m.topo_order = {0, 1};

    auto env = null_env(1);
    auto data = sample_environment(m, env, 5, RngStream(1));
    CHECK(data.x.col(0).isApproxToConstant(2.0));
    CHECK(data.y.isApproxToConstant(2.0));

    env.mu = 3.0;
    auto shifted = sample_environment(m, env, 5, RngStream(1));
    CHECK(shifted.y.isApproxToConstant(5.0));
}

TEST_CASE("chain variance through sampling") {
    // Var(X2) = Var(Y) + 1 = 3; SE of the sample variance of a normal is
    // roughly Var * sqrt(2/n).
    const int n = 100000;
    auto data = sample_environment(chain_model(), null_env(2), n, RngStream(9));
    const Eigen::VectorXd x2 = data.x.col(1);
    const double mean = x2.mean();
    const double var = (x2.array() - mean).square().sum() / (n - 1);
    const double se = 3.0 * std::sqrt(2.0 / n);
    CHECK(std::abs(var - 3.0) < 3.0 * se);
}

TEST_CASE("population moments, hand-checked chain") {
    // X1 = e1, Y = 2 X1 + eY, X2 = Y + e2, unit variances.
    auto m = chain_model(2.0, 1.0);
    auto mo = population_moments(m, null_env(2));
    CHECK(mo.cov(2, 2) == doctest::Approx(5.0));
    CHECK(mo.cov(0, 2) == doctest::Approx(2.0));
    CHECK(mo.cov(1, 1) == doctest::Approx(6.0));
    CHECK(mo.cov(2, 1) == doctest::Approx(5.0));
}

TEST_CASE("population moments, zero coefficients and mean shift") {
    ScmModel m = chain_model();
    m.beta.setZero();
    m.gamma.setZero();
    m.response_parents = {};
    m.pe_set = {};
    m.noise_mean << 0.5, -1.0, 2.0;
    auto mo = population_moments(m, null_env(2));
    CHECK(mo.cov.isApprox(Eigen::MatrixXd::Identity(3, 3)));
    CHECK(mo.mean.isApprox(m.noise_mean));

    auto env = null_env(2);
    env.mu = 4.5;
    auto shifted = population_moments(m, env);
    CHECK(shifted.mean(2) == doctest::Approx(2.0 + 4.5));
    CHECK(shifted.cov.isApprox(mo.cov));
}

TEST_CASE("sampling matches population moments within 5 SE") {
    auto m = chain_model(1.3, -0.8);
    EnvParams env = null_env(2);
    env.alpha(0) = 0.7;
    env.mu = -1.2;
    const int n = 100000;
    auto data = sample_environment(m, env, n, RngStream(17));
    auto mo = population_moments(m, env);

    for (int j = 0; j < 2; ++j) {
        const double sd = std::sqrt(mo.cov(j, j));
        CHECK(std::abs(data.x.col(j).mean() - mo.mean(j)) <
              5.0 * sd / std::sqrt(double(n)));
        const double var =
            (data.x.col(j).array() - data.x.col(j).mean()).square().sum() / (n - 1);
        CHECK(std::abs(var - mo.cov(j, j)) <
              5.0 * mo.cov(j, j) * std::sqrt(2.0 / n));
    }
    const double ymean = data.y.mean();
    CHECK(std::abs(ymean - mo.mean(2)) <
          5.0 * std::sqrt(mo.cov(2, 2) / n));
}

TEST_CASE("intervention locality: non-descendants of Y unchanged") {
    auto m = chain_model();
    EnvParams a = null_env(2, "a");
    EnvParams b = null_env(2, "b");
    b.alpha(0) = 2.0;
    b.mu = 3.0;
    // X1 is a non-descendant of Y: exact population marginal is unchanged.
    auto ma = population_moments(m, a);
    auto mb = population_moments(m, b);
    CHECK(ma.mean(0) == doctest::Approx(mb.mean(0)));
    CHECK(ma.cov(0, 0) == doctest::Approx(mb.cov(0, 0)));

    const int n = 50000;
    auto da = sample_environment(m, a, n, RngStream(3));
    auto db = sample_environment(m, b, n, RngStream(4));
    CHECK(std::abs(da.x.col(0).mean() - db.x.col(0).mean()) <
          5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("identity transform and zero measurement error are bit-exact") {
    auto m = chain_model();
    auto env = null_env(2);
    auto plain = sample_environment(m, env, 200, RngStream(5));
    auto dressed = sample_environment(m, env, 200, RngStream(5),
                                      NonlinearitySpec::power(1.0),
                                      MeasurementErrorSpec{0.0, true});
    CHECK(plain.x == dressed.x);
    CHECK(plain.y == dressed.y);
}

TEST_CASE("nonlinear transform wraps the full assignment") {
    ScmModel m = chain_model();
    m.noise_var.setZero();
    m.noise_mean.setZero();
    m.noise_mean(0) = 4.0;  // X1 = 4 deterministically
    EnvParams env = null_env(2);
    env.mu = 5.0;
    auto data = sample_environment(m, env, 3, RngStream(1),
                                   NonlinearitySpec::power(0.5));
    // Y = f(1*4 + 5) = 3; X2 = Y = 3 (child consumes post-transform Y).
    CHECK(data.y.isApproxToConstant(3.0));
    CHECK(data.x.col(1).isApproxToConstant(3.0));
}

TEST_CASE("measurement error skips test response when excluded") {
    ScmModel m = chain_model();
    m.noise_var.setZero();
    m.noise_mean.setZero();
    m.noise_mean(0) = 1.0;
    auto env = null_env(2);
    MeasurementErrorSpec me{2.5, true};
    auto test_data = sample_environment(m, env, 400, RngStream(8), {}, me, true);
    // Latent Y = 1 exactly; with the exclusion flag the emitted Y is noiseless.
    CHECK(test_data.y.isApproxToConstant(1.0));
    // X still carries error.
    const double varx =
        (test_data.x.col(0).array() - test_data.x.col(0).mean()).square().sum() /
        399;
    CHECK(varx > 1.0);

    auto train_data = sample_environment(m, env, 400, RngStream(8), {}, me, false);
    CHECK(!train_data.y.isApproxToConstant(1.0));
}

TEST_CASE("random model honors the generation contract") {
    auto m = random_model(RngStream(100), 9);
    CHECK(m.d == 9);
    CHECK_NOTHROW(m.validate());
    CHECK(!m.response_parents.empty());
    CHECK(!m.response_children().empty());

    auto again = random_model(RngStream(100), 9);
    CHECK(m.b_matrix == again.b_matrix);
    CHECK(m.beta == again.beta);
    CHECK(m.gamma == again.gamma);
    CHECK(m.topo_order == again.topo_order);

    for (int j = 0; j < m.d; ++j) {
        if (m.beta(j) != 0.0) {
            CHECK(std::abs(m.beta(j)) >= 0.5);
            CHECK(std::abs(m.beta(j)) <= 1.5);
        }
    }
    CHECK_THROWS_AS(random_model(RngStream(1), 2), ConfigError);
}

TEST_CASE("perturb_environments draws within the stated bounds") {
    auto m = random_model(RngStream(21), 6);
    auto es = perturb_environments(m, RngStream(22), 5, 5, 2.0, 10.0);
    REQUIRE(es.envs.size() == 10);
    CHECK(es.n_train == 5);
    CHECK(!es.pe_set.empty());
    for (int j : es.pe_set) {
        CHECK(m.beta(j) != 0.0);
    }
    for (int e = 0; e < 10; ++e) {
        const double bound = e < 5 ? 2.0 : 10.0;
        CHECK(es.envs[e].alpha.cwiseAbs().maxCoeff() <= bound);
        CHECK(std::abs(es.envs[e].mu) <= bound);
        for (int j = 0; j < m.d; ++j) {
            if (es.envs[e].alpha(j) != 0.0) {
                CHECK(std::find(es.pe_set.begin(), es.pe_set.end(), j) !=
                      es.pe_set.end());
            }
        }
    }

    auto zero = perturb_environments(m, RngStream(22), 2, 2, 0.0, 0.0);
    for (const auto& env : zero.envs) {
        CHECK(env.alpha.isZero());
        CHECK(env.mu == 0.0);
    }

    auto repeat = perturb_environments(m, RngStream(22), 5, 5, 2.0, 10.0);
    CHECK(repeat.pe_set == es.pe_set);
    CHECK(repeat.envs[7].alpha == es.envs[7].alpha);

    ScmModel orphan = m;
    orphan.beta.setZero();
    orphan.response_parents.clear();
    orphan.pe_set.clear();
    CHECK_THROWS_AS(perturb_environments(orphan, RngStream(1), 1, 1, 2.0, 10.0),
                    ConfigError);
}

TEST_CASE("validate rejects cyclic and inconsistent models") {
    auto m = chain_model();
    m.topo_order = {1, 2, 0};  // X1 -> Y edge now goes backward
    CHECK_THROWS_AS(m.validate(), ModelError);

    auto bad = chain_model();
    bad.gamma(0) = 0.5;  // node 0 already a parent of Y
    CHECK_THROWS_AS(bad.validate(), ModelError);
}
