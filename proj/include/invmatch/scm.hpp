#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "invmatch/rng.hpp"

namespace invmatch {

// Optional response transform f(x) = sign(x)*|x|^b applied to the completed
// assignment of Y (noise and mean shift included).
struct NonlinearitySpec {
    bool enabled = false;
    double exponent = 1.0;

    static NonlinearitySpec identity() { return {}; }
    static NonlinearitySpec power(double b) { return {true, b}; }
};

// Independent N(0, variance) added to every emitted variable. When
// exclude_test_response is set, the response of test environments is emitted
// without error (it is only used for scoring).
struct MeasurementErrorSpec {
    double variance = 0.0;
    bool exclude_test_response = true;

    static MeasurementErrorSpec none() { return {}; }
};

// Acyclic linear structural model over predictors X_1..X_d and response Y.
//
//   X = gamma*Y + B*X + eps_X
//   Y = (alpha_e + beta)' X + mu_e + eps_Y
//
// Node index d denotes Y throughout (moments, noise vectors, topo order).
struct ScmModel {
    int d = 0;
    Eigen::MatrixXd b_matrix;  // d x d, X-on-X coefficients
    Eigen::VectorXd gamma;     // d, Y-on-children coefficients
    Eigen::VectorXd beta;      // d, base parent coefficients
    std::vector<int> response_parents;  // { j : beta_j != 0 }
    std::vector<int> pe_set;            // varying-coefficient parents
    Eigen::VectorXd noise_mean;  // d+1, Y last
    Eigen::VectorXd noise_var;   // d+1, Y last
    std::vector<int> topo_order;  // permutation of 0..d

    // Throws ModelError on cycles, parent/child overlap, or bad index sets.
    void validate() const;

    std::vector<int> response_children() const;
    // Predictor indices whose value depends on Y (children of Y and their
    // graph descendants).
    std::vector<int> response_descendants() const;
};

// Per-environment intervention on the assignment of Y.
struct EnvParams {
    std::string env_id;
    Eigen::VectorXd alpha;  // d, zero outside pe_set
    double mu = 0.0;
};

struct EnvData {
    std::string env_id;
    Eigen::MatrixXd x;  // n x d
    Eigen::VectorXd y;  // n
};

struct DataBundle {
    std::vector<EnvData> train;
    std::vector<EnvData> test;

    void validate(int d) const;
};

struct Moments {
    Eigen::VectorXd mean;  // d+1, Y last
    Eigen::MatrixXd cov;   // (d+1) x (d+1)
};

struct EnvironmentSet {
    std::vector<int> pe_set;
    std::vector<EnvParams> envs;  // train first, then test
    int n_train = 0;
};

// Ancestral sampling in topological order. Children of Y consume the
// post-transform, pre-measurement-error value of Y.
EnvData sample_environment(const ScmModel& model, const EnvParams& env, int n,
                           const RngStream& rng,
                           const NonlinearitySpec& nl = {},
                           const MeasurementErrorSpec& me = {},
                           bool is_test = false);

// Exact joint mean and covariance of (X, Y) in one environment; linear model
// only (nl must be identity where it can reach this path).
Moments population_moments(const ScmModel& model, const EnvParams& env);

// Random acyclic model: strictly lower-triangular Bernoulli(1/2) adjacency
// over d+1 nodes, coefficients uniform on +-[0.5, 1.5], response chosen
// uniformly among nodes with at least one parent and one child. The adjacency
// is redrawn (up to 1000 attempts) when no node qualifies.
ScmModel random_model(const RngStream& rng, int d);

// Draws PE as a uniform subset of PA(Y) of uniform size, then per-environment
// coefficient perturbations alpha_j ~ Unif[-a, a] for j in PE and a mean
// shift mu ~ Unif[-a, a], with a = a_train or a_test.
EnvironmentSet perturb_environments(const ScmModel& model, const RngStream& rng,
                                    int n_train, int n_test, double a_train,
                                    double a_test);

}  // namespace invmatch
