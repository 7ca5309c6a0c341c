#include "invmatch/scm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "invmatch/errors.hpp"

namespace invmatch {

namespace {

// Joint (d+1)x(d+1) coefficient matrix A with A(i,j) the coefficient of node
// j in the assignment of node i. Y is node d.
Eigen::MatrixXd joint_coefficients(const ScmModel& model,
                                   const Eigen::VectorXd& alpha) {
    const int d = model.d;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d + 1, d + 1);
    a.topLeftCorner(d, d) = model.b_matrix;
    a.col(d).head(d) = model.gamma;
    a.row(d).head(d) = (model.beta + alpha).transpose();
    return a;
}

double power_transform(double x, double b) {
    return std::copysign(std::pow(std::abs(x), b), x);
}

}  // namespace

void ScmModel::validate() const {
    if (d < 1) throw ModelError("model needs at least one predictor");
    if (b_matrix.rows() != d || b_matrix.cols() != d || gamma.size() != d ||
        beta.size() != d || noise_mean.size() != d + 1 ||
        noise_var.size() != d + 1) {
        throw ModelError("model field dimensions inconsistent with d");
    }
    if (static_cast<int>(topo_order.size()) != d + 1) {
        throw ModelError("topo_order must list all d+1 nodes");
    }
    std::vector<int> pos(d + 1, -1);
    for (int i = 0; i <= d; ++i) {
        int node = topo_order[i];
        if (node < 0 || node > d || pos[node] != -1) {
            throw ModelError("topo_order is not a permutation of 0..d");
        }
        pos[node] = i;
    }
    // Every edge j -> i must go forward in the order; this is exactly the
    // strictly-lower-triangular (nilpotent) condition after permutation.
    const Eigen::MatrixXd a = joint_coefficients(*this, Eigen::VectorXd::Zero(d));
    for (int i = 0; i <= d; ++i) {
        for (int j = 0; j <= d; ++j) {
            if (a(i, j) != 0.0 && pos[j] >= pos[i]) {
                throw ModelError("cycle detected: edge " + std::to_string(j) +
                                 " -> " + std::to_string(i) +
                                 " violates topo_order");
            }
        }
    }
    for (int j = 0; j < d; ++j) {
        if (gamma(j) != 0.0 && beta(j) != 0.0) {
            throw ModelError("node " + std::to_string(j) +
                             " is both parent and child of Y");
        }
    }
    std::set<int> parents(response_parents.begin(), response_parents.end());
    for (int j = 0; j < d; ++j) {
        if ((beta(j) != 0.0) != (parents.count(j) > 0)) {
            throw ModelError("response_parents inconsistent with beta support");
        }
    }
    for (int j : pe_set) {
        if (!parents.count(j)) throw ModelError("pe_set not within PA(Y)");
    }
    if ((noise_var.array() < 0.0).any()) {
        throw ModelError("negative noise variance");
    }
}

std::vector<int> ScmModel::response_children() const {
    std::vector<int> out;
    for (int j = 0; j < d; ++j) {
        if (gamma(j) != 0.0) out.push_back(j);
    }
    return out;
}

std::vector<int> ScmModel::response_descendants() const {
    std::vector<bool> reach(d, false);
    for (int j : response_children()) reach[j] = true;
    // topo_order guarantees one forward pass suffices.
    std::vector<int> pos(d + 1);
    for (int i = 0; i <= d; ++i) pos[topo_order[i]] = i;
    for (int step = 0; step <= d; ++step) {
        int node = topo_order[step];
        if (node == d) continue;
        if (reach[node]) continue;
        for (int j = 0; j < d; ++j) {
            if (b_matrix(node, j) != 0.0 && reach[j]) {
                reach[node] = true;
                break;
            }
        }
    }
    std::vector<int> out;
    for (int j = 0; j < d; ++j) {
        if (reach[j]) out.push_back(j);
    }
    return out;
}

void DataBundle::validate(int d) const {
    std::set<std::string> ids;
    auto check = [&](const EnvData& e) {
        if (e.x.cols() != d) throw ConfigError("environment " + e.env_id +
                                               " has wrong column count");
        if (e.x.rows() < 1 || e.x.rows() != e.y.size()) {
            throw ConfigError("environment " + e.env_id + " has bad row count");
        }
        if (!ids.insert(e.env_id).second) {
            throw ConfigError("duplicate environment id " + e.env_id);
        }
    };
    for (const auto& e : train) check(e);
    for (const auto& e : test) check(e);
}

EnvData sample_environment(const ScmModel& model, const EnvParams& env, int n,
                           const RngStream& rng, const NonlinearitySpec& nl,
                           const MeasurementErrorSpec& me, bool is_test) {
    if (n < 1) throw ConfigError("sample count must be positive");
    model.validate();
    if (env.alpha.size() != model.d) {
        throw ConfigError("alpha dimension mismatch");
    }
    std::set<int> pe(model.pe_set.begin(), model.pe_set.end());
    for (int j = 0; j < model.d; ++j) {
        if (env.alpha(j) != 0.0 && !pe.count(j)) {
            throw ConfigError("alpha support outside pe_set in environment " +
                              env.env_id);
        }
    }

    const int d = model.d;
    const Eigen::VectorXd y_coef = model.beta + env.alpha;
    const bool transform = nl.enabled && nl.exponent != 1.0;
    const bool add_error = me.variance > 0.0;
    const bool error_on_y = add_error && !(is_test && me.exclude_test_response);

    auto gen = rng.engine();
    std::normal_distribution<double> std_normal(0.0, 1.0);
    const double me_sd = add_error ? std::sqrt(me.variance) : 0.0;

    EnvData out;
    out.env_id = env.env_id;
    out.x.resize(n, d);
    out.y.resize(n);

    Eigen::VectorXd vals(d + 1);
    for (int i = 0; i < n; ++i) {
        vals.setZero();
        for (int node : model.topo_order) {
            double sd = std::sqrt(model.noise_var(node));
            double eps = model.noise_mean(node) +
                         (sd > 0.0 ? sd * std_normal(gen) : 0.0);
            if (node < d) {
                vals(node) = model.gamma(node) * vals(d) +
                             model.b_matrix.row(node).dot(vals.head(d)) + eps;
            } else {
                double rhs = y_coef.dot(vals.head(d)) + env.mu + eps;
                vals(d) = transform ? power_transform(rhs, nl.exponent) : rhs;
            }
        }
        if (!vals.allFinite()) {
            throw NumericError("non-finite sample in environment " + env.env_id);
        }
        for (int j = 0; j < d; ++j) {
            out.x(i, j) = vals(j) + (add_error ? me_sd * std_normal(gen) : 0.0);
        }
        out.y(i) = vals(d) + (error_on_y ? me_sd * std_normal(gen) : 0.0);
    }
    return out;
}

Moments population_moments(const ScmModel& model, const EnvParams& env) {
    model.validate();
    if (env.alpha.size() != model.d) {
        throw ConfigError("alpha dimension mismatch");
    }
    const int d = model.d;
    const Eigen::MatrixXd a = joint_coefficients(model, env.alpha);
    Eigen::MatrixXd ima = Eigen::MatrixXd::Identity(d + 1, d + 1) - a;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ima);

    Eigen::VectorXd base = model.noise_mean;
    base(d) += env.mu;

    Moments m;
    m.mean = lu.solve(base);
    Eigen::MatrixXd inv = lu.solve(Eigen::MatrixXd::Identity(d + 1, d + 1));
    m.cov = inv * model.noise_var.asDiagonal() * inv.transpose();
    if (!m.mean.allFinite() || !m.cov.allFinite()) {
        throw ModelError("singular (I - A): acyclicity invariant violated");
    }
    return m;
}

ScmModel random_model(const RngStream& rng, int d) {
    if (d < 3) throw ConfigError("random_model requires d >= 3");
    auto gen = rng.engine();
    std::bernoulli_distribution edge(0.5);
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::bernoulli_distribution flip(0.5);

    const int nodes = d + 1;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        // adj(i, j) == true means edge node_j -> node_i, j < i.
        std::vector<std::vector<bool>> adj(nodes, std::vector<bool>(nodes, false));
        for (int i = 0; i < nodes; ++i) {
            for (int j = 0; j < i; ++j) adj[i][j] = edge(gen);
        }
        std::vector<int> candidates;
        for (int v = 0; v < nodes; ++v) {
            bool has_parent = false, has_child = false;
            for (int j = 0; j < v; ++j) has_parent = has_parent || adj[v][j];
            for (int i = v + 1; i < nodes; ++i) has_child = has_child || adj[i][v];
            if (has_parent && has_child) candidates.push_back(v);
        }
        if (candidates.empty()) continue;
        std::uniform_int_distribution<int> pick(0, int(candidates.size()) - 1);
        const int y_node = candidates[pick(gen)];

        // Predictor labels keep the node order with Y removed; the node order
        // itself is the topological order.
        std::vector<int> label(nodes, -1);
        int next = 0;
        for (int v = 0; v < nodes; ++v) {
            if (v != y_node) label[v] = next++;
        }

        ScmModel model;
        model.d = d;
        model.b_matrix = Eigen::MatrixXd::Zero(d, d);
        model.gamma = Eigen::VectorXd::Zero(d);
        model.beta = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < nodes; ++i) {
            for (int j = 0; j < i; ++j) {
                if (!adj[i][j]) continue;
                double coef = (flip(gen) ? -1.0 : 1.0) * mag(gen);
                if (i == y_node) {
                    model.beta(label[j]) = coef;
                } else if (j == y_node) {
                    model.gamma(label[i]) = coef;
                } else {
                    model.b_matrix(label[i], label[j]) = coef;
                }
            }
        }
        for (int j = 0; j < d; ++j) {
            if (model.beta(j) != 0.0) model.response_parents.push_back(j);
        }
        model.noise_mean = Eigen::VectorXd::Zero(d + 1);
        model.noise_var = Eigen::VectorXd::Ones(d + 1);
        model.topo_order.resize(nodes);
        for (int v = 0; v < nodes; ++v) {
            model.topo_order[v] = (v == y_node) ? d : label[v];
        }
        model.validate();
        return model;
    }
    throw NumericError("random_model: no qualifying response node in 1000 attempts");
}

EnvironmentSet perturb_environments(const ScmModel& model, const RngStream& rng,
                                    int n_train, int n_test, double a_train,
                                    double a_test) {
    if (model.response_parents.empty()) {
        throw ConfigError("perturb_environments: PA(Y) is empty");
    }
    if (n_train < 0 || n_test < 0 || a_train < 0.0 || a_test < 0.0) {
        throw ConfigError("perturb_environments: bad counts or scales");
    }
    auto gen = rng.engine();
    const int pa = static_cast<int>(model.response_parents.size());
    std::uniform_int_distribution<int> size_dist(1, pa);
    const int n_p = size_dist(gen);

    std::vector<int> pool = model.response_parents;
    std::vector<int> pe;
    std::sample(pool.begin(), pool.end(), std::back_inserter(pe), n_p, gen);
    std::sort(pe.begin(), pe.end());

    EnvironmentSet out;
    out.pe_set = pe;
    out.n_train = n_train;
    for (int e = 0; e < n_train + n_test; ++e) {
        const bool train = e < n_train;
        const double a = train ? a_train : a_test;
        std::uniform_real_distribution<double> shift(-a, a);
        EnvParams env;
        env.env_id = (train ? "train" : "test") +
                     std::to_string(train ? e + 1 : e - n_train + 1);
        env.alpha = Eigen::VectorXd::Zero(model.d);
        for (int j : pe) env.alpha(j) = (a > 0.0 ? shift(gen) : 0.0);
        env.mu = (a > 0.0 ? shift(gen) : 0.0);
        out.envs.push_back(std::move(env));
    }
    return out;
}

}  // namespace invmatch
