#include "invmatch/modules.hpp"

#include <algorithm>
#include <sstream>

#include "invmatch/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace invmatch {

std::string ModuleId::str() const {
    std::ostringstream os;
    os << (k + 1) << '|';
    for (std::size_t i = 0; i < r_set.size(); ++i) {
        if (i) os << ',';
        os << (r_set[i] + 1);
    }
    return os.str();
}

ModuleId ModuleId::parse(const std::string& s) {
    auto bar = s.find('|');
    if (bar == std::string::npos) throw ConfigError("bad module id: " + s);
    ModuleId id;
    id.k = std::stoi(s.substr(0, bar)) - 1;
    std::istringstream rs(s.substr(bar + 1));
    std::string tok;
    while (std::getline(rs, tok, ',')) {
        if (!tok.empty()) id.r_set.push_back(std::stoi(tok) - 1);
    }
    std::sort(id.r_set.begin(), id.r_set.end());
    if (id.r_set.empty() || id.k < 0) throw ConfigError("bad module id: " + s);
    return id;
}

std::vector<ModuleId> enumerate_modules(int d, std::optional<int> max_r) {
    if (d < 2) throw ConfigError("enumerate_modules requires d >= 2");
    const int cap = max_r.value_or(d - 1);
    std::vector<ModuleId> out;
    for (int k = 0; k < d; ++k) {
        std::vector<int> others;
        for (int j = 0; j < d; ++j) {
            if (j != k) others.push_back(j);
        }
        const int m = d - 1;
        for (int card = 1; card <= std::min(cap, m); ++card) {
            // combinations of `others` of size `card`, lexicographic
            std::vector<int> idx(card);
            for (int i = 0; i < card; ++i) idx[i] = i;
            while (true) {
                ModuleId id;
                id.k = k;
                for (int i : idx) id.r_set.push_back(others[i]);
                out.push_back(std::move(id));
                int i = card - 1;
                while (i >= 0 && idx[i] == m - card + i) --i;
                if (i < 0) break;
                ++idx[i];
                for (int j = i + 1; j < card; ++j) idx[j] = idx[j - 1] + 1;
            }
        }
    }
    return out;
}

ModuleFit fit_module_env(const Eigen::MatrixXd& x_env, const ModuleId& id,
                         bool with_intercept) {
    const int n = static_cast<int>(x_env.rows());
    const int r = static_cast<int>(id.r_set.size());
    if (r == 0 || id.k < 0 || id.k >= x_env.cols()) {
        throw ConfigError("invalid module id " + id.str());
    }
    if (n < r + 2) {
        throw ConfigError("module " + id.str() + ": n_e = " + std::to_string(n) +
                          " < |R| + 2");
    }
    const int cols = r + (with_intercept ? 1 : 0);
    Eigen::MatrixXd design(n, cols);
    for (int i = 0; i < r; ++i) design.col(i) = x_env.col(id.r_set[i]);
    if (with_intercept) design.col(r).setOnes();
    const Eigen::VectorXd target = x_env.col(id.k);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    ModuleFit fit;
    if (qr.rank() < cols) {
        fit.skipped = true;
        fit.coeff = Eigen::VectorXd::Zero(r);
        fit.intercept = target.mean();
        fit.fitted = Eigen::VectorXd::Constant(n, fit.intercept);
        return fit;
    }
    Eigen::VectorXd sol = qr.solve(target);
    fit.coeff = sol.head(r);
    fit.intercept = with_intercept ? sol(r) : 0.0;
    fit.fitted = design * sol;
    return fit;
}

namespace {

// One environment block, all modules; writes disjoint columns of z rows
// [row0, row0 + n_e).
void fit_block(const Eigen::MatrixXd& x_env, const std::vector<ModuleId>& ids,
               bool with_intercept, bool parallel, int row0,
               Eigen::MatrixXd& z,
               std::vector<Eigen::VectorXd>* coeffs,
               std::vector<char>* skip_flags) {
    const int p = static_cast<int>(ids.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
#endif
    for (int m = 0; m < p; ++m) {
        ModuleFit fit = fit_module_env(x_env, ids[m], with_intercept);
        z.col(m).segment(row0, x_env.rows()) = fit.fitted;
        if (coeffs) {
            Eigen::VectorXd c(fit.coeff.size() + (with_intercept ? 1 : 0));
            c.head(fit.coeff.size()) = fit.coeff;
            if (with_intercept) c(fit.coeff.size()) = fit.intercept;
            (*coeffs)[m] = std::move(c);
        }
        if (skip_flags) (*skip_flags)[m] = fit.skipped ? 1 : 0;
    }
    (void)parallel;
}

}  // namespace

ModuleDesign build_train_design(const DataBundle& data,
                                const std::vector<ModuleId>& ids,
                                bool with_intercept, bool parallel) {
    if (data.train.empty()) throw ConfigError("no training environments");
    const int d = static_cast<int>(data.train.front().x.cols());
    data.validate(d);
    int n = 0;
    for (const auto& env : data.train) {
        if (env.x.rows() <= d + 1) {
            throw ConfigError("environment " + env.env_id +
                              " has n_e <= d+1: per-environment fits are "
                              "under-determined");
        }
        n += static_cast<int>(env.x.rows());
    }
    const int p = static_cast<int>(ids.size());

    ModuleDesign out;
    out.module_ids = ids;
    out.z_hat.resize(n, p);
    out.row_env.reserve(n);
    out.per_env_coeffs.assign(p, {});
    out.skipped.assign(p, {});
    for (int m = 0; m < p; ++m) {
        out.per_env_coeffs[m].resize(data.train.size());
        out.skipped[m].resize(data.train.size(), 0);
    }

    int row0 = 0;
    for (std::size_t e = 0; e < data.train.size(); ++e) {
        const auto& env = data.train[e];
        const int ne = static_cast<int>(env.x.rows());
        std::vector<Eigen::VectorXd> coeffs(p);
        std::vector<char> flags(p, 0);
        fit_block(env.x, ids, with_intercept, parallel, row0, out.z_hat,
                  &coeffs, &flags);
        for (int m = 0; m < p; ++m) {
            out.per_env_coeffs[m][e] = std::move(coeffs[m]);
            out.skipped[m][e] = flags[m];
        }
        for (int i = 0; i < ne; ++i) out.row_env.push_back(env.env_id);
        out.env_blocks.emplace_back(env.env_id, ne);
        row0 += ne;
    }
    return out;
}

Eigen::MatrixXd build_test_design(const Eigen::MatrixXd& x_test,
                                  const std::vector<ModuleId>& ids,
                                  bool with_intercept, bool parallel) {
    const int d = static_cast<int>(x_test.cols());
    if (x_test.rows() < d + 2) {
        throw ConfigError("test design needs m >= d+2 rows, got " +
                          std::to_string(x_test.rows()));
    }
    Eigen::MatrixXd z(x_test.rows(), ids.size());
    fit_block(x_test, ids, with_intercept, parallel, 0, z, nullptr, nullptr);
    return z;
}

Eigen::MatrixXd build_train_design_excluding(const DataBundle& data,
                                             const std::vector<ModuleId>& ids,
                                             const std::vector<char>& exclude_row,
                                             bool with_intercept) {
    int n = 0;
    for (const auto& env : data.train) n += static_cast<int>(env.x.rows());
    if (static_cast<int>(exclude_row.size()) != n) {
        throw ConfigError("exclude_row length mismatch");
    }
    const int p = static_cast<int>(ids.size());
    Eigen::MatrixXd z(n, p);
    int row0 = 0;
    for (const auto& env : data.train) {
        const int ne = static_cast<int>(env.x.rows());
        std::vector<int> keep;
        for (int i = 0; i < ne; ++i) {
            if (!exclude_row[row0 + i]) keep.push_back(i);
        }
        Eigen::MatrixXd x_keep(keep.size(), env.x.cols());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            x_keep.row(i) = env.x.row(keep[i]);
        }
        for (int m = 0; m < p; ++m) {
            ModuleFit fit = fit_module_env(x_keep, ids[m], with_intercept);
            // Apply the subset-fitted coefficients to every row of the block.
            Eigen::VectorXd col = Eigen::VectorXd::Constant(ne, fit.intercept);
            for (std::size_t r = 0; r < ids[m].r_set.size(); ++r) {
                col += fit.coeff(r) * env.x.col(ids[m].r_set[r]);
            }
            if (fit.skipped) col.setConstant(fit.intercept);
            z.col(m).segment(row0, ne) = col;
        }
        row0 += ne;
    }
    return z;
}

}  // namespace invmatch
