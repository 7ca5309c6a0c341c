#include "invmatch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "invmatch/errors.hpp"
#include "invmatch/io.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace invmatch {

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Regular: return "regular";
        case ExperimentKind::MeasurementError: return "measurement_error";
        case ExperimentKind::Nonlinear: return "nonlinear";
    }
    return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "regular") return ExperimentKind::Regular;
    if (s == "measurement_error") return ExperimentKind::MeasurementError;
    if (s == "nonlinear") return ExperimentKind::Nonlinear;
    throw ConfigError("unknown experiment kind: " + s);
}

void ExperimentConfig::validate() const {
    if (d < 3) throw ConfigError("d must be >= 3");
    if (n_per_env <= d + 1) throw ConfigError("n_per_env must exceed d+1");
    if (n_train_envs < 2) throw ConfigError("need >= 2 training environments");
    if (n_test_envs < 1 || n_datasets < 1) throw ConfigError("counts must be positive");
    if (a_train < 0.0 || a_test < 0.0) throw ConfigError("scales must be nonnegative");
    if (sigma2 < 0.0) throw ConfigError("sigma2 must be nonnegative");
    if (b_exponent <= 0.0) throw ConfigError("b_exponent must be positive");
    if (lambda_grid_size < 2) throw ConfigError("lambda grid needs >= 2 points");
    if (lambda_eps_ratio <= 0.0 || lambda_eps_ratio >= 1.0) {
        throw ConfigError("lambda_eps_ratio must lie in (0, 1)");
    }
    if (folds < 2 || n_per_env < folds) throw ConfigError("bad fold count");
    if (d > 10 && !max_r) {
        throw ConfigError("d > 10 requires max_r (module count grows as d*2^(d-1))");
    }
}

DatasetInstance make_dataset(const ExperimentConfig& cfg, int index) {
    const RngStream root(cfg.seed);
    const RngStream ds = root.child("dataset").child(static_cast<std::uint64_t>(index));

    DatasetInstance out;
    out.model = random_model(ds.child("model"), cfg.d);
    out.envs = perturb_environments(out.model, ds.child("envs"), cfg.n_train_envs,
                                    cfg.n_test_envs, cfg.a_train, cfg.a_test);
    out.model.pe_set = out.envs.pe_set;

    NonlinearitySpec nl;
    MeasurementErrorSpec me;
    if (cfg.kind == ExperimentKind::Nonlinear) nl = NonlinearitySpec::power(cfg.b_exponent);
    if (cfg.kind == ExperimentKind::MeasurementError) me.variance = cfg.sigma2;

    const RngStream data = ds.child("data");
    for (std::size_t e = 0; e < out.envs.envs.size(); ++e) {
        const bool is_test = static_cast<int>(e) >= out.envs.n_train;
        EnvData env = sample_environment(out.model, out.envs.envs[e],
                                         cfg.n_per_env,
                                         data.child(static_cast<std::uint64_t>(e)),
                                         nl, me, is_test);
        (is_test ? out.data.test : out.data.train).push_back(std::move(env));
    }
    return out;
}

DatasetFit fit_dataset(const ExperimentConfig& cfg, const DatasetInstance& ds) {
    DatasetFit fit;
    fit.module_ids = enumerate_modules(cfg.d, cfg.max_r);
    ModuleDesign design =
        build_train_design(ds.data, fit.module_ids, cfg.module_intercept);

    int n = 0;
    for (const auto& env : ds.data.train) n += static_cast<int>(env.x.rows());
    Eigen::VectorXd y(n);
    Eigen::MatrixXd x(n, cfg.d);
    int row = 0;
    for (const auto& env : ds.data.train) {
        const int ne = static_cast<int>(env.x.rows());
        y.segment(row, ne) = env.y;
        x.block(row, 0, ne, cfg.d) = env.x;
        row += ne;
    }

    PartialLassoProblem problem =
        PartialLassoProblem::make(y, design.z_hat, x, 1.0);
    const Projection proj = project_out(problem);
    const std::vector<double> grid =
        make_lambda_grid(lambda_max(proj), cfg.lambda_grid_size,
                         cfg.lambda_eps_ratio);
    const CvResult cv = cross_validate(y, design.z_hat, problem.x_aug,
                                       design.env_blocks, cfg.folds, grid);
    fit.selected_lambda = cv.selected_lambda;

    problem.lambda = cv.selected_lambda;
    fit.gimp = solve_partial_lasso(problem, fit.module_ids);
    fit.gimp.module_intercept = cfg.module_intercept;
    fit.ols = pooled_ols(ds.data);
    return fit;
}

namespace {

DatasetOutcome evaluate_dataset(const ExperimentConfig& cfg, int index) {
    DatasetOutcome out;
    out.index = index;
    try {
        const DatasetInstance ds = make_dataset(cfg, index);
        const DatasetFit fit = fit_dataset(cfg, ds);
        out.selected_lambda = fit.selected_lambda;

        double gimp_sq = 0.0, ols_sq = 0.0;
        int rows = 0;
        std::vector<double> gimp_env, ols_env;
        for (const auto& env : ds.data.test) {
            const Eigen::VectorXd y_gimp = predict_gimp(fit.gimp, env.x);
            const Eigen::VectorXd y_ols = predict_pooled(fit.ols, env.x);
            out.test_env_ids.push_back(env.env_id);
            gimp_env.push_back(score(y_gimp, env.y));
            ols_env.push_back(score(y_ols, env.y));
            gimp_sq += (y_gimp - env.y).squaredNorm();
            ols_sq += (y_ols - env.y).squaredNorm();
            rows += static_cast<int>(env.y.size());
        }
        out.per_env_rss["gimp"] = std::move(gimp_env);
        out.per_env_rss["pooled_ols"] = std::move(ols_env);
        out.pooled_rss["gimp"] = gimp_sq / rows;
        out.pooled_rss["pooled_ols"] = ols_sq / rows;
        out.ok = true;
    } catch (const std::exception& ex) {
        out.ok = false;
        out.error = ex.what();
    }
    return out;
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
    MetricsReport report;
    report.cfg = cfg;
    report.datasets.resize(cfg.n_datasets);

    // Per-dataset streams are derived from (seed, index), so scheduling order
    // cannot change any result.
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < cfg.n_datasets; ++i) {
        report.datasets[i] = evaluate_dataset(cfg, i);
    }

    std::map<std::string, std::vector<double>> pooled;
    for (const auto& ds : report.datasets) {
        if (!ds.ok) {
            ++report.failures;
            continue;
        }
        for (const auto& [method, rss] : ds.pooled_rss) {
            pooled[method].push_back(rss);
        }
    }
    for (auto& [method, values] : pooled) {
        report.summary[method] = summarize(values);
    }
    report.excess_failures =
        report.failures * 10 > cfg.n_datasets;  // strict 10% threshold
    return report;
}

std::vector<ScatterRow> run_diagnostic(const ExperimentConfig& cfg, int index) {
    cfg.validate();
    const DatasetInstance ds = make_dataset(cfg, index);
    const DatasetFit fit = fit_dataset(cfg, ds);

    std::vector<ModuleLabel> labels;
    labels.reserve(fit.module_ids.size());
    const int p = static_cast<int>(fit.module_ids.size());
    labels.resize(p);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (int m = 0; m < p; ++m) {
        labels[m] = classify_module(ds.model, ds.envs.envs, fit.module_ids[m]);
    }
    return diagnostic_scatter(labels, fit.gimp);
}

MethodSummary summarize(std::vector<double> values) {
    MethodSummary s;
    s.n = static_cast<int>(values.size());
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * (values.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - lo;
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    s.median = quantile(0.5);
    s.iqr = quantile(0.75) - quantile(0.25);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= values.size();
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    s.variance = values.size() > 1 ? var / (values.size() - 1) : 0.0;
    return s;
}

void emit_report(const MetricsReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    {
        std::ofstream out(dir / "per_dataset.csv");
        if (!out) throw ConfigError("cannot write " + (dir / "per_dataset.csv").string());
        out << "dataset,method,test_env,mean_rss\n";
        for (const auto& ds : report.datasets) {
            if (!ds.ok) continue;
            for (const auto& [method, rss] : ds.per_env_rss) {
                for (std::size_t e = 0; e < rss.size(); ++e) {
                    out << ds.index << ',' << method << ','
                        << csv_field(ds.test_env_ids[e]) << ','
                        << format_double(rss[e]) << '\n';
                }
            }
        }
    }
    {
        std::ofstream out(dir / "summary.csv");
        if (!out) throw ConfigError("cannot write " + (dir / "summary.csv").string());
        out << "method,median,iqr,variance,n_ok,failures\n";
        for (const auto& [method, s] : report.summary) {
            out << method << ',' << format_double(s.median) << ','
                << format_double(s.iqr) << ',' << format_double(s.variance)
                << ',' << s.n << ',' << report.failures << '\n';
        }
    }
    {
        // Box-plot data, one row per (method, dataset) with the pooled RSS.
        std::ofstream out(dir / "boxplot.csv");
        if (!out) throw ConfigError("cannot write " + (dir / "boxplot.csv").string());
        out << csv_field("method") << ',' << csv_field("dataset") << ','
            << csv_field("pooled test RSS") << '\n';
        for (const auto& ds : report.datasets) {
            if (!ds.ok) continue;
            for (const auto& [method, rss] : ds.pooled_rss) {
                out << method << ',' << ds.index << ',' << format_double(rss)
                    << '\n';
            }
        }
    }
}

}  // namespace invmatch
