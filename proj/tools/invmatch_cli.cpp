// Command-line front end: simulate, fit, classify, predict, experiment,
// diagnostic. Exit codes: 0 success, 2 configuration error, 3 numeric
// failure threshold exceeded.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "invmatch/errors.hpp"
#include "invmatch/harness.hpp"
#include "invmatch/io.hpp"

namespace fs = std::filesystem;
using namespace invmatch;

namespace {

struct ConfigFlags {
    std::string kind = "regular";
    ExperimentConfig cfg;
    std::string config_path;

    void attach(CLI::App* app, bool seed_required) {
        app->add_option("--config", config_path, "experiment config JSON file");
        app->add_option("--kind", kind,
                        "regular | measurement_error | nonlinear");
        app->add_option("-d,--dim", cfg.d, "predictor count");
        app->add_option("--n-per-env", cfg.n_per_env, "rows per environment");
        app->add_option("--train-envs", cfg.n_train_envs);
        app->add_option("--test-envs", cfg.n_test_envs);
        app->add_option("--datasets", cfg.n_datasets);
        app->add_option("--a-train", cfg.a_train);
        app->add_option("--a-test", cfg.a_test);
        app->add_option("--sigma2", cfg.sigma2, "measurement-error variance");
        app->add_option("--b-exponent", cfg.b_exponent);
        app->add_option("--grid-size", cfg.lambda_grid_size);
        app->add_option("--eps-ratio", cfg.lambda_eps_ratio);
        app->add_option("--folds", cfg.folds);
        auto* seed = app->add_option("--seed", cfg.seed, "master seed");
        if (seed_required) seed->required();
        app->add_option("--max-r", max_r_, "cap on |R| per module");
        app->add_option("--threads", cfg.threads, "worker count (0 = default)");
        app->add_flag("--no-module-intercept", no_intercept_,
                      "intercept-free per-environment module fits");
    }

    ExperimentConfig resolve() {
        if (!config_path.empty()) {
            const json j = read_json(config_path);
            if (j.contains("kind")) kind = j.at("kind").get<std::string>();
            if (j.contains("experiment")) kind = j.at("experiment").get<std::string>();
            cfg.d = j.value("d", cfg.d);
            cfg.n_per_env = j.value("n_per_env", cfg.n_per_env);
            cfg.n_train_envs = j.value("n_train_envs", cfg.n_train_envs);
            cfg.n_test_envs = j.value("n_test_envs", cfg.n_test_envs);
            cfg.n_datasets = j.value("n_datasets", cfg.n_datasets);
            cfg.a_train = j.value("a_train", cfg.a_train);
            cfg.a_test = j.value("a_test", cfg.a_test);
            cfg.sigma2 = j.value("sigma2", cfg.sigma2);
            cfg.b_exponent = j.value("b_exponent", cfg.b_exponent);
            cfg.lambda_grid_size = j.value("lambda_grid_size", cfg.lambda_grid_size);
            cfg.lambda_eps_ratio = j.value("lambda_eps_ratio", cfg.lambda_eps_ratio);
            cfg.folds = j.value("folds", cfg.folds);
            cfg.seed = j.value("seed", cfg.seed);
            cfg.threads = j.value("threads", cfg.threads);
            if (j.contains("max_r")) max_r_ = j.at("max_r").get<int>();
            if (j.contains("module_intercept")) {
                no_intercept_ = !j.at("module_intercept").get<bool>();
            }
        }
        cfg.kind = experiment_kind_from_string(kind);
        if (max_r_ > 0) cfg.max_r = max_r_;
        cfg.module_intercept = !no_intercept_;
        cfg.validate();
        return cfg;
    }

  private:
    int max_r_ = 0;
    bool no_intercept_ = false;
};

int cmd_simulate(ConfigFlags& flags, int index, const std::string& out_dir) {
    const ExperimentConfig cfg = flags.resolve();
    const DatasetInstance ds = make_dataset(cfg, index);
    fs::create_directories(out_dir);
    write_json(fs::path(out_dir) / "model.json", to_json(ds.model));
    write_json(fs::path(out_dir) / "envs.json", to_json(ds.envs));
    write_dataset_csv(fs::path(out_dir) / "dataset.csv", ds.data);
    std::cout << "wrote model.json, envs.json, dataset.csv to " << out_dir
              << "\n";
    return 0;
}

int cmd_fit(const std::string& data_path, const std::string& out_path,
            int folds, int grid_size, double eps_ratio, int max_r,
            bool no_intercept, double fixed_lambda) {
    const DataBundle data = read_dataset_csv(data_path);
    const int d = static_cast<int>(data.train.front().x.cols());
    std::optional<int> cap;
    if (max_r > 0) cap = max_r;
    if (d > 10 && !cap) throw ConfigError("d > 10 requires --max-r");
    const std::vector<ModuleId> ids = enumerate_modules(d, cap);
    const ModuleDesign design = build_train_design(data, ids, !no_intercept);

    int n = 0;
    for (const auto& env : data.train) n += static_cast<int>(env.x.rows());
    Eigen::VectorXd y(n);
    Eigen::MatrixXd x(n, d);
    int row = 0;
    for (const auto& env : data.train) {
        const int ne = static_cast<int>(env.x.rows());
        y.segment(row, ne) = env.y;
        x.block(row, 0, ne, d) = env.x;
        row += ne;
    }
    PartialLassoProblem problem = PartialLassoProblem::make(y, design.z_hat, x, 1.0);
    if (fixed_lambda >= 0.0) {
        problem.lambda = fixed_lambda;
    } else {
        const Projection proj = project_out(problem);
        const auto grid = make_lambda_grid(lambda_max(proj), grid_size, eps_ratio);
        const CvResult cv = cross_validate(y, design.z_hat, problem.x_aug,
                                           design.env_blocks, folds, grid);
        problem.lambda = cv.selected_lambda;
    }
    GimpModel fit = solve_partial_lasso(problem, ids);
    fit.module_intercept = !no_intercept;
    write_json(out_path, to_json(fit));
    std::cout << "lambda " << fit.lambda_used << ", "
              << fit.diag.active_set.size() << " active modules -> "
              << out_path << "\n";
    return 0;
}

int cmd_classify(const std::string& model_path, const std::string& envs_path,
                 const std::string& fit_path, const std::string& out_path,
                 int max_r, double tol) {
    const ScmModel model = model_from_json(read_json(model_path));
    const EnvironmentSet envs = environment_set_from_json(read_json(envs_path));
    ScmModel m = model;
    m.pe_set = envs.pe_set;

    std::optional<int> cap;
    if (max_r > 0) cap = max_r;
    std::optional<GimpModel> fit;
    std::vector<ModuleId> ids;
    if (!fit_path.empty()) {
        fit = gimp_from_json(read_json(fit_path));
        ids = fit->module_ids;
    } else {
        if (m.d > 10 && !cap) throw ConfigError("d > 10 requires --max-r");
        ids = enumerate_modules(m.d, cap);
    }
    std::vector<ModuleLabel> labels(ids.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (int i = 0; i < static_cast<int>(ids.size()); ++i) {
        labels[i] = classify_module(m, envs.envs, ids[i], tol);
    }
    write_labels_csv(out_path, labels, fit ? &*fit : nullptr);
    std::cout << "labeled " << labels.size() << " modules -> " << out_path << "\n";
    return 0;
}

int cmd_predict(const std::string& fit_path, const std::string& data_path,
                const std::string& out_path) {
    const GimpModel fit = gimp_from_json(read_json(fit_path));
    const DataBundle data = read_dataset_csv(data_path);
    const auto& blocks = data.test.empty() ? data.train : data.test;

    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot open " + out_path + " for writing");
    out << "env,row,y_hat,y_true\n";
    for (const auto& env : blocks) {
        const Eigen::VectorXd y_hat = predict_gimp(fit, env.x);
        std::cout << env.env_id << ": rss " << score(y_hat, env.y) << "\n";
        for (Eigen::Index i = 0; i < y_hat.size(); ++i) {
            out << csv_field(env.env_id) << ',' << i << ','
                << format_double(y_hat(i)) << ',' << format_double(env.y(i))
                << '\n';
        }
    }
    return 0;
}

int cmd_experiment(ConfigFlags& flags, const std::string& out_dir) {
    const ExperimentConfig cfg = flags.resolve();
    const MetricsReport report = run_experiment(cfg);
    emit_report(report, out_dir);
    for (const auto& [method, s] : report.summary) {
        std::cout << method << ": median " << s.median << ", iqr " << s.iqr
                  << ", variance " << s.variance << " (n=" << s.n << ")\n";
    }
    if (report.failures > 0) {
        std::cout << report.failures << " of " << cfg.n_datasets
                  << " datasets failed\n";
    }
    return report.excess_failures ? 3 : 0;
}

int cmd_diagnostic(ConfigFlags& flags, int index, const std::string& out_path) {
    const ExperimentConfig cfg = flags.resolve();
    const auto rows = run_diagnostic(cfg, index);
    write_scatter_csv(out_path, rows);
    std::cout << "wrote " << rows.size() << " module rows -> " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"invariant-matching Lasso over multi-environment linear SCMs"};
    app.require_subcommand(1);

    ConfigFlags sim_flags, exp_flags, diag_flags;
    int sim_index = 0, diag_index = 0;
    std::string sim_out = "out", exp_out = "out", diag_out = "diagnostic.csv";

    auto* sim = app.add_subcommand("simulate", "emit one dataset to CSV");
    sim_flags.attach(sim, true);
    sim->add_option("--index", sim_index, "dataset index within the experiment");
    sim->add_option("--out", sim_out, "output directory");

    std::string fit_data, fit_out = "fit.json";
    int fit_folds = 5, fit_grid = 30, fit_max_r = 0;
    double fit_eps = 1e-3, fit_lambda = -1.0;
    bool fit_no_intercept = false;
    auto* fit = app.add_subcommand("fit", "dataset CSV -> fitted model JSON");
    fit->add_option("--data", fit_data)->required();
    fit->add_option("--out", fit_out);
    fit->add_option("--folds", fit_folds);
    fit->add_option("--grid-size", fit_grid);
    fit->add_option("--eps-ratio", fit_eps);
    fit->add_option("--max-r", fit_max_r);
    fit->add_option("--lambda", fit_lambda, "skip CV, use this penalty");
    fit->add_flag("--no-module-intercept", fit_no_intercept);

    std::string cl_model, cl_envs, cl_fit, cl_out = "labels.csv";
    int cl_max_r = 0;
    double cl_tol = 1e-6;
    auto* classify = app.add_subcommand("classify",
                                        "model + envs -> module label CSV");
    classify->add_option("--model", cl_model)->required();
    classify->add_option("--envs", cl_envs)->required();
    classify->add_option("--fit", cl_fit, "join |theta| from this fit");
    classify->add_option("--out", cl_out);
    classify->add_option("--max-r", cl_max_r);
    classify->add_option("--tol", cl_tol);

    std::string pr_fit, pr_data, pr_out = "predictions.csv";
    auto* predict = app.add_subcommand("predict",
                                       "fit + dataset CSV -> predictions CSV");
    predict->add_option("--fit", pr_fit)->required();
    predict->add_option("--data", pr_data)->required();
    predict->add_option("--out", pr_out);

    auto* experiment = app.add_subcommand("experiment", "config -> report CSVs");
    exp_flags.attach(experiment, true);
    experiment->add_option("--out", exp_out, "report directory");

    auto* diagnostic = app.add_subcommand("diagnostic",
                                          "config + index -> selection table");
    diag_flags.attach(diagnostic, true);
    diagnostic->add_option("--index", diag_index);
    diagnostic->add_option("--out", diag_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim_flags, sim_index, sim_out);
        if (fit->parsed()) {
            return cmd_fit(fit_data, fit_out, fit_folds, fit_grid, fit_eps,
                           fit_max_r, fit_no_intercept, fit_lambda);
        }
        if (classify->parsed()) {
            return cmd_classify(cl_model, cl_envs, cl_fit, cl_out, cl_max_r,
                                cl_tol);
        }
        if (predict->parsed()) return cmd_predict(pr_fit, pr_data, pr_out);
        if (experiment->parsed()) return cmd_experiment(exp_flags, exp_out);
        if (diagnostic->parsed()) {
            return cmd_diagnostic(diag_flags, diag_index, diag_out);
        }
    } catch (const ConfigError& ex) {
        std::cerr << "configuration error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
