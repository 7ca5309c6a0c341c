#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "invmatch/modules.hpp"
#include "invmatch/predict.hpp"
#include "invmatch/scm.hpp"
#include "invmatch/solver.hpp"
#include "invmatch/taxonomy.hpp"

namespace invmatch {

enum class ExperimentKind { Regular, MeasurementError, Nonlinear };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Regular;
    int d = 9;
    int n_per_env = 300;
    int n_train_envs = 5;
    int n_test_envs = 5;
    int n_datasets = 50;  // desk scale; paper scale is 500
    double a_train = 2.0;
    double a_test = 10.0;
    double sigma2 = 2.5;      // measurement-error variance
    double b_exponent = 0.5;  // response transform exponent
    int lambda_grid_size = 30;
    double lambda_eps_ratio = 1e-3;
    int folds = 5;
    std::uint64_t seed = 0;
    std::optional<int> max_r;
    bool module_intercept = true;
    int threads = 0;  // 0 = library default

    void validate() const;
};

struct DatasetOutcome {
    int index = 0;
    bool ok = false;
    std::string error;
    double selected_lambda = 0.0;
    std::vector<std::string> test_env_ids;
    // method -> per-test-environment mean RSS, in test_env_ids order
    std::map<std::string, std::vector<double>> per_env_rss;
    // method -> mean RSS pooled over all test rows
    std::map<std::string, double> pooled_rss;
};

struct MethodSummary {
    double median = 0.0;
    double iqr = 0.0;
    double variance = 0.0;
    int n = 0;
};

struct MetricsReport {
    ExperimentConfig cfg;
    std::vector<DatasetOutcome> datasets;
    int failures = 0;
    bool excess_failures = false;  // > 10% of datasets failed
    std::map<std::string, MethodSummary> summary;  // over pooled RSS
};

// One reproducible dataset of an experiment run.
struct DatasetInstance {
    ScmModel model;
    EnvironmentSet envs;
    DataBundle data;
};

struct DatasetFit {
    std::vector<ModuleId> module_ids;
    GimpModel gimp;
    PooledOls ols;
    double selected_lambda = 0.0;
};

DatasetInstance make_dataset(const ExperimentConfig& cfg, int index);

DatasetFit fit_dataset(const ExperimentConfig& cfg, const DatasetInstance& ds);

MetricsReport run_experiment(const ExperimentConfig& cfg);

// Fig.-1-style table: every module's |theta| joined with its population label.
std::vector<ScatterRow> run_diagnostic(const ExperimentConfig& cfg, int index);

// Writes per_dataset.csv, summary.csv, and boxplot.csv under dir.
void emit_report(const MetricsReport& report, const std::filesystem::path& dir);

MethodSummary summarize(std::vector<double> values);

}  // namespace invmatch
