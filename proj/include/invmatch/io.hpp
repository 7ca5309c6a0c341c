#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "invmatch/scm.hpp"
#include "invmatch/solver.hpp"
#include "invmatch/taxonomy.hpp"

namespace invmatch {

using json = nlohmann::ordered_json;

json to_json(const ScmModel& model);
ScmModel model_from_json(const json& j);

json to_json(const EnvParams& env);
EnvParams env_from_json(const json& j);

json to_json(const EnvironmentSet& envs);
EnvironmentSet environment_set_from_json(const json& j);

// Sparse theta as (module id, value) pairs, dense zeta, diagnostics.
json to_json(const GimpModel& fit, std::size_t p_hint = 0);
GimpModel gimp_from_json(const json& j);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

// Dataset CSV: env,role,x1..xd,y with role in {train,test}.
void write_dataset_csv(const std::filesystem::path& path, const DataBundle& data);
DataBundle read_dataset_csv(const std::filesystem::path& path);

void write_labels_csv(const std::filesystem::path& path,
                      const std::vector<ModuleLabel>& labels,
                      const GimpModel* fit = nullptr);

void write_predictions_csv(const std::filesystem::path& path,
                           const std::string& env_id,
                           const Eigen::VectorXd& y_hat,
                           const Eigen::VectorXd* y_true = nullptr);

void write_scatter_csv(const std::filesystem::path& path,
                       const std::vector<ScatterRow>& rows);

// Quotes fields containing separators or whitespace (gnuplot-safe headers).
std::string csv_field(const std::string& s);
std::string format_double(double v);

}  // namespace invmatch
