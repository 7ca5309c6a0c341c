#include "invmatch/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "invmatch/errors.hpp"

namespace invmatch {

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.size();
    if (rows == 0) return {};
    const auto cols = j.at(0).size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(i, c) = j.at(i).at(c).get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

}  // namespace

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(", \t\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

json to_json(const ScmModel& model) {
    json j;
    j["d"] = model.d;
    j["b_matrix"] = matrix_to_json(model.b_matrix);
    j["gamma"] = vector_to_json(model.gamma);
    j["beta"] = vector_to_json(model.beta);
    j["response_parents"] = model.response_parents;
    j["pe_set"] = model.pe_set;
    j["noise_mean"] = vector_to_json(model.noise_mean);
    j["noise_var"] = vector_to_json(model.noise_var);
    j["topo_order"] = model.topo_order;
    return j;
}

ScmModel model_from_json(const json& j) {
    ScmModel m;
    m.d = j.at("d").get<int>();
    m.b_matrix = matrix_from_json(j.at("b_matrix"));
    m.gamma = vector_from_json(j.at("gamma"));
    m.beta = vector_from_json(j.at("beta"));
    m.response_parents = j.at("response_parents").get<std::vector<int>>();
    m.pe_set = j.at("pe_set").get<std::vector<int>>();
    m.noise_mean = vector_from_json(j.at("noise_mean"));
    m.noise_var = vector_from_json(j.at("noise_var"));
    m.topo_order = j.at("topo_order").get<std::vector<int>>();
    m.validate();
    return m;
}

json to_json(const EnvParams& env) {
    json j;
    j["env_id"] = env.env_id;
    j["alpha"] = vector_to_json(env.alpha);
    j["mu"] = env.mu;
    return j;
}

EnvParams env_from_json(const json& j) {
    EnvParams e;
    e.env_id = j.at("env_id").get<std::string>();
    e.alpha = vector_from_json(j.at("alpha"));
    e.mu = j.at("mu").get<double>();
    return e;
}

json to_json(const EnvironmentSet& envs) {
    json j;
    j["pe_set"] = envs.pe_set;
    j["n_train"] = envs.n_train;
    json arr = json::array();
    for (const auto& e : envs.envs) arr.push_back(to_json(e));
    j["envs"] = std::move(arr);
    return j;
}

EnvironmentSet environment_set_from_json(const json& j) {
    EnvironmentSet out;
    out.pe_set = j.at("pe_set").get<std::vector<int>>();
    out.n_train = j.at("n_train").get<int>();
    for (const auto& e : j.at("envs")) out.envs.push_back(env_from_json(e));
    return out;
}

json to_json(const GimpModel& fit, std::size_t p_hint) {
    json j;
    json theta = json::array();
    for (std::size_t i = 0; i < fit.module_ids.size(); ++i) {
        if (fit.theta(i) != 0.0) {
            theta.push_back({{"module", fit.module_ids[i].str()},
                             {"value", fit.theta(i)}});
        }
    }
    j["p"] = p_hint ? p_hint : fit.module_ids.size();
    j["theta"] = std::move(theta);
    j["zeta"] = vector_to_json(fit.zeta.head(fit.zeta.size() - 1));
    j["intercept"] = fit.zeta(fit.zeta.size() - 1);
    j["lambda"] = fit.lambda_used;
    j["module_intercept"] = fit.module_intercept;
    json all_ids = json::array();
    for (const auto& id : fit.module_ids) all_ids.push_back(id.str());
    j["module_ids"] = std::move(all_ids);
    j["diagnostics"] = {{"kkt_residual", fit.diag.kkt_residual},
                        {"objective", fit.diag.objective},
                        {"sweeps", fit.diag.sweeps},
                        {"converged", fit.diag.converged},
                        {"active_count", fit.diag.active_set.size()}};
    return j;
}

GimpModel gimp_from_json(const json& j) {
    GimpModel fit;
    for (const auto& s : j.at("module_ids")) {
        fit.module_ids.push_back(ModuleId::parse(s.get<std::string>()));
    }
    fit.theta = Eigen::VectorXd::Zero(fit.module_ids.size());
    for (const auto& entry : j.at("theta")) {
        const ModuleId id = ModuleId::parse(entry.at("module").get<std::string>());
        bool found = false;
        for (std::size_t i = 0; i < fit.module_ids.size(); ++i) {
            if (fit.module_ids[i] == id) {
                fit.theta(i) = entry.at("value").get<double>();
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("theta entry for unknown module " + id.str());
    }
    const Eigen::VectorXd zeta_head = vector_from_json(j.at("zeta"));
    fit.zeta.resize(zeta_head.size() + 1);
    fit.zeta.head(zeta_head.size()) = zeta_head;
    fit.zeta(zeta_head.size()) = j.at("intercept").get<double>();
    fit.lambda_used = j.at("lambda").get<double>();
    fit.module_intercept = j.value("module_intercept", true);
    if (j.contains("diagnostics")) {
        const auto& d = j.at("diagnostics");
        fit.diag.kkt_residual = d.value("kkt_residual", 0.0);
        fit.diag.objective = d.value("objective", 0.0);
        fit.diag.sweeps = d.value("sweeps", 0);
        fit.diag.converged = d.value("converged", true);
    }
    for (Eigen::Index i = 0; i < fit.theta.size(); ++i) {
        if (fit.theta(i) != 0.0) fit.diag.active_set.push_back(int(i));
    }
    return fit;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

void write_dataset_csv(const std::filesystem::path& path, const DataBundle& data) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    int d = 0;
    if (!data.train.empty()) d = static_cast<int>(data.train.front().x.cols());
    else if (!data.test.empty()) d = static_cast<int>(data.test.front().x.cols());
    out << "env,role";
    for (int j = 0; j < d; ++j) out << ",x" << (j + 1);
    out << ",y\n";
    auto dump = [&](const EnvData& e, const char* role) {
        for (Eigen::Index i = 0; i < e.x.rows(); ++i) {
            out << csv_field(e.env_id) << ',' << role;
            for (Eigen::Index j = 0; j < e.x.cols(); ++j) {
                out << ',' << format_double(e.x(i, j));
            }
            out << ',' << format_double(e.y(i)) << '\n';
        }
    };
    for (const auto& e : data.train) dump(e, "train");
    for (const auto& e : data.test) dump(e, "test");
}

DataBundle read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty dataset " + path.string());
    int cols = 1;
    for (char c : line) cols += (c == ',');
    const int d = cols - 3;
    if (d < 1) throw ConfigError("dataset header needs env,role,x...,y");

    struct Block {
        std::string id;
        bool test = false;
        std::vector<std::vector<double>> rows;
    };
    std::vector<Block> blocks;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string env, role, tok;
        if (!std::getline(ls, env, ',') || !std::getline(ls, role, ',')) {
            throw ConfigError("malformed dataset row: " + line);
        }
        std::vector<double> vals;
        while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
        if (static_cast<int>(vals.size()) != d + 1) {
            throw ConfigError("dataset row has wrong field count: " + line);
        }
        const bool is_test = (role == "test");
        if (!is_test && role != "train") {
            throw ConfigError("unknown role '" + role + "' in dataset");
        }
        Block* blk = nullptr;
        for (auto& b : blocks) {
            if (b.id == env && b.test == is_test) blk = &b;
        }
        if (!blk) {
            blocks.push_back({env, is_test, {}});
            blk = &blocks.back();
        }
        blk->rows.push_back(std::move(vals));
    }

    DataBundle out;
    for (auto& b : blocks) {
        EnvData e;
        e.env_id = b.id;
        e.x.resize(b.rows.size(), d);
        e.y.resize(b.rows.size());
        for (std::size_t i = 0; i < b.rows.size(); ++i) {
            for (int j = 0; j < d; ++j) e.x(i, j) = b.rows[i][j];
            e.y(i) = b.rows[i][d];
        }
        (b.test ? out.test : out.train).push_back(std::move(e));
    }
    out.validate(d);
    return out;
}

void write_labels_csv(const std::filesystem::path& path,
                      const std::vector<ModuleLabel>& labels,
                      const GimpModel* fit) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << "module,label,variation,residual";
    if (fit) out << ",theta_abs";
    out << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& l = labels[i];
        out << csv_field(l.module.str()) << ',' << to_string(l.kind) << ','
            << format_double(l.variation) << ',' << format_double(l.residual);
        if (fit) out << ',' << format_double(std::abs(fit->theta(i)));
        out << '\n';
    }
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::string& env_id,
                           const Eigen::VectorXd& y_hat,
                           const Eigen::VectorXd* y_true) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << "env,row,y_hat" << (y_true ? ",y_true" : "") << '\n';
    for (Eigen::Index i = 0; i < y_hat.size(); ++i) {
        out << csv_field(env_id) << ',' << i << ',' << format_double(y_hat(i));
        if (y_true) out << ',' << format_double((*y_true)(i));
        out << '\n';
    }
}

void write_scatter_csv(const std::filesystem::path& path,
                       const std::vector<ScatterRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << "module,theta_abs,label\n";
    for (const auto& r : rows) {
        out << csv_field(r.module.str()) << ',' << format_double(r.theta_abs)
            << ',' << to_string(r.kind) << '\n';
    }
}

}  // namespace invmatch
