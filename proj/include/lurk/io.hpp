#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lurk/common.hpp"
#include "lurk/effects.hpp"
#include "lurk/estimator.hpp"
#include "lurk/simgen.hpp"

namespace lurk::io {

using nlohmann::json;

// %.17g round-trips IEEE doubles exactly; every file we emit goes through it
// so identical fits produce identical bytes.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// data.csv: header x1..xp,t,y; '.' decimal separator; no missing cells.
// ---------------------------------------------------------------------------

struct DataTable {
    Matrix X;  // raw units
    Vector t;
    Vector y;
};

inline std::string to_data_csv(const DataTable& table) {
    std::ostringstream out;
    for (Index k = 0; k < table.X.cols(); ++k) out << "x" << (k + 1) << ",";
    out << "t,y\n";
    for (Index i = 0; i < table.y.size(); ++i) {
        for (Index k = 0; k < table.X.cols(); ++k) out << fmt(table.X(i, k)) << ",";
        out << fmt(table.t[i]) << "," << fmt(table.y[i]) << "\n";
    }
    return out.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline DataTable parse_data_csv(const std::string& text, const std::string& origin = "data") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(origin + ": empty file");
    const std::vector<std::string> header = split_csv_line(line);
    require(header.size() >= 2, origin + ": need at least columns t,y");
    const Index p = static_cast<Index>(header.size()) - 2;
    for (Index k = 0; k < p; ++k) {
        const std::string want = "x" + std::to_string(k + 1);
        if (header[k] != want)
            throw std::runtime_error(origin + ": header column " + std::to_string(k + 1) +
                                     " must be '" + want + "', got '" + header[k] + "'");
    }
    if (header[p] != "t" || header[p + 1] != "y")
        throw std::runtime_error(origin + ": last two header columns must be 't,y'");

    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(origin + ": row " + std::to_string(lineno) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(header.size()));
        std::vector<double> vals(cells.size());
        for (size_t c = 0; c < cells.size(); ++c) {
            if (cells[c].empty())
                throw std::runtime_error(origin + ": missing cell at row " +
                                         std::to_string(lineno) + ", column " + header[c]);
            size_t pos = 0;
            try {
                vals[c] = std::stod(cells[c], &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != cells[c].size())
                throw std::runtime_error(origin + ": cannot parse '" + cells[c] +
                                         "' at row " + std::to_string(lineno) + ", column " +
                                         header[c]);
        }
        rows.push_back(std::move(vals));
    }
    require(!rows.empty(), origin + ": no data rows");

    DataTable table;
    const Index n = static_cast<Index>(rows.size());
    table.X.resize(n, p);
    table.t.resize(n);
    table.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < p; ++k) table.X(i, k) = rows[i][k];
        table.t[i] = rows[i][p];
        table.y[i] = rows[i][p + 1];
    }
    return table;
}

inline DataTable raw_table(const Dataset& data) {
    DataTable table;
    table.X.resize(data.n(), data.p());
    table.t.resize(data.n());
    table.y = data.y();
    for (Index i = 0; i < data.n(); ++i) {
        for (Index k = 0; k < data.p(); ++k) table.X(i, k) = data.raw_x(k, data.X()(i, k));
        table.t[i] = data.raw_t(data.t()[i]);
    }
    return table;
}

// ---------------------------------------------------------------------------
// FitConfig: flat key=value file, '#' comments. Flags override the file.
// ---------------------------------------------------------------------------

inline FitConfig parse_config(const std::string& text, const std::string& origin = "config") {
    FitConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ": line " + std::to_string(lineno) +
                                     " is not key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "tol") cfg.tol = std::stod(val);
            else if (key == "max_outer") cfg.max_outer = std::stoi(val);
            else if (key == "k_folds") cfg.k_folds = std::stoi(val);
            else if (key == "lambda_grid_size") cfg.lambda_grid_size = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "theta_min") cfg.theta_min = std::stod(val);
            else if (key == "theta_max") cfg.theta_max = std::stod(val);
            else if (key == "eta_min") cfg.eta_min = std::stod(val);
            else if (key == "eta_max") cfg.eta_max = std::stod(val);
            else if (key == "optimizer_restarts") cfg.optimizer_restarts = std::stoi(val);
            else if (key == "one_se_rule") cfg.one_se_rule = (val == "1" || val == "true" || val == "on");
            else if (key == "likelihood_constant") cfg.likelihood_constant = std::stoi(val);
            else if (key == "disable_shocks") cfg.disable_shocks = (val == "1" || val == "true" || val == "on");
            else if (key == "nm_max_evals_per_dim") cfg.nm_max_evals_per_dim = std::stoi(val);
            else throw std::runtime_error(origin + ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw std::runtime_error(origin + ": bad value for '" + key + "' at line " +
                                     std::to_string(lineno));
        }
    }
    return cfg;
}

inline json config_to_json(const FitConfig& c) {
    return json{{"tol", c.tol},
                {"max_outer", c.max_outer},
                {"k_folds", c.k_folds},
                {"lambda_grid_size", c.lambda_grid_size},
                {"seed", c.seed},
                {"theta_min", c.theta_min},
                {"theta_max", c.theta_max},
                {"eta_min", c.eta_min},
                {"eta_max", c.eta_max},
                {"optimizer_restarts", c.optimizer_restarts},
                {"one_se_rule", c.one_se_rule},
                {"likelihood_constant", c.likelihood_constant},
                {"disable_shocks", c.disable_shocks},
                {"nm_max_evals_per_dim", c.nm_max_evals_per_dim}};
}

inline FitConfig config_from_json(const json& j) {
    FitConfig c;
    c.tol = j.at("tol");
    c.max_outer = j.at("max_outer");
    c.k_folds = j.at("k_folds");
    c.lambda_grid_size = j.at("lambda_grid_size");
    c.seed = j.at("seed");
    c.theta_min = j.at("theta_min");
    c.theta_max = j.at("theta_max");
    c.eta_min = j.at("eta_min");
    c.eta_max = j.at("eta_max");
    c.optimizer_restarts = j.at("optimizer_restarts");
    c.one_se_rule = j.at("one_se_rule");
    c.likelihood_constant = j.at("likelihood_constant");
    c.disable_shocks = j.at("disable_shocks");
    c.nm_max_evals_per_dim = j.at("nm_max_evals_per_dim");
    return c;
}

// ---------------------------------------------------------------------------
// fit.json: everything needed to rebuild the predictor next to the data file.
// ---------------------------------------------------------------------------

inline json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline Vector vector_from_json(const json& arr) {
    Vector v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) v[static_cast<Index>(i)] = arr[i];
    return v;
}

inline json fit_to_json(const FitResult& fit) {
    const Hyperparameters& h = fit.hyper;
    json doc;
    doc["schema"] = "lurk.fit/1";
    doc["n"] = fit.data.n();
    doc["p"] = fit.data.p();
    doc["converged"] = fit.converged;
    doc["iterations"] = fit.iterations;
    doc["hyperparameters"] = {
        {"mu", h.mu},
        {"tau2", h.tau2},
        {"nu", std::isfinite(h.nu) ? json(h.nu) : json(nullptr)},
        {"sigma2", h.sigma2},
        {"eta", h.eta},
        {"lambda", h.lambda},
        {"theta_x", vector_to_json(h.theta.theta_x)},
        {"theta_t", h.theta.theta_t}};
    doc["coefficients"] = {{"mu", fit.coeffs.mu}, {"e_tail", vector_to_json(fit.coeffs.e_tail)}};
    doc["lambda_path"] = {{"lambda_hat", h.lambda},
                          {"lambda_max", fit.cv_curve.lambda_max},
                          {"grid", vector_to_json(fit.cv_curve.lambda)},
                          {"cv_mean_error", vector_to_json(fit.cv_curve.mean_err)},
                          {"cv_se", vector_to_json(fit.cv_curve.se)}};
    doc["trace"] = fit.trace;
    doc["scaling"] = {{"x_min", vector_to_json(fit.data.x_min())},
                      {"x_range", vector_to_json(fit.data.x_range())},
                      {"t_min", fit.data.t_min()},
                      {"t_range", fit.data.t_range()}};
    doc["config"] = config_to_json(fit.config);
    return doc;
}

// Rebuilds a full FitResult from fit.json plus the original data file. The
// factorization and alpha are recomputed, which is deterministic, so derived
// effect files reproduce bitwise.
inline FitResult fit_from_json(const json& doc, const Dataset& data) {
    require(doc.at("schema") == "lurk.fit/1", "fit.json: unsupported schema");
    require(doc.at("n").get<Index>() == data.n(), "fit.json: n does not match data file");
    require(doc.at("p").get<Index>() == data.p(), "fit.json: p does not match data file");

    FitResult fit;
    fit.data = data;
    fit.config = config_from_json(doc.at("config"));
    fit.converged = doc.at("converged");
    fit.iterations = doc.at("iterations");
    fit.trace = doc.at("trace").get<std::vector<double>>();

    const json& h = doc.at("hyperparameters");
    fit.hyper.mu = h.at("mu");
    fit.hyper.tau2 = h.at("tau2");
    fit.hyper.nu = h.at("nu").is_null() ? std::numeric_limits<double>::infinity()
                                        : h.at("nu").get<double>();
    fit.hyper.sigma2 = h.at("sigma2");
    fit.hyper.eta = h.at("eta");
    fit.hyper.lambda = h.at("lambda");
    fit.hyper.theta.theta_x = vector_from_json(h.at("theta_x"));
    fit.hyper.theta.theta_t = h.at("theta_t");

    fit.coeffs.mu = doc.at("coefficients").at("mu");
    fit.coeffs.e_tail = vector_from_json(doc.at("coefficients").at("e_tail"));
    require(fit.coeffs.n() == data.n(), "fit.json: coefficient count does not match data");

    const json& path = doc.at("lambda_path");
    fit.cv_curve.lambda_max = path.at("lambda_max");
    fit.cv_curve.lambda = vector_from_json(path.at("grid"));
    fit.cv_curve.mean_err = vector_from_json(path.at("cv_mean_error"));
    fit.cv_curve.se = vector_from_json(path.at("cv_se"));

    auto [delta, predictor] = rebuild_predictor(data, fit.hyper, fit.coeffs);
    fit.delta = std::move(delta);
    fit.predictor = std::move(predictor);
    return fit;
}

// ---------------------------------------------------------------------------
// Effect and benchmark tables.
// ---------------------------------------------------------------------------

inline std::string to_sudden_csv(const FitResult& fit) {
    const Dataset& data = fit.data;
    std::ostringstream out;
    out << "t,delta,jump\n";
    for (Index rank = 0; rank < data.n(); ++rank) {
        const double t_raw = data.raw_t(data.t()[data.time_order()[rank]]);
        const double jump = rank == 0 ? 0.0 : fit.coeffs.e_tail[rank - 1];
        out << fmt(t_raw) << "," << fmt(fit.delta[rank]) << "," << fmt(jump) << "\n";
    }
    return out.str();
}

inline std::string to_gradual_csv(const FitResult& fit, Index grid_size = 200) {
    const Vector t_grid = Vector::LinSpaced(grid_size, 0.0, 1.0);
    const Vector g = gradual_effect(fit, t_grid);
    std::ostringstream out;
    out << "t,g\n";
    for (Index j = 0; j < t_grid.size(); ++j)
        out << fmt(fit.data.raw_t(t_grid[j])) << "," << fmt(g[j]) << "\n";
    return out.str();
}

// p = 1: slice over x at a fixed scaled time. p = 0: curve over t. p >= 2:
// one block per input dimension, other inputs held at 0.5.
inline std::string to_prediction_csv(const FitResult& fit, double t_fixed = 0.5,
                                     Index grid_size = 200) {
    const Index p = fit.data.p();
    std::ostringstream out;
    if (p == 0) {
        out << "t,mean,sd\n";
        const Vector t_grid = Vector::LinSpaced(grid_size, 0.0, 1.0);
        Vector q(1);
        for (Index j = 0; j < grid_size; ++j) {
            q[0] = t_grid[j];
            out << fmt(fit.data.raw_t(t_grid[j])) << "," << fmt(predict_mean(fit.predictor, q))
                << "," << fmt(std::sqrt(predict_var(fit.predictor, q))) << "\n";
        }
        return out.str();
    }
    if (p == 1) {
        out << "x,mean,sd\n";
        Matrix grid(grid_size, 1);
        grid.col(0) = Vector::LinSpaced(grid_size, 0.0, 1.0);
        const PredictionCurve curve = prediction_curve(fit, grid, t_fixed);
        for (Index j = 0; j < grid_size; ++j)
            out << fmt(fit.data.raw_x(0, grid(j, 0))) << "," << fmt(curve.mean[j]) << ","
                << fmt(curve.sd[j]) << "\n";
        return out.str();
    }
    out << "dim,x,mean,sd\n";
    for (Index k = 0; k < p; ++k) {
        Matrix grid = Matrix::Constant(grid_size, p, 0.5);
        grid.col(k) = Vector::LinSpaced(grid_size, 0.0, 1.0);
        const PredictionCurve curve = prediction_curve(fit, grid, t_fixed);
        for (Index j = 0; j < grid_size; ++j)
            out << (k + 1) << "," << fmt(fit.data.raw_x(k, grid(j, k))) << ","
                << fmt(curve.mean[j]) << "," << fmt(curve.sd[j]) << "\n";
    }
    return out.str();
}

inline std::string to_mse_csv(const BenchmarkTable& table) {
    std::ostringstream out;
    out << "suite,config,repeat,seed,status,mse_sudden,mse_gradual,mse_prediction,seconds\n";
    const std::string suite =
        table.suite == BenchmarkSuite::replication ? "replication" : "randomization";
    for (const auto& r : table.rows) {
        out << suite << "," << r.config << "," << r.repeat << "," << r.seed << ","
            << (r.ok ? "ok" : "failed") << ",";
        const auto cell = [&](double v) { return r.ok && std::isfinite(v) ? fmt(v) : std::string(); };
        out << cell(r.mse_sudden) << "," << cell(r.mse_gradual) << "," << cell(r.mse_prediction)
            << "," << fmt(r.seconds) << "\n";
    }
    return out.str();
}

inline json truth_to_json(const GroundTruth& truth) {
    json doc;
    doc["suite"] = truth.suite;
    doc["f_grid_x"] = vector_to_json(truth.f_grid_x);
    doc["f_grid_value"] = vector_to_json(truth.f_grid_value);
    if (truth.suite == "toy") {
        doc["trend_slope"] = truth.trend_slope;
        doc["shocks"] = vector_to_json(truth.shocks);
        doc["delta"] = vector_to_json(truth.delta);
        doc["shock_positions"] = truth.shock_positions;
    } else {
        doc["tune_up_shots"] = truth.tune_up_shots;
        doc["intended_energy"] = vector_to_json(truth.intended_energy);
        doc["true_energy"] = vector_to_json(truth.true_energy);
    }
    return doc;
}

// Full ResultBundle next to the data it came from.
inline void write_result_bundle(const std::filesystem::path& dir, const FitResult& fit,
                                double pred_t_fixed = 0.5) {
    std::filesystem::create_directories(dir);
    write_text(dir / "fit.json", fit_to_json(fit).dump(2) + "\n");
    write_text(dir / "sudden.csv", to_sudden_csv(fit));
    write_text(dir / "gradual.csv", to_gradual_csv(fit));
    write_text(dir / "prediction.csv", to_prediction_csv(fit, pred_t_fixed));
}

}  // namespace lurk::io
