#ifndef KOOPMAN_IO_HPP
#define KOOPMAN_IO_HPP

// Files, experiment configuration and the make-dataset -> train -> eval pipeline.

#include "koopman/dyn_systems.hpp"
#include "koopman/errors.hpp"
#include "koopman/evaluation.hpp"
#include "koopman/models.hpp"
#include "koopman/simulate.hpp"
#include "koopman/training.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace koopman {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Plain text helpers

inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw parse_error(where, "'" + std::string(s) + "' is not a number");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline nlohmann::json read_json_file(const fs::path& path)
{
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(path.string(), e.what());
    }
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

/// 64-bit FNV-1a of a string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Trajectory CSV:  k, u_1..u_nu, x_1..x_nx   (raw units)

struct Trajectory {
    MatrixXd inputs; // N x n_u
    MatrixXd states; // N x n_x
};

/// Writes one row per state sample. When `states` has one row more than `inputs`
/// (an integrated trajectory), the final row repeats the last held input.
inline std::string trajectory_csv(const MatrixXd& inputs, const MatrixXd& states)
{
    if (states.rows() != inputs.rows() && states.rows() != inputs.rows() + 1)
        throw dimension_error("trajectory needs as many input rows as states (or one fewer)");
    if (inputs.rows() == 0 && states.rows() > 0 && inputs.cols() == 0)
        throw dimension_error("trajectory without input columns");
    std::string out = "k";
    for (Index i = 0; i < inputs.cols(); ++i) out += ",u_" + std::to_string(i + 1);
    for (Index j = 0; j < states.cols(); ++j) out += ",x_" + std::to_string(j + 1);
    out += '\n';
    for (Index k = 0; k < states.rows(); ++k) {
        out += std::to_string(k);
        const Index urow = std::min<Index>(k, inputs.rows() - 1);
        for (Index i = 0; i < inputs.cols(); ++i) out += "," + format_double(inputs(urow, i));
        for (Index j = 0; j < states.cols(); ++j) out += "," + format_double(states(k, j));
        out += '\n';
    }
    return out;
}

inline Trajectory parse_trajectory_csv(const std::string& text, const std::string& name = "csv")
{
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line)) throw parse_error(name, "empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "k") throw parse_error(name + ":1", "header must start with 'k'");
    Index n_u = 0, n_x = 0;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c] == "u_" + std::to_string(n_u + 1) && n_x == 0)
            ++n_u;
        else if (header[c] == "x_" + std::to_string(n_x + 1))
            ++n_x;
        else
            throw parse_error(name + ":1", "unexpected column '" + header[c] + "'");
    }
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(ss, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::string where = name + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) throw parse_error(where, "wrong number of columns");
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_double(cells[c], where));
        rows.push_back(std::move(row));
    }
    Trajectory t;
    t.inputs.resize(static_cast<Index>(rows.size()), n_u);
    t.states.resize(static_cast<Index>(rows.size()), n_x);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (Index i = 0; i < n_u; ++i) t.inputs(static_cast<Index>(k), i) = rows[k][static_cast<std::size_t>(i)];
        for (Index j = 0; j < n_x; ++j) t.states(static_cast<Index>(k), j) = rows[k][static_cast<std::size_t>(n_u + j)];
    }
    return t;
}

inline Trajectory read_trajectory_csv(const fs::path& path)
{
    return parse_trajectory_csv(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Dataset files: <name>.csv + <name>.json sidecar

struct DatasetMeta {
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    std::string config_hash;
};

inline nlohmann::json dataset_sidecar(const SnapshotDataset& ds, const DatasetMeta& meta)
{
    nlohmann::json j;
    j["dt"] = ds.dt;
    j["n_samples"] = ds.n_samples();
    j["n_x"] = ds.states.cols();
    j["n_u"] = ds.inputs.cols();
    j["scaler"] = detail::scaler_to_json(ds.scaler);
    if (ds.input_scaler) j["input_scaler"] = detail::scaler_to_json(*ds.input_scaler);
    j["transforms"] = nlohmann::json::array();
    for (auto t : ds.transforms) j["transforms"].push_back(to_string(t));
    j["seed"] = meta.seed;
    j["config"] = meta.config;
    j["config_hash"] = meta.config_hash;
    j["tool_version"] = tool_version;
    return j;
}

inline fs::path sidecar_path(const fs::path& csv) { return fs::path(csv).replace_extension(".json"); }

inline void save_dataset(const fs::path& csv, const SnapshotDataset& ds, const DatasetMeta& meta)
{
    write_text_file(csv, trajectory_csv(ds.inputs, ds.states));
    write_json_file(sidecar_path(csv), dataset_sidecar(ds, meta));
}

inline SnapshotDataset load_dataset(const fs::path& csv)
{
    const Trajectory t = read_trajectory_csv(csv);
    const nlohmann::json side = read_json_file(sidecar_path(csv));
    SnapshotDataset ds;
    ds.states = t.states;
    ds.inputs = t.inputs;
    const auto& dt = detail::require(side, "dt", "");
    ds.dt = detail::number_at(dt, "/dt");
    ds.scaler = detail::scaler_from_json(detail::require(side, "scaler", ""), "/scaler");
    if (ds.scaler.size() != ds.states.cols()) throw parse_error("/scaler", "length differs from state columns");
    if (side.contains("input_scaler")) ds.input_scaler = detail::scaler_from_json(side["input_scaler"], "/input_scaler");
    if (side.contains("transforms"))
        for (std::size_t i = 0; i < side["transforms"].size(); ++i) {
            try {
                ds.transforms.push_back(transform_from_string(side["transforms"][i].get<std::string>()));
            } catch (const std::exception& e) {
                throw parse_error("/transforms/" + std::to_string(i), e.what());
            }
        }
    return ds;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct DataConfig {
    int n_steps = 100;
    int step_duration = 200; // samples per step
    double dt = 1.0;
    std::uint64_t seed = 0;
    int test_n_steps = 20;
    int test_step_duration = 100;
    std::uint64_t test_seed = 1;
    VectorXd x0;                          // raw initial state
    std::optional<VectorXd> settle_input; // hold this input for settle_time before sampling
    double settle_time = 0.0;
    int substeps = 1;
    int grid_levels = 0;
    std::string transforms = "none"; // "none" | "column_log"
    bool scale_inputs = false;
};

struct ExperimentConfig {
    SystemSpec system;
    DataConfig data;
    TrainConfig train;
    std::vector<std::uint64_t> seeds; // empty => {train.seed}
    fs::path output_dir = "out";
    nlohmann::json source; // fully resolved document, used for the hash

    std::string hash() const { return fnv1a_hex(source.dump()); }
};

/// Parses "a.b.c=value"; the value is read as JSON when possible, else as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw config_error(assignment, "override must look like key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        value = raw;
    }
    nlohmann::json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) throw config_error(key, "cannot descend into a non-object");
        node = &(*node)[parts[i]];
        if (node->is_null()) *node = nlohmann::json::object();
    }
    if (!node->is_object()) throw config_error(key, "cannot assign into a non-object");
    (*node)[parts.back()] = value;
}

namespace detail {

inline VectorXd config_vector(const nlohmann::json& j, const std::string& path, Index expected)
{
    if (!j.is_array()) throw config_error(path, "expected an array of numbers");
    if (static_cast<Index>(j.size()) != expected)
        throw config_error(path, "expected " + std::to_string(expected) + " entries");
    VectorXd v(expected);
    for (Index i = 0; i < expected; ++i) {
        const auto& e = j[static_cast<std::size_t>(i)];
        if (!e.is_number()) throw config_error(path + "/" + std::to_string(i), "expected a number");
        v(i) = e.get<double>();
    }
    if (!v.allFinite()) throw config_error(path, "entries must be finite");
    return v;
}

} // namespace detail

/// Validates and resolves an experiment document. A string "system" field is a
/// path to a system JSON file, resolved relative to `base_dir`; output_dir is
/// taken relative to the working directory.
inline ExperimentConfig experiment_from_json(nlohmann::json doc, const fs::path& base_dir = ".")
{
    if (!doc.is_object()) throw config_error("", "experiment configuration must be an object");
    if (!doc.contains("system")) throw config_error("/system", "missing system definition");
    if (doc["system"].is_string()) {
        const fs::path sys_path = base_dir / doc["system"].get<std::string>();
        if (!fs::exists(sys_path)) throw config_error("/system", "referenced file " + sys_path.string() + " does not exist");
        doc["system"] = read_json_file(sys_path);
    }

    ExperimentConfig cfg;
    cfg.system = system_from_json(doc["system"], "/system");
    cfg.train = train_config_from_json(doc.value("train", nlohmann::json::object()), "/train");

    const nlohmann::json data = doc.value("data", nlohmann::json::object());
    if (!data.is_object()) throw config_error("/data", "must be an object");
    auto& d = cfg.data;
    auto read = [&](const char* key, auto& out) {
        if (!data.contains(key)) return;
        try {
            out = data.at(key).get<std::decay_t<decltype(out)>>();
        } catch (const nlohmann::json::exception& e) {
            throw config_error(std::string("/data/") + key, e.what());
        }
    };
    read("n_steps", d.n_steps);
    read("step_duration", d.step_duration);
    read("dt", d.dt);
    read("seed", d.seed);
    read("test_n_steps", d.test_n_steps);
    read("test_step_duration", d.test_step_duration);
    d.test_seed = d.seed + 1;
    read("test_seed", d.test_seed);
    read("settle_time", d.settle_time);
    read("substeps", d.substeps);
    read("grid_levels", d.grid_levels);
    read("transforms", d.transforms);
    read("scale_inputs", d.scale_inputs);

    const Index n_x = cfg.system.n_x();
    const Index n_u = cfg.system.n_u();
    if (data.contains("x0"))
        d.x0 = detail::config_vector(data["x0"], "/data/x0", n_x);
    else if (cfg.system.kind == SystemKind::toy)
        d.x0 = VectorXd::Zero(n_x);
    else
        throw config_error("/data/x0", "initial state required for this system");
    if (data.contains("settle_input")) d.settle_input = detail::config_vector(data["settle_input"], "/data/settle_input", n_u);

    if (d.n_steps < 1) throw config_error("/data/n_steps", "must be >= 1");
    if (d.step_duration < 1) throw config_error("/data/step_duration", "must be >= 1");
    if (d.test_n_steps < 1) throw config_error("/data/test_n_steps", "must be >= 1");
    if (d.test_step_duration < 1) throw config_error("/data/test_step_duration", "must be >= 1");
    if (!(d.dt > 0.0)) throw config_error("/data/dt", "must be > 0");
    if (d.substeps < 1) throw config_error("/data/substeps", "must be >= 1");
    if (!(d.settle_time >= 0.0)) throw config_error("/data/settle_time", "must be >= 0");
    if (d.grid_levels < 0 || d.grid_levels == 1) throw config_error("/data/grid_levels", "must be 0 or >= 2");
    if (d.transforms != "none" && d.transforms != "column_log")
        throw config_error("/data/transforms", "must be \"none\" or \"column_log\"");
    if (d.transforms == "column_log" && cfg.system.kind != SystemKind::column)
        throw config_error("/data/transforms", "column_log applies to column systems only");
    if (static_cast<long long>(d.n_steps) * d.step_duration < cfg.train.p + 1)
        throw config_error("/data/n_steps", "dataset shorter than one training window");

    if (doc.contains("seeds")) {
        try {
            cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
        } catch (const nlohmann::json::exception& e) {
            throw config_error("/seeds", e.what());
        }
        if (cfg.seeds.empty()) throw config_error("/seeds", "must not be empty");
    }
    if (doc.contains("output_dir")) {
        if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty())
            throw config_error("/output_dir", "must be a non-empty string");
        cfg.output_dir = doc["output_dir"].get<std::string>();
    }
    cfg.source = std::move(doc);
    return cfg;
}

inline ExperimentConfig load_experiment(const fs::path& path, const std::vector<std::string>& overrides = {})
{
    nlohmann::json doc = read_json_file(path);
    for (const auto& o : overrides) apply_override(doc, o);
    return experiment_from_json(std::move(doc), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

inline std::vector<StateTransform> transforms_for(const ExperimentConfig& cfg)
{
    if (cfg.data.transforms != "column_log") return {};
    const auto& p = std::get<ColumnParams>(cfg.system.params);
    return column_transform_flags(p.n_trays, p.feed_tray);
}

/// Initial state after the optional settling phase.
inline VectorXd initial_state(const ExperimentConfig& cfg)
{
    const auto& d = cfg.data;
    if (!d.settle_input || d.settle_time <= 0.0) return d.x0;
    const auto n = static_cast<Index>(std::ceil(d.settle_time / d.dt));
    const MatrixXd u = d.settle_input->transpose().replicate(n, 1);
    return rk4_integrate(cfg.system, d.x0, u, d.dt, d.substeps).bottomRows(1).transpose();
}

inline StepSequence training_inputs(const ExperimentConfig& cfg)
{
    const auto& d = cfg.data;
    return random_step_inputs(cfg.system.input_bounds, d.n_steps, d.step_duration, d.dt, d.seed, d.grid_levels);
}

inline StepSequence test_inputs(const ExperimentConfig& cfg)
{
    const auto& d = cfg.data;
    return random_step_inputs(cfg.system.input_bounds, d.test_n_steps, d.test_step_duration, d.dt, d.test_seed,
                              d.grid_levels);
}

inline SnapshotDataset make_dataset(const ExperimentConfig& cfg)
{
    return make_snapshot_dataset(cfg.system, initial_state(cfg), training_inputs(cfg), transforms_for(cfg),
                                 cfg.data.scale_inputs, cfg.data.substeps);
}

inline std::vector<std::uint64_t> seeds_of(const ExperimentConfig& cfg)
{
    return cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.train.seed} : cfg.seeds;
}

/// Fan-out cap: KOOPMAN_WIENER_THREADS if set, otherwise the hardware concurrency.
inline unsigned thread_limit()
{
    if (const char* env = std::getenv("KOOPMAN_WIENER_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Report exports

inline std::string train_report_csv(const TrainReport& r)
{
    std::string out = "epoch,train_total,val_total,L1,L2,L3,reg\n";
    for (const auto& e : r.epochs) {
        out += std::to_string(e.epoch) + "," + format_double(e.train.total) + "," + format_double(e.val.total) + "," +
               format_double(e.val.reconstruction) + "," + format_double(e.val.single_step) + "," +
               format_double(e.val.multi_step) + "," + format_double(e.val.regularization) + "\n";
    }
    return out;
}

inline nlohmann::json train_report_json(const TrainReport& r)
{
    return {{"seed", r.seed},
            {"best_epoch", r.best_epoch},
            {"best_val_loss", r.best_val_loss},
            {"epochs", static_cast<int>(r.epochs.size()) - 1},
            {"n_train_windows", r.n_train_windows},
            {"n_val_windows", r.n_val_windows},
            {"wall_time_s", r.wall_time_s}};
}

inline std::string eval_report_csv(const EvalReport& r)
{
    const Index n_x = r.truth_raw.cols();
    const Index n_u = r.inputs.cols();
    std::string out = "k";
    for (Index i = 0; i < n_u; ++i) out += ",u_" + std::to_string(i + 1);
    for (Index j = 0; j < n_x; ++j) out += ",x_true_" + std::to_string(j + 1);
    for (Index j = 0; j < n_x; ++j) out += ",x_pred_" + std::to_string(j + 1);
    out += '\n';
    for (Index k = 0; k < r.truth_raw.rows(); ++k) {
        out += std::to_string(k);
        const Index urow = std::min<Index>(k, r.inputs.rows() - 1);
        for (Index i = 0; i < n_u; ++i) out += "," + (urow >= 0 ? format_double(r.inputs(urow, i)) : std::string("nan"));
        for (Index j = 0; j < n_x; ++j) out += "," + format_double(r.truth_raw(k, j));
        for (Index j = 0; j < n_x; ++j)
            out += "," + (k < r.predicted_raw.rows() ? format_double(r.predicted_raw(k, j)) : std::string("nan"));
        out += '\n';
    }
    return out;
}

inline nlohmann::json eval_report_json(const EvalReport& r)
{
    nlohmann::json j;
    j["nmse_total"] = r.nmse_total;
    j["nmse_per_state"] = std::vector<double>(r.nmse_per_state.data(), r.nmse_per_state.data() + r.nmse_per_state.size());
    j["diverged"] = r.diverged;
    if (r.divergence_sample) j["divergence_sample"] = *r.divergence_sample;
    return j;
}

inline nlohmann::json provenance_json(const ExperimentConfig& cfg)
{
    return {{"config_hash", cfg.hash()},
            {"tool_version", tool_version},
            {"data_seed", cfg.data.seed},
            {"test_seed", cfg.data.test_seed},
            {"train_seeds", seeds_of(cfg)}};
}

// ---------------------------------------------------------------------------
// Pipeline stages

struct PipelineOptions {
    unsigned threads = 1;
    std::ostream* log = nullptr;
};

inline void write_dataset_files(const ExperimentConfig& cfg)
{
    DatasetMeta meta{cfg.data.seed, cfg.source, cfg.hash()};
    save_dataset(cfg.output_dir / "dataset.csv", make_dataset(cfg), meta);

    const StepSequence test = test_inputs(cfg);
    const MatrixXd u = test.expand();
    const MatrixXd x = rk4_integrate(cfg.system, initial_state(cfg), u, test.dt, cfg.data.substeps);
    write_text_file(cfg.output_dir / "test.csv", trajectory_csv(u, x));
    write_json_file(cfg.output_dir / "test.json", {{"dt", test.dt},
                                                    {"seed", cfg.data.test_seed},
                                                    {"n_steps", cfg.data.test_n_steps},
                                                    {"step_duration", cfg.data.test_step_duration},
                                                    {"config_hash", cfg.hash()},
                                                    {"tool_version", tool_version}});
}

inline MultiSeedResult train_from_files(const ExperimentConfig& cfg, const fs::path& dataset_csv,
                                        const fs::path& model_out, const PipelineOptions& opt)
{
    const SnapshotDataset ds = load_dataset(dataset_csv);
    if (ds.states.cols() != cfg.system.n_x() || ds.inputs.cols() != cfg.system.n_u())
        throw dimension_error("dataset dimensions do not match the configured system");
    const auto seeds = seeds_of(cfg);
    if (opt.log)
        *opt.log << "training " << to_string(cfg.train.model_kind) << " n_z=" << cfg.train.n_z << " on "
                 << (ds.n_samples() - 1) / cfg.train.p << " windows, " << seeds.size() << " seed(s), "
                 << cfg.train.epochs << " epochs\n";
    MultiSeedResult runs = multi_seed_train(ds, cfg.train, seeds, opt.threads);

    KoopmanModel model = runs.best_run().model;
    model.provenance.config_hash = cfg.hash();
    write_json_file(model_out, model_to_json(model));

    const fs::path dir = model_out.parent_path();
    write_text_file(dir / "train_report.csv", train_report_csv(runs.best_run().report));
    nlohmann::json summary = train_report_json(runs.best_run().report);
    summary["runs"] = nlohmann::json::array();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        nlohmann::json r = {{"seed", seeds[i]}};
        if (runs.runs[i])
            r["best_val_loss"] = runs.runs[i]->report.best_val_loss;
        else
            r["error"] = runs.errors[i];
        summary["runs"].push_back(r);
    }
    summary["provenance"] = provenance_json(cfg);
    write_json_file(dir / "train_report.json", summary);
    if (opt.log)
        *opt.log << "selected seed " << runs.best_run().report.seed << " (best epoch " << runs.best_run().report.best_epoch
                 << ", val loss " << runs.best_run().report.best_val_loss << ")\n";
    return runs;
}

inline EvalReport eval_to_files(const ExperimentConfig& cfg, const KoopmanModel& model, const fs::path& out_dir)
{
    const StepSequence test = test_inputs(cfg);
    EvalReport rep = evaluate(model, cfg.system, initial_state(cfg), test.expand(), test.dt, cfg.data.substeps);
    write_text_file(out_dir / "eval.csv", eval_report_csv(rep));
    nlohmann::json summary = eval_report_json(rep);
    summary["provenance"] = provenance_json(cfg);
    write_json_file(out_dir / "eval.json", summary);
    return rep;
}

/// make-dataset -> train -> eval into cfg.output_dir. On failure a FAILED marker
/// naming the stage is written, partial artifacts are kept, and the error rethrown.
inline EvalReport run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt = {})
{
    fs::create_directories(cfg.output_dir);
    const fs::path marker = cfg.output_dir / "FAILED";
    fs::remove(marker);
    std::string stage = "make-dataset";
    try {
        write_json_file(cfg.output_dir / "config.json", cfg.source);
        write_dataset_files(cfg);
        stage = "train";
        train_from_files(cfg, cfg.output_dir / "dataset.csv", cfg.output_dir / "model.json", opt);
        stage = "eval";
        const KoopmanModel model = model_from_json(read_json_file(cfg.output_dir / "model.json"));
        EvalReport rep = eval_to_files(cfg, model, cfg.output_dir);
        if (opt.log)
            *opt.log << "test NMSE " << rep.nmse_total << (rep.diverged ? " (diverged)" : "") << "\n";
        return rep;
    } catch (const std::exception& e) {
        write_text_file(marker, "stage: " + stage + "\nerror: " + e.what() + "\n");
        throw;
    }
}

} // namespace koopman

#endif // KOOPMAN_IO_HPP
