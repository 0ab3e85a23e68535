// koopman-wiener: simulate, build datasets, train, evaluate and roll out surrogate models.

#include "koopman/koopman.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

using namespace koopman;

struct Common {
    std::string config;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true)
{
    auto* opt = cmd->add_option("--config", c.config, "Experiment configuration (JSON)");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "Override a config field, e.g. --set train.epochs=500 (repeatable)");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text)
{
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw config_error("--seeds", "'" + item + "' is not a non-negative integer");
        }
    }
    if (out.empty()) throw config_error("--seeds", "no seeds given");
    return out;
}

ExperimentConfig load(const Common& c, const std::string& seeds)
{
    ExperimentConfig cfg = load_experiment(c.config, c.sets);
    if (!seeds.empty()) {
        cfg.seeds = parse_seed_list(seeds);
        cfg.source["seeds"] = cfg.seeds;
    }
    return cfg;
}

VectorXd parse_vector(const std::string& text, const std::string& flag)
{
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) vals.push_back(parse_double(item, flag));
    return Eigen::Map<VectorXd>(vals.data(), static_cast<Index>(vals.size()));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Wiener, linear and bilinear Koopman surrogate models for controlled dynamical systems"};
    app.set_version_flag("--version", std::string(tool_version));
    app.require_subcommand(1);

    Common c_sim, c_data, c_train, c_eval, c_roll, c_pipe;
    std::string sim_out, sim_which = "train";
    std::string train_data, train_out, train_seeds, pipe_seeds;
    std::string eval_model, eval_out;
    std::string roll_model, roll_inputs, roll_x0, roll_out;

    auto* sim = app.add_subcommand("simulate", "Integrate the configured system under its random step inputs and write a trajectory CSV");
    add_common(sim, c_sim);
    sim->add_option("--which", sim_which, "Input sequence: train or test")->check(CLI::IsMember({"train", "test"}));
    sim->add_option("--out", sim_out, "Output CSV (default <output_dir>/trajectory.csv)");

    auto* mk = app.add_subcommand("make-dataset", "Write dataset.csv/json and test.csv/json into output_dir");
    add_common(mk, c_data);

    auto* tr = app.add_subcommand("train", "Train on a dataset and write model.json and train_report.{csv,json}");
    add_common(tr, c_train);
    tr->add_option("--data", train_data, "Dataset CSV with its JSON sidecar (default <output_dir>/dataset.csv)");
    tr->add_option("--out", train_out, "Model file (default <output_dir>/model.json)");
    tr->add_option("--seeds", train_seeds, "Comma separated seeds trained independently; best validation loss wins");

    auto* ev = app.add_subcommand("eval", "Open-loop test of a model on the configured test inputs; writes eval.{csv,json}");
    add_common(ev, c_eval);
    ev->add_option("--model", eval_model, "Model file (default <output_dir>/model.json)");
    ev->add_option("--out-dir", eval_out, "Directory for eval.csv/json (default output_dir)");

    auto* ro = app.add_subcommand("rollout", "Predict a state trajectory from x0 under an input CSV with columns u_1..u_nu");
    add_common(ro, c_roll, false);
    ro->add_option("--model", roll_model, "Model file")->required()->check(CLI::ExistingFile);
    ro->add_option("--inputs", roll_inputs, "Input CSV (trajectory format; x columns are ignored)")
        ->required()
        ->check(CLI::ExistingFile);
    ro->add_option("--x0", roll_x0, "Initial raw state, comma separated (default: first state row of the input CSV)");
    ro->add_option("--out", roll_out, "Output CSV (default stdout)");

    auto* pipe = app.add_subcommand("pipeline", "make-dataset, train and eval in one run into output_dir");
    add_common(pipe, c_pipe);
    pipe->add_option("--seeds", pipe_seeds, "Comma separated seeds trained independently; best validation loss wins");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineOptions opt{thread_limit(), &std::cerr};
        if (*sim) {
            const ExperimentConfig cfg = load(c_sim, "");
            const StepSequence seq = sim_which == "test" ? test_inputs(cfg) : training_inputs(cfg);
            const MatrixXd u = seq.expand();
            const MatrixXd x = rk4_integrate(cfg.system, initial_state(cfg), u, seq.dt, cfg.data.substeps);
            const fs::path out = sim_out.empty() ? cfg.output_dir / "trajectory.csv" : fs::path(sim_out);
            write_text_file(out, trajectory_csv(u, x));
            std::cerr << "wrote " << out.string() << "\n";
        } else if (*mk) {
            const ExperimentConfig cfg = load(c_data, "");
            write_dataset_files(cfg);
            std::cerr << "wrote dataset and test files to " << cfg.output_dir.string() << "\n";
        } else if (*tr) {
            const ExperimentConfig cfg = load(c_train, train_seeds);
            const fs::path data = train_data.empty() ? cfg.output_dir / "dataset.csv" : fs::path(train_data);
            const fs::path out = train_out.empty() ? cfg.output_dir / "model.json" : fs::path(train_out);
            train_from_files(cfg, data, out, opt);
        } else if (*ev) {
            const ExperimentConfig cfg = load(c_eval, "");
            const fs::path model_path = eval_model.empty() ? cfg.output_dir / "model.json" : fs::path(eval_model);
            const KoopmanModel model = model_from_json(read_json_file(model_path));
            const EvalReport rep = eval_to_files(cfg, model, eval_out.empty() ? cfg.output_dir : fs::path(eval_out));
            std::cout << "nmse_total " << format_double(rep.nmse_total) << (rep.diverged ? " diverged" : "") << "\n";
            return rep.diverged ? 3 : 0;
        } else if (*ro) {
            const KoopmanModel model = model_from_json(read_json_file(roll_model));
            const Trajectory in = read_trajectory_csv(roll_inputs);
            if (in.inputs.cols() != model.n_u()) throw dimension_error("input CSV has the wrong number of u columns");
            VectorXd x0;
            if (!roll_x0.empty())
                x0 = parse_vector(roll_x0, "--x0");
            else if (in.states.cols() == model.n_x() && in.states.rows() > 0)
                x0 = in.states.row(0).transpose();
            else
                throw config_error("--x0", "required when the input CSV has no state columns");
            if (x0.size() != model.n_x()) throw config_error("--x0", "expected " + std::to_string(model.n_x()) + " values");
            const MatrixXd u = in.inputs;
            std::optional<Index> diverged;
            const MatrixXd z = rollout(model, model.scaling.states_to_model(MatrixXd(x0.transpose())).row(0).transpose(),
                                       u.rows() > 0 ? model.scaling.inputs_to_model(u) : u, &diverged);
            const std::string csv = trajectory_csv(u.topRows(std::max<Index>(z.rows() - 1, 0)),
                                                   model.scaling.states_from_model(z));
            if (roll_out.empty())
                std::cout << csv;
            else
                write_text_file(roll_out, csv);
            if (diverged) {
                std::cerr << "rollout diverged at sample " << *diverged << "\n";
                return 3;
            }
        } else if (*pipe) {
            const ExperimentConfig cfg = load(c_pipe, pipe_seeds);
            run_pipeline(cfg, opt);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
