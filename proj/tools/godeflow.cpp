// godeflow: simulate, train, evaluate, sweep and export from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "godeflow/errors.hpp"
#include "godeflow/evaluation.hpp"
#include "godeflow/experiment.hpp"
#include "godeflow/hash.hpp"

namespace fs = std::filesystem;
using namespace godeflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct UsageError : Error {
    using Error::Error;
};

experiment::RunConfig read_config(const std::string& path) {
    auto config = path.empty() ? experiment::RunConfig{} : experiment::load_run_config(path);
    experiment::apply_seed_environment(config);
    return config;
}

// Refuses a non-empty existing directory unless forced.
void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir) && !force) {
            throw UsageError(dir.string() + " is not empty (use --force to overwrite)");
        }
    }
    fs::create_directories(dir);
}

void prepare_output_file(const fs::path& path, bool force) {
    if (fs::exists(path) && !force) throw UsageError(path.string() + " exists (use --force to overwrite)");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void require_dir(const fs::path& dir, const char* what) {
    if (!fs::is_directory(dir)) throw UsageError(std::string(what) + " directory not found: " + dir.string());
}

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

fs::path sibling(const fs::path& report, const std::string& suffix) {
    auto p = report;
    p.replace_filename(report.stem().string() + suffix);
    return p;
}

void print_report(const train::EvalReport& r) {
    std::printf("%-10s %s\n", "step", "mse");
    for (std::size_t k = 0; k < r.per_step_mse.size(); ++k) {
        std::printf("%-10s %.6g\n", (std::to_string(k + 1) + "-step").c_str(), r.per_step_mse[k]);
    }
    std::printf("%-10s %.6g\n", "overall", r.overall_mse);
    if (r.balance) {
        std::printf("post-hoc treatment accuracy %.4f, interference R^2 %.4f\n", r.balance->treatment_accuracy,
                    r.balance->interference_r2);
    }
}

int cmd_simulate(const std::string& config_path, const fs::path& out, bool force) {
    const auto config = read_config(config_path);
    prepare_output_dir(out, force);
    const auto graph = experiment::make_graph(config);
    const auto ds = sim::simulate_trajectory(graph, experiment::resolved_sim_params(config));
    sim::save_dataset(out, ds);
    const auto s = sim::summarize(ds);
    std::printf("nodes %zu, edges %zu, T %zu\n", ds.num_nodes(), ds.graph.num_edges(), ds.horizon());
    std::printf("treatment rate %.4f\nmean interference %.4f\nmean outcome %.4f\nclamp count %zu\n",
                s.treatment_rate, s.mean_interference, s.mean_outcome, s.clamp_count);
    return kExitOk;
}

int cmd_train(const std::string& config_path, const fs::path& data, const fs::path& out,
              const std::optional<std::string>& variant, const std::optional<std::size_t>& epochs, bool force) {
    auto config = read_config(config_path);
    if (variant) config.train.variant = train::parse_variant(*variant);
    if (epochs) config.train.epochs = *epochs;
    config.train.validate();
    require_dir(data, "dataset");
    prepare_output_dir(out, force);

    const auto ds = sim::load_dataset(data);
    const auto validation = experiment::make_validation_dataset(ds);
    const auto initial = experiment::initial_model(config, ds);
    const auto train_config = experiment::resolved_train_config(config);
    const auto result = train::train(ds, initial, train_config, &validation);

    const nlohmann::json extra = {{"train", train::to_json(train_config)},
                                  {"best_iteration", result.best_iteration},
                                  {"best_validation_loss", result.best_validation_loss}};
    model::save_model(out / "model.ckpt", result.best, extra);
    train::write_loss_history(out / "loss_history.csv", result.history);
    write_json(out / "run.json", {{"command", "train"},
                                  {"config", experiment::to_json(config)},
                                  {"inputs", {{"data", directory_hash(data)}}},
                                  {"outputs",
                                   {{"model.ckpt", file_hash(out / "model.ckpt")},
                                    {"model.ckpt.bin", file_hash(out / "model.ckpt.bin")},
                                    {"loss_history.csv", file_hash(out / "loss_history.csv")}}}});
    std::printf("iterations %zu (L steps %zu, L_Y steps %zu)\n", result.history.size(), result.full_steps,
                result.outcome_steps);
    std::printf("best iteration %zu, validation L_Y %.6g\n", result.best_iteration, result.best_validation_loss);
    return kExitOk;
}

struct EvalFlags {
    std::string config;
    fs::path checkpoint, data, report;
    double flip_ratio = 0.5;
    std::size_t horizon = 5;
    std::optional<std::size_t> start_time;
    bool no_balance = false;
    bool force = false;
};

int cmd_evaluate(const EvalFlags& f) {
    auto config = read_config(f.config);
    config.eval.flip_ratio = f.flip_ratio;
    config.eval.horizon = f.horizon;
    if (f.start_time) config.eval.start_time = f.start_time;
    if (f.no_balance) config.eval.balance = false;
    if (!(f.flip_ratio >= 0.0 && f.flip_ratio <= 1.0)) throw ParameterError("--flip-ratio must lie in [0, 1]");
    require_file(f.checkpoint, "checkpoint");
    require_dir(f.data, "dataset");
    const auto degrees = sibling(f.report, ".degrees.csv");
    const auto manifest = sibling(f.report, ".run.json");
    prepare_output_file(f.report, f.force);
    prepare_output_file(degrees, f.force);
    prepare_output_file(manifest, f.force);

    const auto params = model::load_model(f.checkpoint);
    const auto ds = sim::load_dataset(f.data);
    const auto report = experiment::evaluate_with_config(params, ds, config);
    train::write_report(f.report, report);
    train::write_degree_report(degrees, report);
    write_json(manifest, {{"command", "evaluate"},
                          {"config", experiment::to_json(config)},
                          {"inputs", {{"checkpoint", file_hash(f.checkpoint)}, {"data", directory_hash(f.data)}}},
                          {"outputs", {{f.report.filename().string(), file_hash(f.report)}}}});
    print_report(report);
    return kExitOk;
}

int cmd_sweep(const std::string& kind_text, const std::string& grid_text, const std::string& config_path,
              const fs::path& out, std::size_t jobs, bool force) {
    const auto config = read_config(config_path);
    const auto kind = experiment::parse_sweep_kind(kind_text);
    const auto grid = experiment::parse_grid(grid_text);
    for (const auto& point : experiment::expand_grid(kind, grid)) experiment::apply_point(config, kind, point);
    if (jobs < 1) throw ParameterError("--jobs must be at least 1");
    prepare_output_dir(out, force);

    const auto rows = experiment::run_sweep(kind, grid, config, jobs);
    experiment::write_sweep(out / "sweep.csv", kind, rows, config.eval.horizon);
    std::size_t failed = 0;
    for (const auto& r : rows) failed += !r.report;
    write_json(out / "run.json", {{"command", "sweep"},
                                  {"kind", experiment::sweep_kind_name(kind)},
                                  {"grid", grid},
                                  {"config", experiment::to_json(config)},
                                  {"outputs", {{"sweep.csv", file_hash(out / "sweep.csv")}}}});
    std::printf("%zu points, %zu failed; table written to %s\n", rows.size(), failed,
                (out / "sweep.csv").string().c_str());
    return kExitOk;
}

int cmd_export(const fs::path& checkpoint, const fs::path& data, const fs::path& out, bool force) {
    require_file(checkpoint, "checkpoint");
    require_dir(data, "dataset");
    prepare_output_file(out, force);
    const auto params = model::load_model(checkpoint);
    const auto ds = sim::load_dataset(data);
    train::export_latents(params, ds, out);
    std::printf("%zu rows written to %s\n", ds.num_nodes() * (ds.horizon() + 1), out.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual GraphODE with a PK-PD simulator"};
    app.require_subcommand(1);
    bool force = false;

    std::string config_path;
    fs::path out, data, checkpoint;

    auto* simulate = app.add_subcommand("simulate", "Simulate an observational dataset");
    simulate->add_option("--config", config_path, "Run configuration (JSON)");
    simulate->add_option("--out", out, "Dataset directory")->required();
    simulate->add_flag("--force", force, "Overwrite an existing directory");

    std::optional<std::string> variant;
    std::optional<std::size_t> epochs;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
    train_cmd->add_option("--config", config_path, "Run configuration (JSON)");
    train_cmd->add_option("--data", data, "Dataset directory")->required();
    train_cmd->add_option("--out", out, "Output directory")->required();
    train_cmd->add_option("--variant", variant, "full, N, T or I");
    train_cmd->add_option("--epochs", epochs, "Training iterations");
    train_cmd->add_flag("--force", force, "Overwrite an existing directory");

    EvalFlags eval;
    auto* evaluate = app.add_subcommand("evaluate", "Counterfactual evaluation against the simulator");
    evaluate->add_option("--config", eval.config, "Run configuration (JSON); eval section and seeds");
    evaluate->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
    evaluate->add_option("--data", eval.data, "Dataset directory")->required();
    evaluate->add_option("--flip-ratio", eval.flip_ratio, "Fraction of units whose treatments flip")
        ->capture_default_str();
    evaluate->add_option("--horizon", eval.horizon, "Steps ahead")->capture_default_str();
    evaluate->add_option("--start-time", eval.start_time, "Intervention start (default T - horizon)");
    evaluate->add_option("--report", eval.report, "Report CSV")->required();
    evaluate->add_flag("--no-balance", eval.no_balance, "Skip post-hoc balance diagnostics");
    evaluate->add_flag("--force", eval.force, "Overwrite existing reports");

    std::string kind, grid;
    std::size_t jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "Train and evaluate over a grid");
    sweep->add_option("--kind", kind, "flip_ratio, confounding, alpha_grid or alt_ratio")->required();
    sweep->add_option("--grid", grid, "Comma-separated values or an integer range lo..hi")->required();
    sweep->add_option("--config", config_path, "Run configuration (JSON)");
    sweep->add_option("--out", out, "Output directory")->required();
    sweep->add_option("--jobs", jobs, "Parallel grid points")->capture_default_str();
    sweep->add_flag("--force", force, "Overwrite an existing directory");

    auto* export_cmd = app.add_subcommand("export-latents", "Write latent trajectories as CSV");
    export_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    export_cmd->add_option("--data", data, "Dataset directory")->required();
    export_cmd->add_option("--out", out, "Output CSV")->required();
    export_cmd->add_flag("--force", force, "Overwrite an existing file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*simulate) return cmd_simulate(config_path, out, force);
        if (*train_cmd) return cmd_train(config_path, data, out, variant, epochs, force);
        if (*evaluate) {
            return cmd_evaluate(eval);
        }
        if (*sweep) return cmd_sweep(kind, grid, config_path, out, jobs, force);
        if (*export_cmd) return cmd_export(checkpoint, data, out, force);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
