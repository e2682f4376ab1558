#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "godeflow/evaluation.hpp"
#include "godeflow/graph.hpp"
#include "godeflow/model.hpp"
#include "godeflow/simulator.hpp"
#include "godeflow/trainer.hpp"

namespace godeflow::experiment {

struct GraphConfig {
    std::string profile = "flickr";  // "flickr" or "blogcatalog"
    std::size_t num_nodes = 500;
    std::optional<std::filesystem::path> edge_list;  // replaces the generator when set
};

struct EvalConfig {
    double flip_ratio = 0.5;
    std::size_t horizon = 5;
    std::optional<std::size_t> start_time;  // default T - horizon
    double holdout_fraction = 0.3;
    bool balance = true;
};

// Section seeds that are not given explicitly follow the top-level seed.
struct ExplicitSeeds {
    std::optional<std::uint64_t> graph, sim, train, eval;
};

struct RunConfig {
    std::uint64_t seed = 0;
    GraphConfig graph;
    sim::SimParams sim;  // mechanisms drawn at resolution time when absent
    model::ModelConfig model;
    train::TrainConfig train;
    EvalConfig eval;
    std::string output = "runs";
    ExplicitSeeds seeds;

    std::uint64_t graph_seed() const { return seeds.graph.value_or(seed); }
    std::uint64_t sim_seed() const { return seeds.sim.value_or(seed); }
    std::uint64_t train_seed() const { return seeds.train.value_or(seed); }
    std::uint64_t eval_seed() const { return seeds.eval.value_or(seed); }
};

// Sections: seed, graph, sim, model, train, eval, output. Unknown keys at any
// level raise ParameterError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Fully resolved form: every seed concrete, mechanisms drawn.
nlohmann::json to_json(const RunConfig& config);

// GODEFLOW_SEED, when set, replaces the top-level seed. Throws ParameterError
// for a malformed value.
void apply_seed_environment(RunConfig& config);

graph::DegreeProfile parse_profile(const std::string& name);

graph::Graph make_graph(const RunConfig& config);
sim::SimParams resolved_sim_params(const RunConfig& config);
train::TrainConfig resolved_train_config(const RunConfig& config);
sim::InterventionSpec resolved_intervention(const RunConfig& config, std::size_t horizon_t);

// A second trajectory on the same graph and mechanisms under a derived seed.
sim::ObservationalDataset make_validation_dataset(const sim::ObservationalDataset& dataset);

// Shapes the model config to the dataset and fits the outcome scaling.
model::ModelParams initial_model(const RunConfig& config, const sim::ObservationalDataset& dataset);

// Evaluates with the eval section of the config (balance included if enabled).
train::EvalReport evaluate_with_config(const model::ModelParams& params, const sim::ObservationalDataset& dataset,
                                       const RunConfig& config);

struct RunResult {
    sim::ObservationalDataset dataset;
    train::TrainResult training;
    train::EvalReport report;
};

// Simulate, train (best-on-validation), evaluate.
RunResult run_experiment(const RunConfig& config);

enum class SweepKind { flip_ratio, confounding, alpha_grid, alt_ratio };

SweepKind parse_sweep_kind(const std::string& text);
std::string sweep_kind_name(SweepKind kind);

// Parses "a,b,c" or an integer range "lo..hi".
std::vector<double> parse_grid(const std::string& text);

struct SweepPoint {
    std::vector<double> values;  // (alpha_a, alpha_g) for alpha_grid, else one value
};

// alpha_grid expands to the cartesian product of the grid with itself.
std::vector<SweepPoint> expand_grid(SweepKind kind, const std::vector<double>& grid);

// The base config with the point applied. Confounding sets
// gamma_a = gamma_f = v and gamma_n = gamma_g = v / 3.
RunConfig apply_point(RunConfig base, SweepKind kind, const SweepPoint& point);

struct SweepRow {
    SweepPoint point;
    std::optional<train::EvalReport> report;
    std::string error;
};

// One train + evaluate per point; every point uses the base seeds. Failures
// are recorded in the row. Throws ParameterError for an empty grid.
std::vector<SweepRow> run_sweep(SweepKind kind, const std::vector<double>& grid, const RunConfig& base,
                                std::size_t jobs = 1);

void write_sweep(const std::filesystem::path& path, SweepKind kind, const std::vector<SweepRow>& rows,
                 std::size_t horizon);

}  // namespace godeflow::experiment
