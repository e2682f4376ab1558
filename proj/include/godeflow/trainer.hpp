#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "godeflow/model.hpp"
#include "godeflow/simulator.hpp"

namespace godeflow::train {

// Loss-weight presets: full balancing, none (N), treatment only (T),
// interference only (I).
enum class Variant { full, none, treatment_only, interference_only };

std::string variant_name(Variant v);
// Accepts "full", "N", "T", "I" (case-insensitive). Throws ParameterError.
Variant parse_variant(const std::string& text);

struct TrainConfig {
    double learning_rate = 1e-4;
    // Used by Variant::full; the other variants fix their own weights.
    double alpha_a = 0.5;
    double alpha_g = 0.5;
    // Full-objective steps per outcome-only step.
    std::size_t alt_ratio = 4;
    std::size_t epochs = 5000;
    std::size_t substeps = 4;
    std::uint64_t seed = 0;
    Variant variant = Variant::full;
    // Validation L_Y is measured every this many iterations and at the end.
    std::size_t validation_interval = 10;

    std::pair<double, double> balancing_weights() const;
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

enum class StepKind { full, outcome };

// Iteration w (1-based) is an outcome-only step iff w mod (K + 1) == 0.
StepKind step_kind(std::size_t iteration, std::size_t alt_ratio);

struct LossRecord {
    std::size_t iteration = 0;
    StepKind kind = StepKind::full;
    double value = 0.0;    // the loss that was optimized
    double outcome = 0.0;  // L_Y
    std::optional<double> treatment;
    std::optional<double> interference;
    std::optional<double> validation;
};

struct TrainResult {
    model::ModelParams best;   // lowest validation L_Y
    model::ModelParams final;  // after the last iteration
    std::vector<LossRecord> history;
    std::size_t best_iteration = 0;
    double best_validation_loss = 0.0;
    std::size_t full_steps = 0;
    std::size_t outcome_steps = 0;
};

// Per-dataset inputs of one forward pass, prepared once.
struct TrainingBatch {
    const sim::ObservationalDataset* dataset = nullptr;
    model::GraphOperator graph;

    explicit TrainingBatch(const sim::ObservationalDataset& ds);
};

struct ForwardLosses {
    ad::Tensor outcome;
    ad::Tensor treatment;
    ad::Tensor interference;
    std::vector<ad::Tensor> states;
};

// One factual forward pass over t_0..t_T. Adversarial losses are built only
// when `with_balancing` is set; `reverse` toggles the gradient reversal.
ForwardLosses forward_losses(const model::ModelParams& params, const TrainingBatch& batch, bool with_balancing,
                             bool reverse = true);

// Sets the model's outcome shift/scale to the mean and standard deviation of
// the dataset's outcomes.
model::ModelConfig fit_outcome_scaling(model::ModelConfig config, const sim::ObservationalDataset& dataset);

// Alternating schedule: full steps update all five parameter groups with the
// gradient reversal active; outcome steps update encoder, vector field and
// outcome decoder from L_Y alone. Each group keeps its own Adam state. The
// best checkpoint is chosen by L_Y on `validation` (the training data when
// absent). Throws TrainingError on a non-finite loss.
TrainResult train(const sim::ObservationalDataset& dataset, const model::ModelParams& initial,
                  const TrainConfig& config, const sim::ObservationalDataset* validation = nullptr);

}  // namespace godeflow::train
