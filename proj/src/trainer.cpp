#include "godeflow/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "godeflow/errors.hpp"
#include "godeflow/optim.hpp"

namespace godeflow::train {

using model::ModelParams;
using model::ParamGroup;

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::none: return "N";
        case Variant::treatment_only: return "T";
        case Variant::interference_only: return "I";
    }
    return "?";
}

Variant parse_variant(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "full") return Variant::full;
    if (t == "n") return Variant::none;
    if (t == "t") return Variant::treatment_only;
    if (t == "i") return Variant::interference_only;
    throw ParameterError("unknown variant \"" + text + "\" (expected full, N, T or I)");
}

std::pair<double, double> TrainConfig::balancing_weights() const {
    switch (variant) {
        case Variant::full: return {alpha_a, alpha_g};
        case Variant::none: return {0.0, 0.0};
        case Variant::treatment_only: return {1.0, 0.0};
        case Variant::interference_only: return {0.0, 1.0};
    }
    return {alpha_a, alpha_g};
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ParameterError("train: epochs must be at least 1");
    if (substeps < 1) throw ParameterError("train: substeps must be at least 1");
    if (!(learning_rate > 0.0)) throw ParameterError("train: learning_rate must be positive");
    if (!(alpha_a >= 0.0) || !(alpha_g >= 0.0)) throw ParameterError("train: alpha weights must be >= 0");
    if (validation_interval < 1) throw ParameterError("train: validation_interval must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"alpha_a", c.alpha_a},
            {"alpha_g", c.alpha_g},
            {"alt_ratio", c.alt_ratio},
            {"epochs", c.epochs},
            {"substeps", c.substeps},
            {"seed", c.seed},
            {"variant", variant_name(c.variant)},
            {"validation_interval", c.validation_interval}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) throw ParameterError("train config must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "alpha_a") c.alpha_a = value.get<double>();
            else if (key == "alpha_g") c.alpha_g = value.get<double>();
            else if (key == "alt_ratio") c.alt_ratio = value.get<std::size_t>();
            else if (key == "epochs") c.epochs = value.get<std::size_t>();
            else if (key == "substeps") c.substeps = value.get<std::size_t>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "variant") c.variant = parse_variant(value.get<std::string>());
            else if (key == "validation_interval") c.validation_interval = value.get<std::size_t>();
            else throw ParameterError("unknown train key \"" + key + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

StepKind step_kind(std::size_t iteration, std::size_t alt_ratio) {
    return iteration % (alt_ratio + 1) == 0 ? StepKind::outcome : StepKind::full;
}

TrainingBatch::TrainingBatch(const sim::ObservationalDataset& ds)
    : dataset(&ds), graph(model::GraphOperator::from_graph(ds.graph)) {}

ForwardLosses forward_losses(const ModelParams& params, const TrainingBatch& batch, bool with_balancing,
                             bool reverse) {
    const auto& ds = *batch.dataset;
    const auto z0 = model::encode_initial(params, ds.covariates.row(0), ds.static_covariates);
    auto traj = model::solve_trajectory(params, z0, ds.treatments, batch.graph, 0, ds.horizon(),
                                        params.config.substeps);
    std::vector<ad::Tensor> predictions;
    predictions.reserve(traj.states.size());
    for (const auto& z : traj.states) predictions.push_back(model::decode_outcome(params, z));

    ForwardLosses out;
    out.outcome = model::loss_outcome(predictions, ds.outcomes());
    if (with_balancing) {
        out.treatment = model::loss_treatment(params, traj.states, ds.treatments, reverse);
        out.interference = model::loss_interference(params, traj.states, ds.treatments, ds.interference, reverse);
    }
    out.states = std::move(traj.states);
    return out;
}

model::ModelConfig fit_outcome_scaling(model::ModelConfig config, const sim::ObservationalDataset& dataset) {
    const auto& y = dataset.outcomes().data();
    if (y.empty()) throw ParameterError("fit_outcome_scaling: empty dataset");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    config.outcome_shift = mean;
    config.outcome_scale = var > 1e-12 ? std::sqrt(var) : 1.0;
    return config;
}

namespace {

double validation_loss(const ModelParams& params, const TrainingBatch& batch) {
    ad::NoGradGuard no_grad;
    return forward_losses(params, batch, false).outcome.item();
}

void require_finite(double v, std::size_t iteration, const char* what) {
    if (!std::isfinite(v)) {
        throw TrainingError(std::string("non-finite ") + what + " at iteration " + std::to_string(iteration));
    }
}

}  // namespace

TrainResult train(const sim::ObservationalDataset& dataset, const ModelParams& initial, const TrainConfig& config,
                  const sim::ObservationalDataset* validation) {
    config.validate();
    if (initial.config.static_dim != dataset.params.static_dim) {
        throw DimensionError("train: model expects " + std::to_string(initial.config.static_dim) +
                             " static covariates, dataset has " + std::to_string(dataset.params.static_dim));
    }
    ModelParams params = initial.clone();
    params.config.substeps = config.substeps;
    const auto [alpha_a, alpha_g] = config.balancing_weights();

    const TrainingBatch batch(dataset);
    const std::optional<TrainingBatch> valid_batch =
        validation ? std::optional<TrainingBatch>(std::in_place, *validation) : std::nullopt;
    const TrainingBatch& selection = valid_batch ? *valid_batch : batch;

    const ad::AdamOptions adam{config.learning_rate};
    std::map<ParamGroup, ad::AdamState> optimizers;
    for (ParamGroup g : model::kAllGroups) {
        const auto tensors = params.group(g);
        optimizers.emplace(g, ad::AdamState(tensors, adam));
    }
    auto step = [&](ParamGroup g) {
        auto tensors = params.group(g);
        ad::adam_step(tensors, optimizers.at(g));
    };

    TrainResult result;
    result.best_validation_loss = std::numeric_limits<double>::infinity();
    result.history.reserve(config.epochs);

    for (std::size_t w = 1; w <= config.epochs; ++w) {
        LossRecord record;
        record.iteration = w;
        record.kind = step_kind(w, config.alt_ratio);
        const bool full = record.kind == StepKind::full;
        try {
            ForwardLosses losses = forward_losses(params, batch, full);
            record.outcome = losses.outcome.item();
            require_finite(record.outcome, w, "outcome loss");
            ad::Tensor objective = losses.outcome;
            if (full) {
                record.treatment = losses.treatment.item();
                record.interference = losses.interference.item();
                objective = model::loss_total(losses.outcome, losses.treatment, losses.interference, alpha_a, alpha_g);
            }
            record.value = objective.item();
            require_finite(record.value, w, "loss");
            objective.backward();
        } catch (const SolveError& e) {
            params.clear_grads();
            throw TrainingError("iteration " + std::to_string(w) + ": " + e.what());
        }

        step(ParamGroup::encoder);
        step(ParamGroup::ode);
        step(ParamGroup::outcome);
        if (full) {
            step(ParamGroup::treatment_head);
            step(ParamGroup::interference_head);
            ++result.full_steps;
        } else {
            ++result.outcome_steps;
        }

        if (w % config.validation_interval == 0 || w == config.epochs) {
            double v = 0.0;
            try {
                v = validation_loss(params, selection);
            } catch (const SolveError& e) {
                throw TrainingError("iteration " + std::to_string(w) + " (validation): " + e.what());
            }
            require_finite(v, w, "validation loss");
            record.validation = v;
            if (v < result.best_validation_loss) {
                result.best_validation_loss = v;
                result.best_iteration = w;
                result.best = params.clone();
            }
        }
        result.history.push_back(record);
    }
    result.final = std::move(params);
    return result;
}

}  // namespace godeflow::train
