#include "godeflow/model.hpp"

#include <cmath>
#include <string>

#include "godeflow/errors.hpp"
#include "godeflow/optim.hpp"
#include "godeflow/rng.hpp"

namespace godeflow::model {

namespace {

Tensor zero_bias(std::size_t width) { return Tensor::zeros({1, width}, true); }

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return ad::matmul(x, w) + b; }

Tensor copy_leaf(const Tensor& t) { return Tensor::from_values(t.shape(), {t.values().begin(), t.values().end()}, true); }

Tensor constant_column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor::from_values({n, 1}, std::move(values));
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
    return {{"static_dim", c.static_dim},       {"encoder_hidden", c.encoder_hidden},
            {"latent_dim", c.latent_dim},       {"head_hidden", c.head_hidden},
            {"substeps", c.substeps},           {"outcome_shift", c.outcome_shift},
            {"outcome_scale", c.outcome_scale}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    if (!j.is_object()) throw ParameterError("model config must be an object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "static_dim") c.static_dim = value.get<std::size_t>();
            else if (key == "encoder_hidden") c.encoder_hidden = value.get<std::size_t>();
            else if (key == "latent_dim") c.latent_dim = value.get<std::size_t>();
            else if (key == "head_hidden") c.head_hidden = value.get<std::size_t>();
            else if (key == "substeps") c.substeps = value.get<std::size_t>();
            else if (key == "outcome_shift") c.outcome_shift = value.get<double>();
            else if (key == "outcome_scale") c.outcome_scale = value.get<double>();
            else throw ParameterError("unknown model key \"" + key + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("model config: ") + e.what());
    }
    if (c.latent_dim == 0 || c.encoder_hidden == 0 || c.head_hidden == 0 || c.substeps == 0) {
        throw ParameterError("model config: dimensions and substeps must be positive");
    }
    if (!(c.outcome_scale > 0.0)) throw ParameterError("model config: outcome_scale must be positive");
    return c;
}

const char* group_name(ParamGroup group) {
    switch (group) {
        case ParamGroup::encoder: return "encoder";
        case ParamGroup::ode: return "ode";
        case ParamGroup::outcome: return "outcome";
        case ParamGroup::treatment_head: return "treatment_head";
        case ParamGroup::interference_head: return "interference_head";
    }
    return "?";
}

ModelParams ModelParams::initialize(const ModelConfig& c, std::uint64_t seed) {
    auto rng = make_rng(seed, RngStream::weights);
    const std::size_t d = c.latent_dim;
    ModelParams p;
    p.config = c;
    p.encoder_w1 = ad::glorot_uniform(1 + c.static_dim, c.encoder_hidden, rng);
    p.encoder_b1 = zero_bias(c.encoder_hidden);
    p.encoder_w2 = ad::glorot_uniform(c.encoder_hidden, d, rng);
    p.encoder_b2 = zero_bias(d);
    p.ode_w_self = ad::glorot_uniform(d + 1, d, rng);
    p.ode_b_self = zero_bias(d);
    p.ode_w_nbr = ad::glorot_uniform(d + 1, d, rng);
    p.ode_b_nbr = zero_bias(d);
    p.outcome_w = ad::glorot_uniform(d, 1, rng);
    p.outcome_b = zero_bias(1);
    p.treatment_w1 = ad::glorot_uniform(d, c.head_hidden, rng);
    p.treatment_b1 = zero_bias(c.head_hidden);
    p.treatment_w2 = ad::glorot_uniform(c.head_hidden, 2, rng);
    p.treatment_b2 = zero_bias(2);
    p.interference_w1 = ad::glorot_uniform(d + 1, c.head_hidden, rng);
    p.interference_b1 = zero_bias(c.head_hidden);
    p.interference_w2 = ad::glorot_uniform(c.head_hidden, 1, rng);
    p.interference_b2 = zero_bias(1);
    return p;
}

std::vector<Tensor> ModelParams::group(ParamGroup g) const {
    switch (g) {
        case ParamGroup::encoder: return {encoder_w1, encoder_b1, encoder_w2, encoder_b2};
        case ParamGroup::ode: return {ode_w_self, ode_b_self, ode_w_nbr, ode_b_nbr};
        case ParamGroup::outcome: return {outcome_w, outcome_b};
        case ParamGroup::treatment_head: return {treatment_w1, treatment_b1, treatment_w2, treatment_b2};
        case ParamGroup::interference_head:
            return {interference_w1, interference_b1, interference_w2, interference_b2};
    }
    return {};
}

std::vector<Tensor> ModelParams::all() const {
    std::vector<Tensor> out;
    for (ParamGroup g : kAllGroups) {
        auto part = group(g);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<ad::NamedTensor> ModelParams::named() const {
    return {{"encoder.w1", encoder_w1},
            {"encoder.b1", encoder_b1},
            {"encoder.w2", encoder_w2},
            {"encoder.b2", encoder_b2},
            {"ode.w_self", ode_w_self},
            {"ode.b_self", ode_b_self},
            {"ode.w_nbr", ode_w_nbr},
            {"ode.b_nbr", ode_b_nbr},
            {"outcome.w", outcome_w},
            {"outcome.b", outcome_b},
            {"treatment.w1", treatment_w1},
            {"treatment.b1", treatment_b1},
            {"treatment.w2", treatment_w2},
            {"treatment.b2", treatment_b2},
            {"interference.w1", interference_w1},
            {"interference.b1", interference_b1},
            {"interference.w2", interference_w2},
            {"interference.b2", interference_b2}};
}

ModelParams ModelParams::clone() const {
    ModelParams p;
    p.config = config;
    p.encoder_w1 = copy_leaf(encoder_w1);
    p.encoder_b1 = copy_leaf(encoder_b1);
    p.encoder_w2 = copy_leaf(encoder_w2);
    p.encoder_b2 = copy_leaf(encoder_b2);
    p.ode_w_self = copy_leaf(ode_w_self);
    p.ode_b_self = copy_leaf(ode_b_self);
    p.ode_w_nbr = copy_leaf(ode_w_nbr);
    p.ode_b_nbr = copy_leaf(ode_b_nbr);
    p.outcome_w = copy_leaf(outcome_w);
    p.outcome_b = copy_leaf(outcome_b);
    p.treatment_w1 = copy_leaf(treatment_w1);
    p.treatment_b1 = copy_leaf(treatment_b1);
    p.treatment_w2 = copy_leaf(treatment_w2);
    p.treatment_b2 = copy_leaf(treatment_b2);
    p.interference_w1 = copy_leaf(interference_w1);
    p.interference_b1 = copy_leaf(interference_b1);
    p.interference_w2 = copy_leaf(interference_w2);
    p.interference_b2 = copy_leaf(interference_b2);
    return p;
}

void ModelParams::zero_group(ParamGroup g) {
    for (auto& t : group(g)) {
        auto v = t.mutable_values();
        std::fill(v.begin(), v.end(), 0.0);
    }
}

void ModelParams::clear_grads() {
    for (auto& t : all()) t.clear_grad();
}

void save_model(const std::filesystem::path& path, const ModelParams& params, const nlohmann::json& extra) {
    nlohmann::json meta;
    meta["model"] = to_json(params.config);
    if (!extra.is_null()) meta["extra"] = extra;
    ad::save_checkpoint(path, params.named(), meta);
}

ModelParams load_model(const std::filesystem::path& path) {
    const auto ckpt = ad::load_checkpoint(path);
    ModelParams p;
    try {
        p.config = model_config_from_json(ckpt.metadata.at("model"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint lacks a model config: ") + e.what());
    } catch (const ParameterError& e) {
        throw IoError(std::string("checkpoint model config: ") + e.what());
    }
    // Shapes come from a freshly initialized model with the stored config.
    ModelParams reference = ModelParams::initialize(p.config, 0);
    auto expected = reference.named();
    if (ckpt.tensors.size() != expected.size()) throw IoError("checkpoint holds the wrong number of tensors");
    for (std::size_t k = 0; k < expected.size(); ++k) {
        const auto& stored = ckpt.tensors[k];
        if (stored.name != expected[k].name || stored.tensor.shape() != expected[k].tensor.shape()) {
            throw IoError("checkpoint tensor " + stored.name + " does not match the model layout");
        }
        auto dst = expected[k].tensor.mutable_values();
        const auto src = stored.tensor.values();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    reference.config = p.config;
    return reference;
}

GraphOperator GraphOperator::from_graph(const graph::Graph& graph) {
    auto index = std::make_shared<ad::RowIndex>();
    const std::size_t n = graph.num_nodes();
    index->offsets.reserve(n + 1);
    index->offsets.push_back(0);
    std::vector<double> flag(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto nbrs = graph.neighbors(i);
        index->indices.insert(index->indices.end(), nbrs.begin(), nbrs.end());
        index->offsets.push_back(index->indices.size());
        flag[i] = nbrs.empty() ? 0.0 : 1.0;
    }
    GraphOperator op;
    op.index = std::move(index);
    op.has_neighbors = constant_column(std::move(flag));
    op.num_nodes = n;
    return op;
}

Tensor encode_initial(const ModelParams& params, std::span<const double> x0, const RealGrid& static_covariates) {
    const std::size_t n = x0.size();
    const std::size_t dv = params.config.static_dim;
    if (static_covariates.rows() != n || static_covariates.cols() != dv) {
        throw DimensionError("encode_initial: static covariates are " + std::to_string(static_covariates.rows()) +
                             " x " + std::to_string(static_covariates.cols()) + ", expected " + std::to_string(n) +
                             " x " + std::to_string(dv));
    }
    std::vector<double> input(n * (1 + dv));
    for (std::size_t i = 0; i < n; ++i) {
        input[i * (1 + dv)] = (x0[i] - params.config.outcome_shift) / params.config.outcome_scale;
        for (std::size_t k = 0; k < dv; ++k) input[i * (1 + dv) + 1 + k] = static_covariates(i, k);
    }
    const Tensor x = Tensor::from_values({n, 1 + dv}, std::move(input));
    const Tensor hidden = ad::tanh(affine(x, params.encoder_w1, params.encoder_b1));
    return affine(hidden, params.encoder_w2, params.encoder_b2);
}

Tensor treatment_column(std::span<const int> row) {
    std::vector<double> values(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i] != 0 && row[i] != 1) throw DomainError("treatments must be 0 or 1");
        values[i] = row[i];
    }
    return constant_column(std::move(values));
}

Tensor ode_rhs(const ModelParams& params, const Tensor& z, const Tensor& treatment, const GraphOperator& graph) {
    if (z.rank() != 2 || z.rows() != graph.num_nodes || z.cols() != params.config.latent_dim) {
        throw DimensionError("ode_rhs: latent state has shape " + ad::shape_string(z.shape()));
    }
    if (treatment.rank() != 2 || treatment.rows() != graph.num_nodes || treatment.cols() != 1) {
        throw DimensionError("ode_rhs: treatment column has shape " + ad::shape_string(treatment.shape()));
    }
    const std::array<Tensor, 2> parts{z, treatment};
    const Tensor za = ad::concat_cols(parts);
    const Tensor self_term = affine(za, params.ode_w_self, params.ode_b_self);
    // mean_j (x_j W + b) = (mean_j x_j) W + b for nodes with neighbors; the
    // bias is masked out for isolated nodes.
    const Tensor nbr_input = ad::neighbor_mean(za, graph.index);
    const Tensor nbr_term = ad::matmul(nbr_input, params.ode_w_nbr) + ad::matmul(graph.has_neighbors, params.ode_b_nbr);
    return ad::tanh(self_term + nbr_term);
}

std::vector<Tensor> euler_solve(const Tensor& z0, std::size_t intervals, std::size_t substeps,
                                const VectorField& field) {
    if (substeps < 1) throw ParameterError("euler_solve: substeps must be at least 1");
    const double h = 1.0 / static_cast<double>(substeps);
    std::vector<Tensor> states{z0};
    Tensor z = z0;
    std::size_t step = 0;
    for (std::size_t interval = 0; interval < intervals; ++interval) {
        for (std::size_t s = 0; s < substeps; ++s, ++step) {
            z = z + ad::scale(field(z, interval), h);
            for (double v : z.values()) {
                if (!std::isfinite(v)) throw SolveError("non-finite latent state at Euler step " + std::to_string(step));
            }
        }
        states.push_back(z);
    }
    return states;
}

LatentTrajectory solve_trajectory(const ModelParams& params, const Tensor& z_start, const BinaryGrid& treatments,
                                  const GraphOperator& graph, std::size_t first_time, std::size_t intervals,
                                  std::size_t substeps) {
    if (first_time + intervals > treatments.rows()) {
        throw ParameterError("solve_trajectory: treatment path is too short for the requested intervals");
    }
    if (treatments.cols() != graph.num_nodes) throw DimensionError("solve_trajectory: treatment path width mismatch");
    std::vector<Tensor> columns;
    for (std::size_t k = 0; k < intervals; ++k) columns.push_back(treatment_column(treatments.row(first_time + k)));
    LatentTrajectory traj;
    traj.first_time = first_time;
    traj.states = euler_solve(z_start, intervals, substeps, [&](const Tensor& z, std::size_t interval) {
        return ode_rhs(params, z, columns[interval], graph);
    });
    return traj;
}

Tensor decode_outcome(const ModelParams& params, const Tensor& z) {
    const Tensor unit = affine(z, params.outcome_w, params.outcome_b);
    if (params.config.outcome_scale == 1.0 && params.config.outcome_shift == 0.0) return unit;
    return ad::add(ad::scale(unit, params.config.outcome_scale), Tensor::scalar(params.config.outcome_shift));
}

Tensor loss_outcome(std::span<const Tensor> predictions, const RealGrid& outcomes, std::size_t first_time) {
    if (predictions.empty()) throw DimensionError("loss_outcome: no predictions");
    if (first_time + predictions.size() > outcomes.rows()) {
        throw DimensionError("loss_outcome: more predicted timestamps than observed ones");
    }
    std::vector<double> target;
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        const auto& p = predictions[k];
        if (p.rank() != 2 || p.cols() != 1 || p.rows() != outcomes.cols()) {
            throw DimensionError("loss_outcome: prediction shape " + ad::shape_string(p.shape()) +
                                 " does not match " + std::to_string(outcomes.cols()) + " nodes");
        }
        const auto row = outcomes.row(first_time + k);
        target.insert(target.end(), row.begin(), row.end());
    }
    const Tensor stacked = ad::concat_rows(predictions);
    return ad::mean(ad::square(stacked - constant_column(std::move(target))));
}

Tensor treatment_logits(const ModelParams& params, const Tensor& z) {
    const Tensor hidden = ad::tanh(affine(z, params.treatment_w1, params.treatment_b1));
    return affine(hidden, params.treatment_w2, params.treatment_b2);
}

Tensor interference_prediction(const ModelParams& params, const Tensor& z_and_a) {
    const Tensor hidden = ad::tanh(affine(z_and_a, params.interference_w1, params.interference_b1));
    return affine(hidden, params.interference_w2, params.interference_b2);
}

Tensor loss_treatment(const ModelParams& params, std::span<const Tensor> states, const BinaryGrid& treatments,
                      bool reverse, std::size_t first_time) {
    if (states.empty()) throw DimensionError("loss_treatment: no latent states");
    if (first_time + states.size() > treatments.rows()) throw DimensionError("loss_treatment: too many states");
    std::vector<double> onehot;
    for (std::size_t k = 0; k < states.size(); ++k) {
        for (int a : treatments.row(first_time + k)) {
            if (a != 0 && a != 1) throw DomainError("loss_treatment: treatments must be 0 or 1");
            onehot.push_back(a == 0 ? 1.0 : 0.0);
            onehot.push_back(a == 1 ? 1.0 : 0.0);
        }
    }
    Tensor z = ad::concat_rows(states);
    if (reverse) z = ad::reverse_gradient(z);
    const std::size_t rows = z.rows();
    const Tensor log_probs = ad::log_softmax(treatment_logits(params, z));
    const Tensor picked = log_probs * Tensor::from_values({rows, 2}, std::move(onehot));
    return ad::scale(ad::sum(picked), -1.0 / static_cast<double>(rows));
}

Tensor loss_interference(const ModelParams& params, std::span<const Tensor> states, const BinaryGrid& treatments,
                         const RealGrid& interference, bool reverse, std::size_t first_time) {
    if (states.empty()) throw DimensionError("loss_interference: no latent states");
    if (first_time + states.size() > treatments.rows() || first_time + states.size() > interference.rows()) {
        throw DimensionError("loss_interference: too many states");
    }
    std::vector<Tensor> rows;
    std::vector<double> target;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const std::array<Tensor, 2> parts{states[k], treatment_column(treatments.row(first_time + k))};
        rows.push_back(ad::concat_cols(parts));
        for (double g : interference.row(first_time + k)) {
            if (!(g >= 0.0 && g <= 1.0)) throw DomainError("loss_interference: interference must lie in [0, 1]");
            target.push_back(g);
        }
    }
    Tensor za = ad::concat_rows(rows);
    if (reverse) za = ad::reverse_gradient(za);
    const Tensor pred = interference_prediction(params, za);
    return ad::mean(ad::square(pred - constant_column(std::move(target))));
}

Tensor loss_total(const Tensor& outcome, const Tensor& treatment, const Tensor& interference, double alpha_a,
                  double alpha_g) {
    if (!(alpha_a >= 0.0) || !(alpha_g >= 0.0)) throw ParameterError("loss_total: balancing weights must be >= 0");
    return outcome + ad::scale(treatment, alpha_a) + ad::scale(interference, alpha_g);
}

double loss_total(double outcome, double treatment, double interference, double alpha_a, double alpha_g) {
    if (!(alpha_a >= 0.0) || !(alpha_g >= 0.0)) throw ParameterError("loss_total: balancing weights must be >= 0");
    return outcome + alpha_a * treatment + alpha_g * interference;
}

}  // namespace godeflow::model
