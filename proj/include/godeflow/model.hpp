#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"
#include "godeflow/array2d.hpp"
#include "godeflow/checkpoint.hpp"
#include "godeflow/graph.hpp"
#include "godeflow/tensor.hpp"

namespace godeflow::model {

using ad::Tensor;

struct ModelConfig {
    std::size_t static_dim = 10;
    std::size_t encoder_hidden = 64;
    std::size_t latent_dim = 64;
    std::size_t head_hidden = 64;
    std::size_t substeps = 4;
    // Fixed affine map between the network's unit-scale output and outcome
    // units; also applied (inverted) to X^0 on the way into the encoder.
    double outcome_shift = 0.0;
    double outcome_scale = 1.0;
};

nlohmann::json to_json(const ModelConfig& config);
// Strict: unknown keys raise ParameterError.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

enum class ParamGroup { encoder, ode, outcome, treatment_head, interference_head };

inline constexpr std::array<ParamGroup, 5> kAllGroups{ParamGroup::encoder, ParamGroup::ode, ParamGroup::outcome,
                                                      ParamGroup::treatment_head, ParamGroup::interference_head};

const char* group_name(ParamGroup group);

// Learnable weights of the encoder f, the vector field phi, the outcome
// decoder d_Y and the two adversarial heads d_A and d_G. Weight matrices are
// [fan_in, fan_out]; biases are [1, fan_out]. Copies share storage; use
// clone() for an independent copy.
struct ModelParams {
    ModelConfig config;

    // f: [X^0, V] -> hidden -> latent
    Tensor encoder_w1, encoder_b1, encoder_w2, encoder_b2;
    // phi: self and neighbor maps over [Z, A]
    Tensor ode_w_self, ode_b_self, ode_w_nbr, ode_b_nbr;
    // d_Y: latent -> 1
    Tensor outcome_w, outcome_b;
    // d_A: latent -> hidden -> 2 logits
    Tensor treatment_w1, treatment_b1, treatment_w2, treatment_b2;
    // d_G: [latent, A] -> hidden -> 1
    Tensor interference_w1, interference_b1, interference_w2, interference_b2;

    // Glorot-uniform weights and zero biases, seeded.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

    std::vector<Tensor> group(ParamGroup g) const;
    std::vector<Tensor> all() const;
    std::vector<ad::NamedTensor> named() const;
    ModelParams clone() const;
    void zero_group(ParamGroup g);
    void clear_grads();
};

void save_model(const std::filesystem::path& path, const ModelParams& params, const nlohmann::json& extra = {});
// Throws IoError for malformed files or tensors that do not fit the stored config.
ModelParams load_model(const std::filesystem::path& path);

// Neighbor structure of a graph in the form the vector field consumes.
struct GraphOperator {
    std::shared_ptr<const ad::RowIndex> index;
    Tensor has_neighbors;  // [N, 1] of 0/1
    std::size_t num_nodes = 0;

    static GraphOperator from_graph(const graph::Graph& graph);
};

// Z^0 = f(X^0, V): [N, latent].
Tensor encode_initial(const ModelParams& params, std::span<const double> x0, const RealGrid& static_covariates);

// phi(Z, A) = tanh([Z, A] W_self + b_self + mean_{j in N(i)} ([Z_j, A_j] W_nbr + b_nbr)).
// `treatment` is an [N, 1] column of 0/1.
Tensor ode_rhs(const ModelParams& params, const Tensor& z, const Tensor& treatment, const GraphOperator& graph);

// Right-hand side evaluated inside observation interval `interval`.
using VectorField = std::function<Tensor(const Tensor& z, std::size_t interval)>;

// Explicit Euler with step 1/substeps over `intervals` unit intervals.
// Returns the state at every observation time (intervals + 1 entries).
// Throws SolveError on a non-finite state.
std::vector<Tensor> euler_solve(const Tensor& z0, std::size_t intervals, std::size_t substeps,
                                const VectorField& field);

struct LatentTrajectory {
    // Z at observation times first_time .. first_time + intervals.
    std::vector<Tensor> states;
    std::size_t first_time = 0;
};

// Treatments are piecewise-constant on each interval, taken at its left endpoint.
LatentTrajectory solve_trajectory(const ModelParams& params, const Tensor& z_start, const BinaryGrid& treatments,
                                  const GraphOperator& graph, std::size_t first_time, std::size_t intervals,
                                  std::size_t substeps);

// [N, 1] of 0/1 from one treatment row.
Tensor treatment_column(std::span<const int> row);

// Y_hat = shift + scale * (Z w + b): [N, 1].
Tensor decode_outcome(const ModelParams& params, const Tensor& z);

// Mean squared error over every node and every listed timestamp;
// predictions[k] is compared with outcomes.row(first_time + k).
Tensor loss_outcome(std::span<const Tensor> predictions, const RealGrid& outcomes, std::size_t first_time = 0);

// Cross-entropy of d_A(r(Z)) against A averaged over nodes and timestamps.
// With reverse = false the reversal is replaced by the identity.
Tensor loss_treatment(const ModelParams& params, std::span<const Tensor> states, const BinaryGrid& treatments,
                      bool reverse = true, std::size_t first_time = 0);

// Squared error of d_G(r([Z, A])) against G averaged over nodes and timestamps.
Tensor loss_interference(const ModelParams& params, std::span<const Tensor> states, const BinaryGrid& treatments,
                         const RealGrid& interference, bool reverse = true, std::size_t first_time = 0);

// L = L_Y + alpha_a L_A + alpha_g L_G. Throws ParameterError for negative weights.
Tensor loss_total(const Tensor& outcome, const Tensor& treatment, const Tensor& interference, double alpha_a,
                  double alpha_g);
double loss_total(double outcome, double treatment, double interference, double alpha_a, double alpha_g);

// d_A logits for a stack of latents: [rows, 2].
Tensor treatment_logits(const ModelParams& params, const Tensor& z);
// d_G prediction for a stack of [Z, A] rows: [rows, 1].
Tensor interference_prediction(const ModelParams& params, const Tensor& z_and_a);

}  // namespace godeflow::model
