#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "godeflow/graph.hpp"
#include "godeflow/model.hpp"
#include "godeflow/simulator.hpp"
#include "godeflow/trainer.hpp"

namespace godeflow::train {

struct DegreeBucket {
    std::size_t lower = 0;
    std::optional<std::size_t> upper;  // empty for the open-ended bucket
    std::size_t node_count = 0;
    double mse = 0.0;  // NaN when the bucket is empty

    std::string label() const;
};

struct BalanceReport {
    double treatment_accuracy = 0.0;
    double interference_r2 = 0.0;
};

struct EvalReport {
    std::vector<double> per_step_mse;
    double overall_mse = 0.0;
    std::vector<DegreeBucket> degree_buckets;
    std::optional<BalanceReport> balance;
    double flip_ratio = 0.0;
    std::size_t start_time = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

// Upper bounds of the degree buckets: (0,5], (5,10], (10,20], (20,30],
// (30,40], (40,50], then >50. Isolated nodes fall into the first bucket.
inline constexpr std::size_t kDegreeBounds[] = {5, 10, 20, 30, 40, 50};

// Predicts outcomes at start+1 .. start+horizon under a full (T+1) x N
// treatment path; returns a horizon x N grid.
class CounterfactualPredictor {
public:
    virtual ~CounterfactualPredictor() = default;
    virtual RealGrid predict(const sim::ObservationalDataset& dataset, const BinaryGrid& treatments,
                             std::size_t start_time, std::size_t horizon) const = 0;
};

// Continues the factual latent at start_time under the new path.
class ModelPredictor final : public CounterfactualPredictor {
public:
    explicit ModelPredictor(model::ModelParams params) : params_(std::move(params)) {}
    RealGrid predict(const sim::ObservationalDataset& dataset, const BinaryGrid& treatments,
                     std::size_t start_time, std::size_t horizon) const override;

private:
    model::ModelParams params_;
};

// The simulator itself; scores zero error.
class OraclePredictor final : public CounterfactualPredictor {
public:
    RealGrid predict(const sim::ObservationalDataset& dataset, const BinaryGrid& treatments,
                     std::size_t start_time, std::size_t horizon) const override;
};

class ConstantPredictor final : public CounterfactualPredictor {
public:
    explicit ConstantPredictor(double value) : value_(value) {}
    RealGrid predict(const sim::ObservationalDataset& dataset, const BinaryGrid& treatments,
                     std::size_t start_time, std::size_t horizon) const override;

private:
    double value_;
};

// Throws ParameterError unless 1 <= horizon and start_time + horizon <= T.
EvalReport evaluate_counterfactual(const CounterfactualPredictor& predictor, const sim::ObservationalDataset& dataset,
                                   const sim::InterventionSpec& spec, std::size_t horizon = 5);
EvalReport evaluate_counterfactual(const model::ModelParams& params, const sim::ObservationalDataset& dataset,
                                   const sim::InterventionSpec& spec, std::size_t horizon = 5);

// Post-hoc probes on frozen features: a ridge-stabilized logistic classifier
// for the treatment and a ridge regressor [features, A] -> G, fitted on a
// seeded random split and scored on the held-out rows.
BalanceReport balance_from_features(const RealGrid& features, std::span<const int> treatments,
                                    std::span<const double> interference, double holdout_fraction,
                                    std::uint64_t seed = 0);

// Features are the factual latents Z^t_i for every node and every t_0..t_T.
BalanceReport balance_diagnostics(const model::ModelParams& params, const sim::ObservationalDataset& dataset,
                                  double holdout_fraction = 0.3, std::uint64_t seed = 0);

// Rows are (t, i) pairs in time-major order; columns are latent coordinates.
RealGrid latent_features(const model::ModelParams& params, const sim::ObservationalDataset& dataset);

// Simulates a fresh trajectory on `graph` and evaluates the model on it.
EvalReport evaluate_on_graph(const model::ModelParams& params, const graph::Graph& graph,
                             const sim::SimParams& sim_params, const sim::InterventionSpec& spec,
                             std::size_t horizon = 5);

// evaluate_on_graph on the test subgraph after checking the partition is
// disjoint. `sim_params` should carry a seed distinct from the training run.
EvalReport generalization_eval(const model::ModelParams& params, const graph::GraphPartition& partition,
                               const sim::SimParams& sim_params, const sim::InterventionSpec& spec,
                               std::size_t horizon = 5);

// Header: node,timestamp,z0,...,z{d-1},A,G. One row per (node, timestamp),
// node-major.
void export_latents(const model::ModelParams& params, const sim::ObservationalDataset& dataset,
                    const std::filesystem::path& path);

// Header: flip_ratio,start_time,step_1,...,step_H,overall_mse,treatment_accuracy,interference_r2
std::string report_csv_header(std::size_t horizon);
std::string report_csv_row(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);
// Header: degree_range,node_count,mse
void write_degree_report(const std::filesystem::path& path, const EvalReport& report);
// Header: iteration,loss,value,outcome,treatment,interference,validation
void write_loss_history(const std::filesystem::path& path, std::span<const LossRecord> history);

}  // namespace godeflow::train
