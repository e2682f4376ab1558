#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "godeflow/array2d.hpp"
#include "godeflow/graph.hpp"

namespace godeflow::sim {

// PK-PD simulation parameters. Defaults reproduce the published setting; the
// mechanism vectors w_a and w_x are drawn by draw_mechanisms().
struct SimParams {
    // Confounding strengths: own / neighbor time-dependent, own / neighbor static.
    double gamma_a = 10.0;
    double gamma_n = 3.3;
    double gamma_f = 10.0;
    double gamma_g = 3.3;
    double delta_a = 5.0;
    double delta_n = 5.0;
    // Covariate strengths in the outcome model.
    double rho_u = -0.001;
    double rho_n = -0.00033;
    double rho_f = 0.001;
    double rho_g = 0.00033;
    // Treatment and interference effect strengths.
    double beta_a = 0.03;
    double beta_n = 0.01;
    double carrying_capacity = 15.0;
    double full_dose = 1.0;
    double x_min = 0.1;
    double x_max = 10.0;
    double noise_std = 0.01;
    std::size_t static_dim = 10;
    std::vector<double> w_a;
    std::vector<double> w_x;
    double dt = 0.25;
    std::size_t horizon = 10;
    std::uint64_t seed = 0;

    // Throws ParameterError on any violated invariant.
    void validate() const;
    // Euler substeps per unit observation interval (1 / dt).
    std::size_t substeps() const;
};

// Fills w_a and w_x with Normal(0, 1/sqrt(d_v)) entries derived from params.seed.
void draw_mechanisms(SimParams& params);

SimParams default_params(std::uint64_t seed);

nlohmann::json to_json(const SimParams& params);
// Strict: unknown keys raise ParameterError. Missing keys keep `base` values.
SimParams sim_params_from_json(const nlohmann::json& j, SimParams base = {});

RealGrid sample_static_covariates(std::size_t num_nodes, std::size_t static_dim, std::uint64_t seed);

// Neighbor terms are dropped when has_neighbors is false.
double treatment_probability(double xbar_i, double nbr_xbar_mean, double e_i, double nbr_e_mean,
                             const SimParams& params, bool has_neighbors = true);

double update_dose(double prev_dose, int treated_now, const SimParams& params);

// Neighbor aggregates the PK-PD right-hand side needs for one node.
struct NeighborTerms {
    bool has_neighbors = false;
    double mean_x = 0.0;
    double mean_static = 0.0;
    double mean_dose = 0.0;
};

// dX_i/dt for one node. Throws DomainError for non-positive x.
double pkpd_derivative(double x_i, double static_term, double dose, double noise, const NeighborTerms& nbr,
                       const SimParams& params);

struct ObservationalDataset {
    graph::Graph graph;
    RealGrid static_covariates;  // N x d_v
    RealGrid covariates;         // (T+1) x N; the outcome Y is this array
    BinaryGrid treatments;       // (T+1) x N
    RealGrid interference;       // (T+1) x N
    RealGrid dose;               // (T+1) x N
    RealGrid noise;              // (T+1) x N, replayed by the oracle
    SimParams params;
    std::size_t clamp_count = 0;

    std::size_t num_nodes() const { return graph.num_nodes(); }
    std::size_t horizon() const { return params.horizon; }
    const RealGrid& outcomes() const { return covariates; }
    // Observation times t_0..t_T with unit spacing.
    std::vector<double> timestamps() const;
};

ObservationalDataset simulate_trajectory(const graph::Graph& graph, const SimParams& params);

// Treatments from start_time onward are replaced. Either an explicit mask
// ((T + 1 - start_time) x N, 1 = flip) or a ratio of units whose treatments
// are all flipped, chosen with `seed`.
struct InterventionSpec {
    double flip_ratio = 0.5;
    std::optional<BinaryGrid> flip_mask;
    std::size_t start_time = 0;
    std::uint64_t seed = 0;
};

struct CounterfactualTrajectory {
    BinaryGrid treatments;
    RealGrid interference;
    RealGrid dose;
    RealGrid covariates;
    std::size_t start_time = 0;
    std::size_t clamp_count = 0;
};

// The full (T+1) x N treatment path after the intervention.
BinaryGrid counterfactual_treatments(const ObservationalDataset& dataset, const InterventionSpec& spec);

// Re-integrates from the factual state at `start_time` under `treatments`,
// reusing the stored noise draws.
CounterfactualTrajectory replay_treatments(const ObservationalDataset& dataset, const BinaryGrid& treatments,
                                           std::size_t start_time);

CounterfactualTrajectory counterfactual_oracle(const ObservationalDataset& dataset, const InterventionSpec& spec);

struct DatasetSummary {
    double treatment_rate = 0.0;
    double mean_interference = 0.0;
    double mean_outcome = 0.0;
    std::size_t clamp_count = 0;
};

DatasetSummary summarize(const ObservationalDataset& dataset);

// Directory layout: manifest.json, V.csv, X.csv, A.csv, Y.csv, G.csv, D.csv,
// noise.csv and edges.txt. CSV rows are timestamps (nodes for V), values are
// printed with 17 significant digits so a reload is bit-exact.
void save_dataset(const std::filesystem::path& dir, const ObservationalDataset& dataset);
ObservationalDataset load_dataset(const std::filesystem::path& dir);

}  // namespace godeflow::sim
