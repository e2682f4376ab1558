#pragma once

#include <cstdint>

#include "godeflow/graph.hpp"
#include "godeflow/model.hpp"
#include "godeflow/simulator.hpp"
#include "godeflow/trainer.hpp"

namespace testing {

// Six nodes with one isolated vertex, three observation intervals.
inline godeflow::sim::ObservationalDataset tiny_dataset(std::uint64_t seed = 0) {
    const std::vector<godeflow::graph::Edge> edges{{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}};
    const auto g = godeflow::graph::build_graph(6, edges);
    auto p = godeflow::sim::default_params(seed);
    p.horizon = 3;
    p.gamma_a = 1.0;
    p.gamma_f = 1.0;
    return godeflow::sim::simulate_trajectory(g, p);
}

inline godeflow::model::ModelParams tiny_model(const godeflow::sim::ObservationalDataset& ds, std::uint64_t seed = 1,
                                               std::size_t latent = 8, std::size_t hidden = 64) {
    godeflow::model::ModelConfig c;
    c.latent_dim = latent;
    c.encoder_hidden = hidden;
    c.head_hidden = hidden;
    c.static_dim = ds.params.static_dim;
    c.substeps = 2;
    c = godeflow::train::fit_outcome_scaling(c, ds);
    return godeflow::model::ModelParams::initialize(c, seed);
}

}  // namespace testing
