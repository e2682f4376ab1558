#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "godeflow/tensor.hpp"

namespace godeflow::ad {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameters. Moments are laid out
// in the order the parameters were registered.
class AdamState {
public:
    AdamState() = default;
    AdamState(std::span<const Tensor> params, AdamOptions options);

    const AdamOptions& options() const { return options_; }
    std::uint64_t step_count() const { return step_count_; }
    const std::vector<std::vector<double>>& first_moment() const { return first_moment_; }
    const std::vector<std::vector<double>>& second_moment() const { return second_moment_; }

    friend void adam_step(std::span<Tensor> params, AdamState& state);

private:
    AdamOptions options_;
    std::uint64_t step_count_ = 0;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
};

// Updates every parameter in place from its gradient, then clears the
// gradients. Throws StateError if a parameter has no gradient or the list
// does not match the one the state was built for.
void adam_step(std::span<Tensor> params, AdamState& state);

// Uniform in +-sqrt(6 / (fan_in + fan_out)), shape [fan_in, fan_out].
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace godeflow::ad
