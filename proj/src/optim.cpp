#include "godeflow/optim.hpp"

#include <cmath>
#include <string>

#include "godeflow/errors.hpp"

namespace godeflow::ad {

AdamState::AdamState(std::span<const Tensor> params, AdamOptions options) : options_(options) {
    for (const auto& p : params) {
        first_moment_.emplace_back(p.numel(), 0.0);
        second_moment_.emplace_back(p.numel(), 0.0);
    }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
    if (params.size() != state.first_moment_.size()) {
        throw StateError("adam_step: state holds " + std::to_string(state.first_moment_.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].has_grad()) throw StateError("adam_step: parameter " + std::to_string(p) + " has no gradient");
        if (params[p].numel() != state.first_moment_[p].size()) {
            throw StateError("adam_step: parameter " + std::to_string(p) + " changed size");
        }
    }

    const auto& opt = state.options_;
    ++state.step_count_;
    const double t = static_cast<double>(state.step_count_);
    const double correction1 = 1.0 - std::pow(opt.beta1, t);
    const double correction2 = 1.0 - std::pow(opt.beta2, t);

    for (std::size_t p = 0; p < params.size(); ++p) {
        auto values = params[p].mutable_values();
        const auto grad = params[p].grad();
        auto& m = state.first_moment_[p];
        auto& v = state.second_moment_[p];
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double g = grad[k];
            m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g;
            v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g * g;
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            values[k] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
        }
        params[p].clear_grad();
    }
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(fan_in * fan_out);
    for (double& v : values) v = dist(rng);
    return Tensor::from_values({fan_in, fan_out}, std::move(values), true);
}

}  // namespace godeflow::ad
