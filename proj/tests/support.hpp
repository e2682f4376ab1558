#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "godeflow/tensor.hpp"

namespace testing {

// Component-wise |analytic - numeric| / max(|analytic|, |numeric|, floor).
// The floor keeps components that are zero up to roundoff from dominating.
struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

inline GradCheck check_gradients(const std::function<godeflow::ad::Tensor()>& loss,
                                 std::vector<godeflow::ad::Tensor> params, double h = 1e-5, double floor = 1e-4) {
    for (auto& p : params) p.clear_grad();
    loss().backward();
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        if (p.has_grad()) analytic.emplace_back(p.grad().begin(), p.grad().end());
        else analytic.emplace_back(p.numel(), 0.0);
        p.clear_grad();
    }
    GradCheck out;
    godeflow::ad::NoGradGuard no_grad;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto values = params[k].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = loss().item();
            values[i] = saved - h;
            const double down = loss().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
            ++out.checked;
        }
    }
    return out;
}

inline godeflow::ad::Tensor random_tensor(godeflow::ad::Shape shape, std::mt19937_64& rng, bool requires_grad = true,
                                          double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(godeflow::ad::shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return godeflow::ad::Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// Fresh scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / ("godeflow_" + name + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace testing
