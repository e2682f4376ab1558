#pragma once

#include <cstdint>
#include <random>

namespace godeflow {

// Independent streams derived from one user seed, so that changing how many
// draws one stage makes never shifts another stage's numbers.
enum class RngStream : std::uint32_t {
    graph = 1,
    partition,
    static_covariates,
    mechanisms,
    initial_state,
    treatment,
    noise,
    intervention,
    weights,
    diagnostics,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream, std::uint64_t salt = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(salt),
                      static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace godeflow
