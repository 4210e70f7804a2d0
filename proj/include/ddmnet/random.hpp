#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ddmnet/tensor.hpp"

namespace ddmnet {

using Rng = std::mt19937_64;

// Stable stream derivation: the same (seed, tag) always yields the same
// generator, independent of worker count or call order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);
inline Rng make_rng(std::uint64_t seed, std::string_view tag) { return Rng(derive_seed(seed, tag)); }

// Weights: uniform in +-sqrt(6 / fan_in).
Tensor uniform_parameter(Shape shape, std::size_t fan_in, Rng& rng);
Tensor normal_parameter(Shape shape, Rng& rng);
Tensor constant_parameter(Shape shape, double value);

}  // namespace ddmnet
