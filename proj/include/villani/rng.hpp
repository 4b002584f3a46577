#pragma once

#include "villani/types.hpp"

#include <cstdint>
#include <random>

namespace villani {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Independent generator for draw/chain/sample `index` under `seed`.
/// The same (seed, index) pair always yields the same stream, so results do
/// not depend on how work is scheduled across threads.
Rng make_stream(std::uint64_t seed, std::uint64_t index);

Vector gaussian_vector(Index n, Rng& rng, double scale = 1.0);
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0);
Vector rademacher_vector(Index n, Rng& rng);
Vector unit_vector(Index n, Rng& rng);
double uniform(Rng& rng, double lo, double hi);

}  // namespace villani
