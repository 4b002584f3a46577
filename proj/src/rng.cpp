#include "villani/rng.hpp"

namespace villani {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

Vector gaussian_vector(Index n, Rng& rng, double scale) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * nd(rng);
  return v;
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double scale) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill in column-major order so the draw sequence matches the storage order.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * nd(rng);
  return m;
}

Vector rademacher_vector(Index n, Rng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = (rng() >> 63) ? 1.0 : -1.0;
  return v;
}

Vector unit_vector(Index n, Rng& rng) {
  Vector v = gaussian_vector(n, rng);
  double norm = v.norm();
  while (norm == 0.0) {
    v = gaussian_vector(n, rng);
    norm = v.norm();
  }
  return v / norm;
}

double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> ud(lo, hi);
  return ud(rng);
}

}  // namespace villani
