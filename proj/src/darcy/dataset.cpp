#include "villani/darcy/dataset.hpp"

#include "villani/parallel.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace villani::darcy {
namespace {

static_assert(std::endian::native == std::endian::little, "dataset IO assumes little-endian");

constexpr char kMagic[4] = {'D', 'R', 'C', 'Y'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw UsageError("dataset: truncated header");
  return v;
}

void put_grid(std::ostream& os, const Matrix& g) {
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j) {
      const double v = g(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

Matrix get_grid(std::istream& is, Index n) {
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double v = 0.0;
      is.read(reinterpret_cast<char*>(&v), sizeof v);
      g(i, j) = v;
    }
  if (!is) throw UsageError("dataset: truncated sample data");
  return g;
}

void moments(const std::vector<Matrix>& grids, double& mean, double& sd) {
  double sum = 0.0;
  double count = 0.0;
  for (const auto& g : grids) {
    sum += g.sum();
    count += static_cast<double>(g.size());
  }
  mean = sum / count;
  double ss = 0.0;
  for (const auto& g : grids) ss += (g.array() - mean).square().sum();
  sd = std::sqrt(ss / count);
}

}  // namespace

DarcyDataset generate_dataset(Index n, std::size_t count, std::uint64_t seed, unsigned threads,
                              const FieldConfig& cfg) {
  require(count >= 1, "generate_dataset: count must be positive");
  DarcyDataset ds;
  ds.n = n;
  ds.a.resize(count);
  ds.u.resize(count);
  parallel_for(count, threads, [&](std::size_t k) {
    Rng rng = make_stream(seed, k);
    DarcyField f = gen_darcy(n, rng, cfg);
    ds.a[k] = std::move(f.a);
    ds.u[k] = std::move(f.u);
  });
  return ds;
}

void write_dataset(const std::string& path, const DarcyDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("dataset: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(ds.n));
  put_u32(os, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t k = 0; k < ds.size(); ++k) {
    put_grid(os, ds.a[k]);
    put_grid(os, ds.u[k]);
  }
  if (!os) throw UsageError("dataset: write to '" + path + "' failed");
}

DarcyDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("dataset: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw UsageError("dataset: bad magic");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) throw UsageError("dataset: unsupported version");
  DarcyDataset ds;
  ds.n = get_u32(is);
  const std::uint32_t count = get_u32(is);
  for (std::uint32_t k = 0; k < count; ++k) {
    ds.a.push_back(get_grid(is, ds.n));
    ds.u.push_back(get_grid(is, ds.n));
  }
  return ds;
}

DarcyDataset slice(const DarcyDataset& ds, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= ds.size(), "dataset slice out of range");
  DarcyDataset out;
  out.n = ds.n;
  out.a.assign(ds.a.begin() + begin, ds.a.begin() + end);
  out.u.assign(ds.u.begin() + begin, ds.u.begin() + end);
  return out;
}

NormStats compute_stats(const DarcyDataset& train) {
  require(train.size() >= 1, "compute_stats: empty training set");
  NormStats s;
  moments(train.a, s.a_mean, s.a_std);
  moments(train.u, s.u_mean, s.u_std);
  if (!(s.a_std > 0.0) || !(s.u_std > 0.0))
    throw DomainError("compute_stats: zero standard deviation");
  return s;
}

DarcyDataset standardize(const DarcyDataset& ds, const NormStats& st) {
  DarcyDataset out = ds;
  for (auto& g : out.a) g = (g.array() - st.a_mean) / st.a_std;
  for (auto& g : out.u) g = (g.array() - st.u_mean) / st.u_std;
  return out;
}

DarcyDataset destandardize(const DarcyDataset& ds, const NormStats& st) {
  DarcyDataset out = ds;
  for (auto& g : out.a) g = g.array() * st.a_std + st.a_mean;
  for (auto& g : out.u) g = g.array() * st.u_std + st.u_mean;
  return out;
}

Matrix patchify(const Matrix& field, Index p) {
  const Index n = field.rows();
  require(field.cols() == n, "patchify: field must be square");
  require(p >= 1 && n % p == 0, "patchify: patch size must divide the grid");
  const Index m = n / p;
  Matrix tokens(m * m, p * p);
  for (Index bi = 0; bi < m; ++bi)
    for (Index bj = 0; bj < m; ++bj)
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) tokens(bi * m + bj, i * p + j) = field(bi * p + i, bj * p + j);
  return tokens;
}

Matrix unpatchify(const Matrix& tokens, Index n, Index p) {
  require(p >= 1 && n % p == 0, "unpatchify: patch size must divide the grid");
  const Index m = n / p;
  require(tokens.rows() == m * m && tokens.cols() == p * p, "unpatchify: token shape mismatch");
  Matrix field(n, n);
  for (Index bi = 0; bi < m; ++bi)
    for (Index bj = 0; bj < m; ++bj)
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) field(bi * p + i, bj * p + j) = tokens(bi * m + bj, i * p + j);
  return field;
}

}  // namespace villani::darcy
