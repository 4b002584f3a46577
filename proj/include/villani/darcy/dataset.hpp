#pragma once

#include "villani/darcy/field.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace villani::darcy {

struct DarcyDataset {
  Index n = 0;
  std::vector<Matrix> a;
  std::vector<Matrix> u;

  std::size_t size() const { return a.size(); }
};

/// Sample k uses stream (seed, k); generation is parallel over samples.
DarcyDataset generate_dataset(Index n, std::size_t count, std::uint64_t seed,
                              unsigned threads = 1, const FieldConfig& cfg = {});

/// Binary layout: "DRCY", u32 version, u32 n, u32 count, then per sample the
/// a grid followed by the u grid, row-major little-endian f64.
void write_dataset(const std::string& path, const DarcyDataset& ds);
DarcyDataset read_dataset(const std::string& path);

DarcyDataset slice(const DarcyDataset& ds, std::size_t begin, std::size_t end);

/// Scalar mean / std per field type.
struct NormStats {
  double a_mean = 0.0, a_std = 1.0;
  double u_mean = 0.0, u_std = 1.0;
};

/// Throws DomainError when either field type has zero spread.
NormStats compute_stats(const DarcyDataset& train);
DarcyDataset standardize(const DarcyDataset& ds, const NormStats& stats);
DarcyDataset destandardize(const DarcyDataset& ds, const NormStats& stats);

/// t x p^2 tokens; row-major patch order, row-major pixels inside a patch.
Matrix patchify(const Matrix& field, Index p);
Matrix unpatchify(const Matrix& tokens, Index n, Index p);

}  // namespace villani::darcy
