#include "villani/types.hpp"

namespace villani {

ParamPoint pack(const Matrix& a, const Matrix& b) {
  ParamPoint t(a.size() + b.size());
  t.head(a.size()) = Eigen::Map<const Vector>(a.data(), a.size());
  t.tail(b.size()) = Eigen::Map<const Vector>(b.data(), b.size());
  return t;
}

void unpack(const ParamPoint& t, Matrix& a, Matrix& b) {
  require(t.size() == a.size() + b.size(), "unpack: dimension mismatch");
  Eigen::Map<Vector>(a.data(), a.size()) = t.head(a.size());
  Eigen::Map<Vector>(b.data(), b.size()) = t.tail(b.size());
}

}  // namespace villani
