#include "doctest.h"
#include "oracles.hpp"

#include "villani/regularizers.hpp"
#include "villani/rng.hpp"

#include <Eigen/QR>

#include <cmath>

using namespace villani;

namespace {

RegularizerSpec spec(RegKind kind, double lambda, double eps, Index n1, Index n2) {
  RegularizerSpec s;
  s.kind = kind;
  s.lambda = lambda;
  s.epsilon = eps;
  s.dims = {n1, n2};
  return s;
}

}  // namespace

TEST_CASE("regularizer values") {
  for (RegKind k : {RegKind::None, RegKind::LogAmplified, RegKind::Power})
    CHECK(reg_value(ParamPoint::Zero(5), spec(k, 1.0, 0.5, 2, 3)) == 0.0);

  ParamPoint T = ParamPoint::Zero(4);
  T[0] = 1.0;
  CHECK(reg_value(T, spec(RegKind::LogAmplified, 2.0, 0.0, 2, 2)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));

  Rng rng = make_stream(1, 0);
  const ParamPoint x = gaussian_vector(6, rng);
  CHECK(std::abs(reg_value(x, spec(RegKind::Power, 0.7, 1e-8, 3, 3)) - 0.35 * x.squaredNorm()) <= 1e-6);
  CHECK(reg_value(x, spec(RegKind::LogAmplified, 0.0, 0.0, 3, 3)) == 0.0);
  CHECK(reg_value(x, spec(RegKind::None, 3.0, 0.0, 3, 3)) == 0.0);
  CHECK_THROWS_AS(reg_value(x, spec(RegKind::Power, 1.0, 0.5, 3, 2)), UsageError);
  CHECK_THROWS_AS(spec(RegKind::Power, 1.0, 0.0, 3, 3).validate(), UsageError);
  CHECK_THROWS_AS(spec(RegKind::LogAmplified, -1.0, 0.0, 3, 3).validate(), UsageError);
}

TEST_CASE("regularizer gradients") {
  CHECK(reg_grad(ParamPoint::Zero(4), spec(RegKind::LogAmplified, 1.0, 0, 2, 2)).norm() == 0.0);
  CHECK(reg_grad(ParamPoint::Zero(4), spec(RegKind::Power, 1.0, 0.3, 2, 2)).norm() == 0.0);

  ParamPoint e1 = ParamPoint::Zero(3);
  e1[0] = 1.0;
  const ParamPoint g = reg_grad(e1, spec(RegKind::Power, 2.0, 1.0, 3, 0));
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(g.tail(2).norm() == 0.0);

  Rng rng = make_stream(2, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n1 = 1 + static_cast<Index>(rng() % 8), n2 = 1 + static_cast<Index>(rng() % 8);
    const ParamPoint T = gaussian_vector(n1 + n2, rng, uniform(rng, 0.1, 3.0));
    for (RegKind k : {RegKind::LogAmplified, RegKind::Power}) {
      const RegularizerSpec s = spec(k, uniform(rng, 0.1, 2.0), uniform(rng, 0.1, 1.5), n1, n2);
      auto f = [&](const Vector& x) { return reg_value(x, s); };
      CHECK(oracle::rel_err(reg_grad(T, s), oracle::fd_gradient(f, T, 1e-6)) <= 1e-7);
    }
  }
}

TEST_CASE("regularizer Laplacians") {
  CHECK(reg_laplacian(ParamPoint::Zero(4), spec(RegKind::LogAmplified, 1.0, 0, 2, 2)) == 0.0);
  CHECK(reg_laplacian(ParamPoint::Zero(4), spec(RegKind::Power, 1.0, 1.5, 2, 2)) == 0.0);

  Rng rng = make_stream(3, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n1 = 1 + static_cast<Index>(rng() % 10), n2 = 1 + static_cast<Index>(rng() % 10);
    const ParamPoint T = gaussian_vector(n1 + n2, rng, uniform(rng, 0.2, 3.0));
    for (RegKind k : {RegKind::LogAmplified, RegKind::Power}) {
      const RegularizerSpec s = spec(k, uniform(rng, 0.1, 2.0), uniform(rng, 0.1, 1.5), n1, n2);
      auto f = [&](const Vector& x) { return reg_value(x, s); };
      CHECK(oracle::rel_err(reg_laplacian(T, s), oracle::fd_laplacian(f, T, 1e-4)) <= 1e-5);
    }
  }
}

TEST_CASE("regularizers depend only on block norms") {
  Rng rng = make_stream(4, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n1 = 2 + static_cast<Index>(rng() % 5), n2 = 2 + static_cast<Index>(rng() % 5);
    ParamPoint T = gaussian_vector(n1 + n2, rng);
    const Matrix Q = Eigen::HouseholderQR<Matrix>(gaussian_matrix(n1, n1, rng)).householderQ();
    ParamPoint R = T;
    R.head(n1) = Q * T.head(n1);
    for (RegKind k : {RegKind::LogAmplified, RegKind::Power}) {
      const RegularizerSpec s = spec(k, 0.9, 0.4, n1, n2);
      CHECK(std::abs(reg_value(T, s) - reg_value(R, s)) <= 1e-12);
    }
  }
}

TEST_CASE("regularizers are monotone along rays") {
  Rng rng = make_stream(5, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const ParamPoint u = unit_vector(8, rng);
    for (RegKind k : {RegKind::LogAmplified, RegKind::Power}) {
      const RegularizerSpec s = spec(k, 1e-3, 0.5, 4, 4);
      double prev = -1.0;
      for (int e = 0; e <= 10; ++e) {
        const double v = reg_value(std::pow(2.0, e) * u, s);
        CHECK(v > prev);
        prev = v;
      }
    }
  }
}

TEST_CASE("power Laplacian is below the published bound") {
  Rng rng = make_stream(6, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const Index n1 = 1 + static_cast<Index>(rng() % 10), n2 = 1 + static_cast<Index>(rng() % 10);
    const ParamPoint T = gaussian_vector(n1 + n2, rng, std::pow(10.0, uniform(rng, -2.0, 3.0)));
    const RegularizerSpec s = spec(RegKind::Power, uniform(rng, 1e-4, 1.0), uniform(rng, 1e-6, 2.0), n1, n2);
    CHECK(reg_laplacian(T, s) <= power_laplacian_bound(T, s) * (1.0 + 1e-12));
  }
}
