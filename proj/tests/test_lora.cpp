#include "doctest.h"
#include "oracles.hpp"

#include "villani/lora.hpp"
#include "villani/potential.hpp"
#include "villani/rng.hpp"

#include <cmath>
#include <vector>

using namespace villani;

namespace {

LoraParams random_params(Index p, Index d, Index r, Rng& rng, double scale = 1.0) {
  return {gaussian_matrix(p, r, rng, scale), gaussian_matrix(d, r, rng, scale),
          gaussian_vector(p, rng)};
}

const BoundedActivation kTanh{ActivationKind::Tanh};
const BoundedActivation kSigmoid{ActivationKind::Sigmoid};

}  // namespace

TEST_CASE("activation bounds are suprema") {
  for (const auto& act : {kTanh, kSigmoid}) {
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i <= 2000000; ++i) {
      const double x = -50.0 + 100.0 * i / 2000000.0;
      m0 = std::max(m0, std::abs(act.value(x)));
      m1 = std::max(m1, std::abs(act.d1(x)));
      m2 = std::max(m2, std::abs(act.d2(x)));
    }
    CHECK(m0 <= act.B_sigma());
    CHECK(m1 <= act.B_sigma1());
    CHECK(m2 <= act.B_sigma2());
    // and they are attained up to grid resolution
    CHECK(m1 >= act.B_sigma1() * (1.0 - 1e-6));
    CHECK(m2 >= act.B_sigma2() * (1.0 - 1e-6));
  }
  CHECK(kTanh.B_sigma2() == doctest::Approx(4.0 / (3.0 * std::sqrt(3.0))));
  CHECK(kSigmoid.B_sigma1() == 0.25);
  CHECK_THROWS_AS(BoundedActivation::parse("relu"), UsageError);
}

TEST_CASE("activation derivatives match finite differences") {
  for (const auto& act : {kTanh, kSigmoid})
    for (double x = -4.0; x <= 4.0; x += 0.37) {
      const double h = 1e-5;
      CHECK(std::abs((act.value(x + h) - act.value(x - h)) / (2 * h) - act.d1(x)) <= 1e-9);
      CHECK(std::abs((act.d1(x + h) - act.d1(x - h)) / (2 * h) - act.d2(x)) <= 1e-9);
    }
}

TEST_CASE("lora_forward examples") {
  Rng rng = make_stream(2, 0);
  LoraParams p = random_params(3, 4, 2, rng);
  p.U.setZero();
  LoraSample s{gaussian_vector(4, rng), 0.3};
  CHECK(lora_forward(s, p, kTanh).z == 0.0);

  LoraParams one{Matrix::Ones(1, 1), Matrix::Ones(1, 1), Vector::Ones(1)};
  LoraSample x1{Vector::Ones(1), 0.0};
  CHECK(lora_forward(x1, one, kTanh).z == doctest::Approx(0.761594).epsilon(1e-6));

  for (int trial = 0; trial < 200; ++trial) {
    LoraParams q = random_params(4, 3, 2, rng, 3.0);
    LoraSample xs{gaussian_vector(3, rng), 0.0};
    const double bound = q.a.norm() * std::sqrt(4.0) * kTanh.B_sigma();
    CHECK(std::abs(lora_forward(xs, q, kTanh).z) <= bound);
  }

  LoraSample bad{gaussian_vector(5, rng), 0.0};
  CHECK_THROWS_AS(lora_forward(bad, random_params(3, 4, 2, rng), kTanh), UsageError);
}

TEST_CASE("lora_grad_z special cases") {
  Rng rng = make_stream(3, 0);
  LoraParams p = random_params(3, 4, 2, rng);
  LoraSample s{gaussian_vector(4, rng), 0.0};
  LoraParams v0 = p;
  v0.V.setZero();
  CHECK(lora_grad_z(s, v0, kTanh).dU.cwiseAbs().maxCoeff() == 0.0);
  LoraSample x0{Vector::Zero(4), 0.0};
  const FactorGrad g = lora_grad_z(x0, p, kTanh);
  CHECK(g.dU.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.dV.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lora_grad_z and lora_loss_grad match finite differences") {
  Rng rng = make_stream(5, 0);
  double worst_z = 0.0, worst_l = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index p = 1 + static_cast<Index>(rng() % 5);
    const Index d = 1 + static_cast<Index>(rng() % 5);
    const Index r = 1 + static_cast<Index>(rng() % 5);
    const BoundedActivation& act = trial % 2 ? kTanh : kSigmoid;
    LoraParams q = random_params(p, d, r, rng, 0.7);
    std::vector<LoraSample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({gaussian_vector(d, rng), gaussian_vector(1, rng)[0]});
    auto with = [&](const Vector& T) {
      LoraParams c = q;
      unpack(T, c.U, c.V);
      return c;
    };
    const Vector T0 = pack(q.U, q.V);
    auto fz = [&](const Vector& T) { return lora_forward(batch[0], with(T), act).z; };
    const FactorGrad gz = lora_grad_z(batch[0], q, act);
    worst_z = std::max(worst_z, oracle::rel_err(pack(gz.dU, gz.dV), oracle::fd_gradient(fz, T0)));
    auto fl = [&](const Vector& T) { return lora_loss(batch, with(T), act); };
    const FactorGrad gl = lora_loss_grad(batch, q, act);
    worst_l = std::max(worst_l, oracle::rel_err(pack(gl.dU, gl.dV), oracle::fd_gradient(fl, T0)));
  }
  CHECK(worst_z <= 1e-6);
  CHECK(worst_l <= 1e-6);
}

TEST_CASE("lora_loss_grad reductions") {
  Rng rng = make_stream(7, 0);
  LoraParams q = random_params(3, 3, 2, rng);
  std::vector<LoraSample> batch;
  for (int i = 0; i < 5; ++i) {
    LoraSample s{gaussian_vector(3, rng), 0.0};
    s.y = lora_forward(s, q, kTanh).z;
    batch.push_back(s);
  }
  const FactorGrad g = lora_loss_grad(batch, q, kTanh);
  CHECK(g.dU.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(g.dV.cwiseAbs().maxCoeff() <= 1e-15);

  LoraSample one{gaussian_vector(3, rng), 0.4};
  const double res = lora_forward(one, q, kTanh).z - one.y;
  const FactorGrad gz = lora_grad_z(one, q, kTanh);
  const FactorGrad gl = lora_loss_grad(std::span(&one, 1), q, kTanh);
  CHECK((gl.dU - res * gz.dU).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((gl.dV - res * gz.dV).cwiseAbs().maxCoeff() <= 1e-15);

  std::vector<LoraSample> empty;
  CHECK_THROWS_AS(lora_loss_grad(empty, q, kTanh), UsageError);
}

TEST_CASE("lora_laplacian matches finite differences") {
  Rng rng = make_stream(11, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const Index p = 1 + static_cast<Index>(rng() % 4);
    const Index d = 1 + static_cast<Index>(rng() % 4);
    const Index r = 1 + static_cast<Index>(rng() % 4);
    const BoundedActivation& act = trial % 2 ? kTanh : kSigmoid;
    LoraParams q = random_params(p, d, r, rng, 0.8);
    std::vector<LoraSample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({gaussian_vector(d, rng), gaussian_vector(1, rng)[0]});
    auto f = [&](const Vector& T) {
      LoraParams c = q;
      unpack(T, c.U, c.V);
      return lora_loss(batch, c, act);
    };
    const double fd = oracle::fd_laplacian(f, pack(q.U, q.V), 1e-4);
    const double exact = lora_laplacian(batch, q, act);
    CHECK(oracle::rel_err(exact, fd) <= 1e-4);
  }
}

TEST_CASE("lora Laplacian with U = 0 under tanh has no curvature term") {
  Rng rng = make_stream(13, 0);
  LoraParams q = random_params(3, 2, 2, rng);
  q.U.setZero();
  LoraSample s{gaussian_vector(2, rng), 0.0};
  // z = 0 and y = 0: the residual term vanishes and only ||grad z||^2 remains.
  const FactorGrad gz = lora_grad_z(s, q, kTanh);
  CHECK(lora_laplacian(std::span(&s, 1), q, kTanh) ==
        doctest::Approx(gz.dU.squaredNorm() + gz.dV.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("lora gradient and Laplacian bounds") {
  Rng rng = make_stream(17, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index p = 1 + static_cast<Index>(rng() % 5);
    const Index d = 1 + static_cast<Index>(rng() % 5);
    const Index r = 1 + static_cast<Index>(rng() % 5);
    const BoundedActivation& act = trial % 2 ? kTanh : kSigmoid;
    LoraProblem prob = random_lora_problem(p, d, r, 6, uniform(rng, 0.2, 2.0), uniform(rng, 0.0, 2.0), act, rng);
    const ParamPoint T = std::pow(10.0, uniform(rng, -2.0, 2.0)) * unit_vector((p + d) * r, rng);
    const LoraParams q = lora_params_from(prob, T);
    const FactorGrad g = lora_loss_grad(prob.samples, q, act);
    CHECK(pack(g.dU, g.dV).norm() <= lora_grad_bound_constant(prob.a, act, prob.Bx, prob.By) * T.norm());
    CHECK(std::abs(lora_laplacian(prob.samples, q, act)) <=
          lora_laplacian_bound_constant(prob.a, act, prob.Bx, prob.By) * T.squaredNorm());
  }
}

TEST_CASE("scaling orbit") {
  Rng rng = make_stream(19, 0);
  LoraParams q = random_params(3, 4, 2, rng);
  const LoraParams same = scaling_orbit(q, Matrix::Identity(2, 2));
  CHECK((same.U - q.U).cwiseAbs().maxCoeff() == 0.0);
  CHECK((same.V - q.V).cwiseAbs().maxCoeff() <= 1e-15);

  std::vector<LoraSample> batch;
  for (int i = 0; i < 6; ++i) batch.push_back({gaussian_vector(4, rng), gaussian_vector(1, rng)[0]});
  const LoraParams three = scaling_orbit(q, 3.0 * Matrix::Identity(2, 2));
  CHECK((three.U - 3.0 * q.U).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((three.V - q.V / 3.0).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(lora_loss(batch, three, kTanh) == doctest::Approx(lora_loss(batch, q, kTanh)).epsilon(1e-12));

  for (int trial = 0; trial < 100; ++trial) {
    LoraParams base = random_params(3, 4, 2, rng);
    Matrix A = gaussian_matrix(2, 2, rng);
    const LoraParams moved = scaling_orbit(base, A);
    const Matrix W0 = base.U * base.V.transpose();
    const Matrix W1 = moved.U * moved.V.transpose();
    CHECK((W1 - W0).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, W0.cwiseAbs().maxCoeff()));
    const double L0 = lora_loss(batch, base, kTanh);
    CHECK(std::abs(lora_loss(batch, moved, kTanh) - L0) / (1.0 + std::abs(L0)) <= 1e-10);
  }

  Matrix singular(2, 2);
  singular << 1.0, 2.0, 2.0, 4.0;
  CHECK_THROWS_AS(scaling_orbit(q, singular), DomainError);
  Matrix ill(2, 2);
  ill << 1.0, 0.0, 0.0, 1e-13;
  CHECK_THROWS_AS(scaling_orbit(q, ill), DomainError);
}
