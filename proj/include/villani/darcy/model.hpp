#pragma once

// Patch-based single-head attention regressor for the Darcy map a -> u.
// embed -> + positional bias -> attention (beta = 1) -> tanh MLP decoder.

#include "villani/rng.hpp"
#include "villani/types.hpp"

#include <span>
#include <string>

namespace villani::darcy {

enum class EncoderKind { Linear, Conv };

struct ModelConfig {
  Index n = 16;
  Index patch = 4;
  Index d = 16;
  Index r = 16;
  EncoderKind encoder = EncoderKind::Linear;
  Index conv_channels = 8;

  Index tokens() const { return (n / patch) * (n / patch); }
  Index patch_pixels() const { return patch * patch; }
  Index hidden() const { return 2 * d; }
  void validate() const;
};

EncoderKind parse_encoder(const std::string& name);
std::string encoder_name(EncoderKind kind);

/// Every trainable tensor. Vectors are stored as 1 x k matrices; tensors of
/// the unused encoder are empty.
struct ModelParams {
  Matrix We, be;          // linear encoder: p^2 x d, 1 x d
  Matrix C1, c1, C2, c2;  // conv encoder: ch x 9, 1 x ch, (d/p^2) x (9 ch), 1 x (d/p^2)
  Matrix P;               // t x d positional bias
  Matrix Wq, Wk;          // d x r
  Matrix Wv;              // d x d
  Matrix W1, b1;          // d x 2d, 1 x 2d
  Matrix W2, b2;          // 2d x p^2, 1 x p^2

  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }

  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("We", s.We); f("be", s.be); f("C1", s.C1); f("c1", s.c1); f("C2", s.C2); f("c2", s.c2);
    f("P", s.P); f("Wq", s.Wq); f("Wk", s.Wk); f("Wv", s.Wv);
    f("W1", s.W1); f("b1", s.b1); f("W2", s.W2); f("b2", s.b2);
  }

  /// Same shapes, all zeros.
  ModelParams zeros_like() const;
  void add_scaled(const ModelParams& other, double scale);
  double squared_norm() const;
};

/// Weights ~ N(0, 1/fan_in), biases zero, positional bias ~ N(0, 0.02^2).
ModelParams init_model(const ModelConfig& cfg, Rng& rng);

/// Fresh (W_Q, W_K) draw with the same law as init_model.
void init_qk(const ModelConfig& cfg, Rng& rng, Matrix& Wq, Matrix& Wk);

/// Prediction in standardized space for one standardized permeability field.
Matrix model_forward(const ModelConfig& cfg, const ModelParams& params, const Matrix& a);

enum class GradMode { Full, QKOnly };

/// Per-pixel mean squared error of one sample and its gradient. In QKOnly
/// mode only gradient.Wq and gradient.Wk are filled; the rest stay zero.
double sample_loss_grad(const ModelConfig& cfg, const ModelParams& params, const Matrix& a,
                        const Matrix& u, GradMode mode, ModelParams& gradient);

/// Mean over the batch; per-sample gradients are summed in index order so
/// the result does not depend on the thread count.
double batch_loss_grad(const ModelConfig& cfg, const ModelParams& params,
                       std::span<const Matrix> a, std::span<const Matrix> u,
                       std::span<const std::size_t> idx, GradMode mode, ModelParams& gradient,
                       unsigned threads = 1);

double sample_loss(const ModelConfig& cfg, const ModelParams& params, const Matrix& a,
                   const Matrix& u);

}  // namespace villani::darcy
