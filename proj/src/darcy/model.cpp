#include "villani/darcy/model.hpp"

#include "villani/attention.hpp"
#include "villani/darcy/dataset.hpp"
#include "villani/parallel.hpp"

#include <cmath>
#include <vector>

namespace villani::darcy {
namespace {

using Maps = std::vector<Matrix>;

std::vector<Matrix*> tensor_list(ModelParams& p) {
  std::vector<Matrix*> out;
  p.visit([&](const char*, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> tensor_list(const ModelParams& p) {
  std::vector<const Matrix*> out;
  p.visit([&](const char*, const Matrix& m) { out.push_back(&m); });
  return out;
}

// 3x3 convolution, stride 1, zero padding 1. W is cout x (cin * 9) with
// column c * 9 + (di + 1) * 3 + (dj + 1).
Maps conv3x3(const Maps& in, const Matrix& W, const Matrix& b) {
  const Index n = in.front().rows();
  const Index cin = static_cast<Index>(in.size());
  Maps out(static_cast<std::size_t>(W.rows()));
  for (Index o = 0; o < W.rows(); ++o) {
    Matrix& y = out[static_cast<std::size_t>(o)];
    y = Matrix::Constant(n, n, b(0, o));
    for (Index c = 0; c < cin; ++c) {
      const Matrix& x = in[static_cast<std::size_t>(c)];
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const double w = W(o, c * 9 + (di + 1) * 3 + (dj + 1));
          for (Index i = 0; i < n; ++i) {
            const Index ii = i + di;
            if (ii < 0 || ii >= n) continue;
            for (Index j = 0; j < n; ++j) {
              const Index jj = j + dj;
              if (jj < 0 || jj >= n) continue;
              y(i, j) += w * x(ii, jj);
            }
          }
        }
    }
  }
  return out;
}

// Accumulates dW, db and returns d(input).
Maps conv3x3_backward(const Maps& in, const Matrix& W, const Maps& dout, Matrix& dW, Matrix& db,
                      bool need_input_grad) {
  const Index n = in.front().rows();
  const Index cin = static_cast<Index>(in.size());
  Maps din;
  if (need_input_grad) din.assign(in.size(), Matrix::Zero(n, n));
  for (Index o = 0; o < W.rows(); ++o) {
    const Matrix& g = dout[static_cast<std::size_t>(o)];
    db(0, o) += g.sum();
    for (Index c = 0; c < cin; ++c) {
      const Matrix& x = in[static_cast<std::size_t>(c)];
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const Index col = c * 9 + (di + 1) * 3 + (dj + 1);
          const double w = W(o, col);
          double acc = 0.0;
          for (Index i = 0; i < n; ++i) {
            const Index ii = i + di;
            if (ii < 0 || ii >= n) continue;
            for (Index j = 0; j < n; ++j) {
              const Index jj = j + dj;
              if (jj < 0 || jj >= n) continue;
              acc += g(i, j) * x(ii, jj);
              if (need_input_grad) din[static_cast<std::size_t>(c)](ii, jj) += w * g(i, j);
            }
          }
          dW(o, col) += acc;
        }
    }
  }
  return din;
}

struct Cache {
  Matrix Xp;  // linear encoder input tokens
  Maps f1;    // conv encoder hidden maps (post tanh)
  Maps f2;
  Matrix Xh, Q, K, V, S, A, H, O;
};

Matrix row_ones_times(const Matrix& bias, Index rows) {
  return Matrix::Ones(rows, 1) * bias;
}

Cache forward_cache(const ModelConfig& cfg, const ModelParams& m, const Matrix& a) {
  require(a.rows() == cfg.n && a.cols() == cfg.n, "model_forward: field shape mismatch");
  Cache c;
  const Index t = cfg.tokens();
  Matrix E;
  if (cfg.encoder == EncoderKind::Linear) {
    c.Xp = patchify(a, cfg.patch);
    E = c.Xp * m.We + row_ones_times(m.be, t);
  } else {
    c.f1 = conv3x3(Maps{a}, m.C1, m.c1);
    for (auto& f : c.f1) f = f.array().tanh();
    c.f2 = conv3x3(c.f1, m.C2, m.c2);
    const Index pp = cfg.patch_pixels();
    E.resize(t, cfg.d);
    for (std::size_t ch = 0; ch < c.f2.size(); ++ch)
      E.middleCols(static_cast<Index>(ch) * pp, pp) = patchify(c.f2[ch], cfg.patch);
  }
  c.Xh = E + m.P;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  c.Q = c.Xh * m.Wq;
  c.K = c.Xh * m.Wk;
  c.V = c.Xh * m.Wv;
  c.S = row_softmax(scale * (c.Q * c.K.transpose()), 1.0);
  c.A = c.S * c.V;
  c.H = (c.A * m.W1 + row_ones_times(m.b1, t)).array().tanh();
  c.O = c.H * m.W2 + row_ones_times(m.b2, t);
  return c;
}

}  // namespace

void ModelConfig::validate() const {
  require(n >= 1 && patch >= 1 && n % patch == 0, "model: patch size must divide the grid");
  require(d >= 1 && r >= 1, "model: d and r must be positive");
  if (encoder == EncoderKind::Conv) {
    require(conv_channels >= 1, "model: conv channels must be positive");
    require(d % patch_pixels() == 0, "model: conv encoder needs d divisible by patch^2");
  }
}

EncoderKind parse_encoder(const std::string& name) {
  if (name == "linear") return EncoderKind::Linear;
  if (name == "conv") return EncoderKind::Conv;
  throw UsageError("unknown encoder '" + name + "' (expected linear or conv)");
}

std::string encoder_name(EncoderKind kind) {
  return kind == EncoderKind::Linear ? "linear" : "conv";
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (Matrix* m : tensor_list(z)) m->setZero();
  return z;
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  auto mine = tensor_list(*this);
  auto theirs = tensor_list(other);
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i] += scale * *theirs[i];
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for (const Matrix* m : tensor_list(*this)) s += m->squaredNorm();
  return s;
}

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams m;
  const Index pp = cfg.patch_pixels();
  const Index d = cfg.d;
  auto inv_sqrt = [](Index k) { return 1.0 / std::sqrt(static_cast<double>(k)); };
  if (cfg.encoder == EncoderKind::Linear) {
    m.We = gaussian_matrix(pp, d, rng, inv_sqrt(pp));
    m.be = Matrix::Zero(1, d);
  } else {
    const Index ch = cfg.conv_channels;
    const Index ch2 = d / pp;
    m.C1 = gaussian_matrix(ch, 9, rng, inv_sqrt(9));
    m.c1 = Matrix::Zero(1, ch);
    m.C2 = gaussian_matrix(ch2, 9 * ch, rng, inv_sqrt(9 * ch));
    m.c2 = Matrix::Zero(1, ch2);
  }
  m.P = gaussian_matrix(cfg.tokens(), d, rng, 0.02);
  init_qk(cfg, rng, m.Wq, m.Wk);
  m.Wv = gaussian_matrix(d, d, rng, inv_sqrt(d));
  m.W1 = gaussian_matrix(d, cfg.hidden(), rng, inv_sqrt(d));
  m.b1 = Matrix::Zero(1, cfg.hidden());
  m.W2 = gaussian_matrix(cfg.hidden(), pp, rng, inv_sqrt(cfg.hidden()));
  m.b2 = Matrix::Zero(1, pp);
  return m;
}

void init_qk(const ModelConfig& cfg, Rng& rng, Matrix& Wq, Matrix& Wk) {
  const double sc = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  Wq = gaussian_matrix(cfg.d, cfg.r, rng, sc);
  Wk = gaussian_matrix(cfg.d, cfg.r, rng, sc);
}

Matrix model_forward(const ModelConfig& cfg, const ModelParams& params, const Matrix& a) {
  const Cache c = forward_cache(cfg, params, a);
  return unpatchify(c.O, cfg.n, cfg.patch);
}

double sample_loss(const ModelConfig& cfg, const ModelParams& params, const Matrix& a,
                   const Matrix& u) {
  const Matrix pred = model_forward(cfg, params, a);
  return (pred - u).squaredNorm() / static_cast<double>(u.size());
}

double sample_loss_grad(const ModelConfig& cfg, const ModelParams& m, const Matrix& a,
                        const Matrix& u, GradMode mode, ModelParams& g) {
  require(u.rows() == cfg.n && u.cols() == cfg.n, "sample_loss_grad: target shape mismatch");
  const Cache c = forward_cache(cfg, m, a);
  g = m.zeros_like();
  const double npix = static_cast<double>(u.size());
  const Matrix R = c.O - patchify(u, cfg.patch);
  const double loss = R.squaredNorm() / npix;
  const bool full = mode == GradMode::Full;

  const Matrix dO = (2.0 / npix) * R;
  const Matrix dH = dO * m.W2.transpose();
  const Matrix dZ = dH.array() * (1.0 - c.H.array().square());
  const Matrix dA = dZ * m.W1.transpose();
  if (full) {
    g.W2 = c.H.transpose() * dO;
    g.b2 = dO.colwise().sum();
    g.W1 = c.A.transpose() * dZ;
    g.b1 = dZ.colwise().sum();
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  const Matrix dS = dA * c.V.transpose();
  const Matrix dM = softmax_backward(c.S, dS, 1.0);
  const Matrix dQ = scale * (dM * c.K);
  const Matrix dK = scale * (dM.transpose() * c.Q);
  g.Wq = c.Xh.transpose() * dQ;
  g.Wk = c.Xh.transpose() * dK;
  if (!full) return loss;

  const Matrix dV = c.S.transpose() * dA;
  g.Wv = c.Xh.transpose() * dV;
  const Matrix dXh = dV * m.Wv.transpose() + dQ * m.Wq.transpose() + dK * m.Wk.transpose();
  g.P = dXh;
  if (cfg.encoder == EncoderKind::Linear) {
    g.We = c.Xp.transpose() * dXh;
    g.be = dXh.colwise().sum();
  } else {
    const Index pp = cfg.patch_pixels();
    Maps df2(c.f2.size());
    for (std::size_t ch = 0; ch < c.f2.size(); ++ch)
      df2[ch] = unpatchify(dXh.middleCols(static_cast<Index>(ch) * pp, pp), cfg.n, cfg.patch);
    Maps df1 = conv3x3_backward(c.f1, m.C2, df2, g.C2, g.c2, true);
    for (std::size_t ch = 0; ch < df1.size(); ++ch)
      df1[ch] = df1[ch].array() * (1.0 - c.f1[ch].array().square());
    conv3x3_backward(Maps{a}, m.C1, df1, g.C1, g.c1, false);
  }
  return loss;
}

double batch_loss_grad(const ModelConfig& cfg, const ModelParams& params,
                       std::span<const Matrix> a, std::span<const Matrix> u,
                       std::span<const std::size_t> idx, GradMode mode, ModelParams& gradient,
                       unsigned threads) {
  require(!idx.empty(), "batch_loss_grad: empty batch");
  std::vector<ModelParams> grads(idx.size());
  std::vector<double> losses(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t k) {
    losses[k] = sample_loss_grad(cfg, params, a[idx[k]], u[idx[k]], mode, grads[k]);
  });
  gradient = params.zeros_like();
  double loss = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    gradient.add_scaled(grads[k], 1.0);
    loss += losses[k];
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (Matrix* m : tensor_list(gradient)) *m *= inv;
  return loss * inv;
}

}  // namespace villani::darcy
