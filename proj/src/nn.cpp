#include "wjmix/nn.hpp"

#include <cmath>
#include <numbers>

#include "wjmix/kernels.hpp"

namespace wjmix {

Parameter::Parameter(std::string name_, Matrix value_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(value.rows(), value.cols()),
      m(value.rows(), value.cols()),
      v(value.rows(), value.cols()),
      v_hat(value.rows(), value.cols()) {}

Matrix glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out) {
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform(rng, -r, r, rows, cols);
}

namespace nn {
namespace {

void require_shape(const Matrix& m, Shape expected, const char* what) {
  if (m.shape() != expected)
    throw DimensionError(std::string(what) + ": expected " + to_string(expected) + ", got " +
                         to_string(m.shape()));
}

void require_cols(const Matrix& m, std::size_t cols, const char* what) {
  if (m.cols() != cols)
    throw DimensionError(std::string(what) + ": expected " + std::to_string(cols) +
                         " columns, got " + to_string(m.shape()));
}

void require_blocks(const Matrix& m, std::size_t joints, const char* what) {
  if (joints == 0 || m.rows() % joints != 0)
    throw DimensionError(std::string(what) + ": " + to_string(m.shape()) +
                         " is not a stack of " + std::to_string(joints) + "-row samples");
}

// Adds row vector `v` (1×C) to every row of `m`.
void add_row_vector(Matrix& m, const Matrix& v) {
  const auto& kern = kernels::active();
  for (std::size_t r = 0; r < m.rows(); ++r)
    kern.add(m.row(r).data(), v.data().data(), m.row(r).data(), m.cols());
}

// Accumulates the column sums of `m` into `acc` (1×C).
void add_column_sums(Matrix& acc, const Matrix& m) {
  const auto& kern = kernels::active();
  for (std::size_t r = 0; r < m.rows(); ++r)
    kern.add(acc.data().data(), m.row(r).data(), acc.data().data(), m.cols());
}

// out_b = tile ⊙ m_b for every block b, where `tile` has block shape.
Matrix tile_hadamard(const Matrix& tile, const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  const auto& kern = kernels::active();
  const std::size_t n = tile.rows();
  for (std::size_t r = 0; r < m.rows(); ++r)
    kern.mul(tile.row(r % n).data(), m.row(r).data(), out.row(r).data(), m.cols());
  return out;
}

}  // namespace

// --- GELU -------------------------------------------------------------------

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

Matrix gelu_forward(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = gelu(x.data()[i]);
  return y;
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  require_shape(dy, x.shape(), "gelu_backward");
  Matrix dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    dx.data()[i] = dy.data()[i] * gelu_derivative(x.data()[i]);
  return dx;
}

// --- LayerNorm --------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, std::size_t channels)
    : gain(name + ".gain", Matrix(1, channels, 1.0)), bias(name + ".bias", Matrix(1, channels)) {}

Matrix LayerNorm::forward(const Matrix& x) {
  require_cols(x, gain.value.cols(), "layernorm");
  const std::size_t c = x.cols();
  xhat_ = Matrix(x.rows(), c);
  inv_std_.assign(x.rows(), 0.0);
  Matrix y(x.rows(), c);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[r] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (row[j] - mean) * inv;
      xhat_(r, j) = xh;
      y(r, j) = gain.value(0, j) * xh + bias.value(0, j);
    }
  }
  return y;
}

Matrix LayerNorm::backward(const Matrix& dy) {
  require_shape(dy, xhat_.shape(), "layernorm backward");
  const std::size_t c = dy.cols();
  const double inv_c = 1.0 / static_cast<double>(c);
  Matrix dx(dy.rows(), c);
  std::vector<double> dxhat(c);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double g = dy(r, j);
      gain.grad(0, j) += g * xhat_(r, j);
      bias.grad(0, j) += g;
      dxhat[j] = g * gain.value(0, j);
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xhat_(r, j);
    }
    mean_d *= inv_c;
    mean_dx *= inv_c;
    for (std::size_t j = 0; j < c; ++j)
      dx(r, j) = inv_std_[r] * (dxhat[j] - mean_d - xhat_(r, j) * mean_dx);
  }
  return dx;
}

// --- BatchNorm --------------------------------------------------------------

BatchNorm::BatchNorm(const std::string& name_, std::size_t channels)
    : name(name_),
      gain(name_ + ".gain", Matrix(1, channels, 1.0)),
      bias(name_ + ".bias", Matrix(1, channels)),
      running_mean(channels, 0.0),
      running_var(channels, 1.0) {}

Matrix BatchNorm::forward(const Matrix& x, std::size_t batch, bool training) {
  require_cols(x, gain.value.cols(), "batchnorm");
  if (training && batch < 2)
    throw std::invalid_argument("batchnorm: training mode needs a batch of at least 2, got " +
                                std::to_string(batch));
  const std::size_t rows = x.rows();
  const std::size_t c = x.cols();
  last_training_ = training;
  xhat_ = Matrix(rows, c);
  inv_std_.assign(c, 0.0);
  std::vector<double> mean(c, 0.0);
  std::vector<double> var(c, 0.0);
  if (training) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mean[j] += x(r, j);
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) var[j] += (x(r, j) - mean[j]) * (x(r, j) - mean[j]);
    for (std::size_t j = 0; j < c; ++j) {
      const double biased = var[j] / static_cast<double>(rows);
      const double unbiased = var[j] / static_cast<double>(rows - 1);
      var[j] = biased;
      running_mean[j] = (1.0 - kMomentum) * running_mean[j] + kMomentum * mean[j];
      running_var[j] = (1.0 - kMomentum) * running_var[j] + kMomentum * unbiased;
    }
  } else {
    mean = running_mean;
    var = running_var;
  }
  for (std::size_t j = 0; j < c; ++j) inv_std_[j] = 1.0 / std::sqrt(var[j] + kEps);
  Matrix y(rows, c);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (x(r, j) - mean[j]) * inv_std_[j];
      xhat_(r, j) = xh;
      y(r, j) = gain.value(0, j) * xh + bias.value(0, j);
    }
  }
  return y;
}

Matrix BatchNorm::backward(const Matrix& dy) {
  require_shape(dy, xhat_.shape(), "batchnorm backward");
  const std::size_t rows = dy.rows();
  const std::size_t c = dy.cols();
  std::vector<double> mean_d(c, 0.0);
  std::vector<double> mean_dx(c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double g = dy(r, j);
      gain.grad(0, j) += g * xhat_(r, j);
      bias.grad(0, j) += g;
      const double dxh = g * gain.value(0, j);
      mean_d[j] += dxh;
      mean_dx[j] += dxh * xhat_(r, j);
    }
  }
  Matrix dx(rows, c);
  if (!last_training_) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) dx(r, j) = dy(r, j) * gain.value(0, j) * inv_std_[j];
    return dx;
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t j = 0; j < c; ++j) {
    mean_d[j] *= inv_rows;
    mean_dx[j] *= inv_rows;
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j)
      dx(r, j) = inv_std_[j] *
                 (dy(r, j) * gain.value(0, j) - mean_d[j] - xhat_(r, j) * mean_dx[j]);
  return dx;
}

// --- Dropout ----------------------------------------------------------------

Dropout::Dropout(double p) : p_(p) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
}

Matrix Dropout::forward(const Matrix& x, Rng* rng, bool training) {
  active_ = training && p_ > 0.0;
  if (!active_) return x;
  if (!(frozen_ && mask_.shape() == x.shape())) {
    if (rng == nullptr) throw std::invalid_argument("dropout: training mode needs an Rng");
    const double keep_scale = 1.0 / (1.0 - p_);
    mask_ = Matrix(x.rows(), x.cols());
    for (double& m : mask_.data()) m = rng->uniform() < p_ ? 0.0 : keep_scale;
  }
  return hadamard(x, mask_);
}

Matrix Dropout::backward(const Matrix& dy) const {
  if (!active_) return dy;
  return hadamard(dy, mask_);
}

Matrix dropout_forward(const Matrix& x, double p, Rng& rng, bool training) {
  Dropout d(p);
  return d.forward(x, &rng, training);
}

// --- SkeletonEmbedding ------------------------------------------------------

SkeletonEmbedding::SkeletonEmbedding(std::size_t frames, std::size_t embed_dim, Rng& rng)
    : w4("embed.w4", glorot_uniform(rng, 2 * frames, embed_dim, 2 * frames, embed_dim)) {}

Matrix SkeletonEmbedding::forward(const Matrix& s_tilde) {
  if (s_tilde.cols() != w4.value.rows())
    throw DimensionError("skeleton embedding: input has " + std::to_string(s_tilde.cols() / 2) +
                         " frames (" + to_string(s_tilde.shape()) + "), W4 expects " +
                         std::to_string(frames()));
  input_ = s_tilde;
  return matmul(s_tilde, w4.value);
}

Matrix SkeletonEmbedding::backward(const Matrix& dx) {
  axpy_inplace(w4.grad, 1.0, matmul_tn(input_, dx));
  return matmul_nt(dx, w4.value);
}

// --- WjLayer ----------------------------------------------------------------

WjLayer::WjLayer(const std::string& name, const Matrix& norm_adj, std::size_t c_in,
                 std::size_t c_out, std::size_t embed_dim, double alpha, Rng& rng)
    : base_adj(norm_adj), alpha_(alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("WJ layer: alpha must lie in (0, 1), got " + std::to_string(alpha));
  if (norm_adj.rows() != norm_adj.cols())
    throw DimensionError("WJ layer: adjacency must be square, got " + to_string(norm_adj.shape()));
  const std::size_t n = norm_adj.rows();
  w1 = Parameter(name + ".w1", glorot_uniform(rng, c_in, c_out, c_in, c_out));
  w2 = Parameter(name + ".w2", glorot_uniform(rng, c_in, c_out, c_in, c_out));
  w3 = Parameter(name + ".w3", glorot_uniform(rng, embed_dim, c_out, embed_dim, c_out));
  omega = Parameter(name + ".omega", Matrix(n, c_out, 1.0));
  q = Parameter(name + ".q", uniform(rng, -0.01, 0.01, n, n));
}

Matrix WjLayer::modulated_adjacency() const { return add(base_adj, q.value); }

Matrix WjLayer::forward(const Matrix& h, const Matrix& x0) {
  const std::size_t n = joints();
  require_blocks(h, n, "WJ layer input");
  require_cols(h, w1.value.rows(), "WJ layer input");
  require_shape(x0, {h.rows(), w3.value.rows()}, "WJ layer X0");
  h_ = h;
  x0_ = x0;
  adj_ = modulated_adjacency();
  hw2_ = matmul(h, w2.value);
  // G = (1-α)·Ǎ·HW₂ − HW₂ + α·X₀W₃, so WJ(H) = HW₁ + Ω⊙G.
  g_ = sub(scale(matmul_blocks(adj_, hw2_), 1.0 - alpha_), hw2_);
  axpy_inplace(g_, alpha_, matmul(x0, w3.value));
  Matrix out = matmul(h, w1.value);
  const auto& kern = kernels::active();
  for (std::size_t r = 0; r < out.rows(); ++r)
    kern.mul_acc(omega.value.row(r % n).data(), g_.row(r).data(), out.row(r).data(), out.cols());
  return out;
}

WjLayer::Grads WjLayer::backward(const Matrix& dout) {
  const std::size_t n = joints();
  require_shape(dout, g_.shape(), "WJ layer backward");
  const auto& kern = kernels::active();

  axpy_inplace(w1.grad, 1.0, matmul_tn(h_, dout));
  for (std::size_t r = 0; r < dout.rows(); ++r)
    kern.mul_acc(dout.row(r).data(), g_.row(r).data(), omega.grad.row(r % n).data(), dout.cols());

  const Matrix dg = tile_hadamard(omega.value, dout);
  Matrix dhw2 = scale(matmul_blocks_tn(adj_, dg), 1.0 - alpha_);
  axpy_inplace(dhw2, -1.0, dg);
  axpy_inplace(q.grad, 1.0 - alpha_, sum_blocks_nt(dg, hw2_, n));

  const Matrix dxw3 = scale(dg, alpha_);
  axpy_inplace(w3.grad, 1.0, matmul_tn(x0_, dxw3));
  axpy_inplace(w2.grad, 1.0, matmul_tn(h_, dhw2));

  Grads grads;
  grads.dh = matmul_nt(dout, w1.value);
  axpy_inplace(grads.dh, 1.0, matmul_nt(dhw2, w2.value));
  grads.dx0 = matmul_nt(dxw3, w3.value);
  return grads;
}

// --- JointMixing ------------------------------------------------------------

JointMixing::JointMixing(const std::string& name, std::size_t joints, std::size_t embed_dim,
                         Rng& rng)
    : ln(name + ".ln", embed_dim),
      w5(name + ".w5", glorot_uniform(rng, joints, embed_dim, embed_dim, joints)),
      w6(name + ".w6", glorot_uniform(rng, embed_dim, joints, joints, embed_dim)) {}

Matrix JointMixing::forward(const Matrix& h) {
  const std::size_t n = w5.value.rows();
  require_blocks(h, n, "joint mixing");
  require_cols(h, w5.value.cols(), "joint mixing");
  hn_ = ln.forward(h);
  const std::size_t batch = h.rows() / n;
  pre_.assign(batch, Matrix());
  post_.assign(batch, Matrix());
  Matrix u = h;
  for (std::size_t b = 0; b < batch; ++b) {
    pre_[b] = matmul_nt(w5.value, hn_.rows_slice(b * n, n));  // N×N
    post_[b] = gelu_forward(pre_[b]);
    const Matrix mixed = matmul(w6.value, post_[b]);  // F×N
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < mixed.rows(); ++f) u(b * n + i, f) += mixed(f, i);
  }
  return u;
}

Matrix JointMixing::backward(const Matrix& du) {
  const std::size_t n = w5.value.rows();
  require_shape(du, hn_.shape(), "joint mixing backward");
  const std::size_t batch = du.rows() / n;
  Matrix dhn(du.rows(), du.cols());
  for (std::size_t b = 0; b < batch; ++b) {
    const Matrix du_b = du.rows_slice(b * n, n);
    const Matrix dmixed = transpose(du_b);  // F×N
    axpy_inplace(w6.grad, 1.0, matmul_nt(dmixed, post_[b]));
    const Matrix dpost = matmul_tn(w6.value, dmixed);  // N×N
    const Matrix dpre = gelu_backward(pre_[b], dpost);
    axpy_inplace(w5.grad, 1.0, matmul(dpre, hn_.rows_slice(b * n, n)));
    dhn.set_rows(b * n, matmul_tn(dpre, w5.value));
  }
  Matrix dh = ln.backward(dhn);
  axpy_inplace(dh, 1.0, du);
  return dh;
}

// --- GraphWjBlock -----------------------------------------------------------

GraphWjBlock::GraphWjBlock(const std::string& name, const Matrix& norm_adj, std::size_t embed_dim,
                           std::size_t hidden_dim, double alpha, double dropout, Rng& rng)
    : wj1(name + ".wj1", norm_adj, embed_dim, hidden_dim, embed_dim, alpha, rng),
      bn1(name + ".bn1", hidden_dim),
      drop1(dropout),
      wj2(name + ".wj2", norm_adj, hidden_dim, embed_dim, embed_dim, alpha, rng),
      bn2(name + ".bn2", embed_dim),
      drop2(dropout) {}

Matrix GraphWjBlock::forward(const Matrix& u, const Matrix& x0, std::size_t batch, Rng* rng,
                             bool training) {
  bn1_out_ = bn1.forward(wj1.forward(u, x0), batch, training);
  p_ = drop1.forward(gelu_forward(bn1_out_), rng, training);
  bn2_out_ = bn2.forward(wj2.forward(p_, x0), batch, training);
  return drop2.forward(gelu_forward(bn2_out_), rng, training);
}

GraphWjBlock::Grads GraphWjBlock::backward(const Matrix& dq) {
  const Matrix d_bn2 = gelu_backward(bn2_out_, drop2.backward(dq));
  auto g2 = wj2.backward(bn2.backward(d_bn2));
  const Matrix d_bn1 = gelu_backward(bn1_out_, drop1.backward(g2.dh));
  auto g1 = wj1.backward(bn1.backward(d_bn1));
  Grads grads;
  grads.du = std::move(g1.dh);
  grads.dx0 = std::move(g1.dx0);
  axpy_inplace(grads.dx0, 1.0, g2.dx0);
  return grads;
}

// --- RegressionHead ---------------------------------------------------------

RegressionHead::RegressionHead(std::size_t embed_dim, Rng& rng)
    : ln("head.ln", embed_dim),
      w("head.w", glorot_uniform(rng, embed_dim, 3, embed_dim, 3)),
      b("head.b", Matrix(1, 3)) {}

Matrix RegressionHead::forward(const Matrix& z) {
  require_cols(z, w.value.rows(), "regression head");
  zn_ = ln.forward(z);
  Matrix y = matmul(zn_, w.value);
  add_row_vector(y, b.value);
  return y;
}

Matrix RegressionHead::backward(const Matrix& dy) {
  require_shape(dy, {zn_.rows(), 3}, "regression head backward");
  axpy_inplace(w.grad, 1.0, matmul_tn(zn_, dy));
  add_column_sums(b.grad, dy);
  return ln.backward(matmul_nt(dy, w.value));
}

}  // namespace nn
}  // namespace wjmix
