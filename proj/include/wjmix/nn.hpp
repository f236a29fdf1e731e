#pragma once

// Differentiable building blocks with hand-derived backward passes.
//
// Activations travel as "stacked" matrices: a batch of B samples, each N×C,
// is stored as one (B·N)×C matrix with sample b in rows [b·N, (b+1)·N).
// Row-wise operations (weight products, layer norm) act on the whole stack;
// graph and joint-mixing products act block by block.
//
// Every layer caches what its backward needs during forward; backward
// accumulates (+=) into Parameter::grad and returns the input gradient.

#include <cstddef>
#include <string>
#include <vector>

#include "wjmix/tensor.hpp"

namespace wjmix {

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;
  // AMSGrad moments.
  Matrix m;
  Matrix v;
  Matrix v_hat;

  void zero_grad() { grad.fill(0.0); }
  std::size_t count() const { return value.size(); }
};

// Glorot/Xavier uniform: U(-r, r), r = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out);

namespace nn {

// Exact (erf) GELU: x·Φ(x).
double gelu(double x);
double gelu_derivative(double x);
Matrix gelu_forward(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

class LayerNorm {
 public:
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t channels);

  // Normalizes each row across its columns, then applies gain and bias.
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);

  Parameter gain;
  Parameter bias;

 private:
  Matrix xhat_;
  std::vector<double> inv_std_;
};

class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels);

  // Per-channel statistics over every row of the stack (batch × joints).
  // Training mode requires batch >= 2 and updates the running statistics;
  // the running variance tracks the unbiased estimate.
  Matrix forward(const Matrix& x, std::size_t batch, bool training);
  Matrix backward(const Matrix& dy);

  std::string name;
  Parameter gain;
  Parameter bias;
  std::vector<double> running_mean;
  std::vector<double> running_var;

 private:
  bool last_training_ = false;
  Matrix xhat_;
  std::vector<double> inv_std_;
};

// Inverted dropout. The mask is drawn row-major from the caller's Rng.
// When frozen, the previous mask is reused (gradient audits).
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double p);

  Matrix forward(const Matrix& x, Rng* rng, bool training);
  Matrix backward(const Matrix& dy) const;

  double p() const { return p_; }
  void set_frozen(bool frozen) { frozen_ = frozen; }

 private:
  double p_ = 0.0;
  bool frozen_ = false;
  bool active_ = false;
  Matrix mask_;
};

Matrix dropout_forward(const Matrix& x, double p, Rng& rng, bool training);

// X = S̃·W₄ with S̃ the N×2T per-joint concatenation of the frames.
class SkeletonEmbedding {
 public:
  SkeletonEmbedding() = default;
  SkeletonEmbedding(std::size_t frames, std::size_t embed_dim, Rng& rng);

  Matrix forward(const Matrix& s_tilde);
  Matrix backward(const Matrix& dx);

  std::size_t frames() const { return w4.value.rows() / 2; }

  Parameter w4;

 private:
  Matrix input_;
};

// Weighted Jacobi layer:
//   WJ(H) = H·W₁ − Ω⊙(H·W₂) + (1−α) Ω⊙(Ǎ·H·W₂) + α Ω⊙(X₀·W₃),  Ǎ = Â + Q.
// Ω (N×C_out) and Ǎ apply per sample.
class WjLayer {
 public:
  WjLayer() = default;
  WjLayer(const std::string& name, const Matrix& norm_adj, std::size_t c_in, std::size_t c_out,
          std::size_t embed_dim, double alpha, Rng& rng);

  Matrix forward(const Matrix& h, const Matrix& x0);

  struct Grads {
    Matrix dh;
    Matrix dx0;
  };
  Grads backward(const Matrix& dout);

  std::size_t joints() const { return base_adj.rows(); }
  double alpha() const { return alpha_; }
  Matrix modulated_adjacency() const;

  Matrix base_adj;
  Parameter w1;
  Parameter w2;
  Parameter w3;
  Parameter omega;
  Parameter q;

 private:
  double alpha_ = 0.1;
  Matrix h_;
  Matrix x0_;
  Matrix adj_;
  Matrix hw2_;
  Matrix g_;
};

// U = H + (W₆ σ(W₅ LN(H)ᵀ))ᵀ per sample, with W₅: N×F and W₆: F×N.
class JointMixing {
 public:
  JointMixing() = default;
  JointMixing(const std::string& name, std::size_t joints, std::size_t embed_dim, Rng& rng);

  Matrix forward(const Matrix& h);
  Matrix backward(const Matrix& du);

  LayerNorm ln;
  Parameter w5;
  Parameter w6;

 private:
  Matrix hn_;
  std::vector<Matrix> pre_;   // W₅·Hnᵀ per sample
  std::vector<Matrix> post_;  // σ(pre)
};

// P = drop(σ(BN(WJ(U)))), Q = drop(σ(BN(WJ(P)))); F→R→F.
class GraphWjBlock {
 public:
  GraphWjBlock() = default;
  GraphWjBlock(const std::string& name, const Matrix& norm_adj, std::size_t embed_dim,
               std::size_t hidden_dim, double alpha, double dropout, Rng& rng);

  Matrix forward(const Matrix& u, const Matrix& x0, std::size_t batch, Rng* rng, bool training);

  struct Grads {
    Matrix du;
    Matrix dx0;
  };
  Grads backward(const Matrix& dq);

  // Intermediate (N·B)×R activation of the last forward.
  const Matrix& hidden() const { return p_; }

  WjLayer wj1;
  BatchNorm bn1;
  Dropout drop1;
  WjLayer wj2;
  BatchNorm bn2;
  Dropout drop2;

 private:
  Matrix bn1_out_;
  Matrix bn2_out_;
  Matrix p_;
};

// Ŷ = LN(Z)·W + b, bias added to every row.
class RegressionHead {
 public:
  RegressionHead() = default;
  RegressionHead(std::size_t embed_dim, Rng& rng);

  Matrix forward(const Matrix& z);
  Matrix backward(const Matrix& dy);

  LayerNorm ln;
  Parameter w;
  Parameter b;

 private:
  Matrix zn_;
};

}  // namespace nn
}  // namespace wjmix
