#include "wjmix/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wjmix/graph.hpp"
#include "wjmix/model.hpp"
#include "wjmix/nn.hpp"
#include "wjmix/training.hpp"

namespace wjmix {
namespace {

constexpr double kLinearThreshold = 1e-7;
constexpr double kLayerThreshold = 1e-5;
constexpr double kDefaultThreshold = 1e-4;

double probe_loss(const Matrix& y, const Matrix& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += w.data()[i] * y.data()[i] * y.data()[i];
  return s;
}

Matrix probe_grad(const Matrix& y, const Matrix& w) {
  Matrix g(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) g.data()[i] = 2.0 * w.data()[i] * y.data()[i];
  return g;
}

SkeletonGraph small_graph(Rng& rng) { return random_connected_graph(rng, 4, 1); }

// Moves parameters away from their structured initial values so that every
// term of the backward pass is exercised.
void jitter(Parameter& p, Rng& rng, double lo, double hi) { p.value = uniform(rng, lo, hi, p.value.rows(), p.value.cols()); }

GradTarget target(Parameter& p) { return {p.name, &p.value, &p.grad}; }

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& t : targets) m = std::max(m, t.max_rel_error);
  return m;
}

nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : r.targets)
    targets.push_back({{"name", t.name},
                       {"entries", t.entries},
                       {"max_rel_error", t.max_rel_error},
                       {"max_abs_error", t.max_abs_error}});
  return {{"layer", r.layer},
          {"seed", r.seed},
          {"threshold", r.threshold},
          {"max_rel_error", r.max_rel_error()},
          {"passed", r.passed()},
          {"targets", std::move(targets)}};
}

GradcheckReport gradcheck(const std::string& layer, const std::function<Matrix()>& forward,
                          const std::function<void(const Matrix&)>& backward,
                          const std::vector<GradTarget>& targets, Rng& rng, double threshold,
                          double step) {
  GradcheckReport report;
  report.layer = layer;
  report.threshold = threshold;

  const Matrix y = forward();
  const Matrix w = uniform(rng, 0.5, 1.5, y.rows(), y.cols());
  backward(probe_grad(y, w));
  // Copy: later forwards may reuse the buffers the callback filled.
  std::vector<Matrix> analytic;
  for (const auto& t : targets) analytic.push_back(*t.analytic);

  for (std::size_t k = 0; k < targets.size(); ++k) {
    const GradTarget& t = targets[k];
    if (analytic[k].shape() != t.value->shape())
      throw DimensionError("gradcheck: analytic gradient for '" + t.name + "' has shape " +
                           to_string(analytic[k].shape()) + ", value has " +
                           to_string(t.value->shape()));
    TargetError err;
    err.name = t.name;
    err.entries = t.value->size();
    for (std::size_t i = 0; i < t.value->size(); ++i) {
      double& x = t.value->data()[i];
      const double saved = x;
      x = saved + step;
      const double lp = probe_loss(forward(), w);
      x = saved - step;
      const double lm = probe_loss(forward(), w);
      x = saved;
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = analytic[k].data()[i];
      err.max_rel_error = std::max(err.max_rel_error, relative_error(a, numeric));
      err.max_abs_error = std::max(err.max_abs_error, std::abs(a - numeric));
    }
    report.targets.push_back(err);
  }
  return report;
}

GradcheckReport audit_embedding(std::uint64_t seed) {
  Rng rng(seed);
  nn::SkeletonEmbedding emb(3, 5, rng);
  Matrix s = normal(rng, 1.0, 8, 6);
  Matrix ds;
  auto r = gradcheck(
      "embedding", [&] { return emb.forward(s); },
      [&](const Matrix& dy) {
        emb.w4.zero_grad();
        ds = emb.backward(dy);
      },
      {target(emb.w4), {"input", &s, &ds}}, rng, kLinearThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_gelu(std::uint64_t seed) {
  Rng rng(seed);
  Matrix x = normal(rng, 1.5, 6, 5);
  Matrix dx;
  auto r = gradcheck(
      "gelu", [&] { return nn::gelu_forward(x); },
      [&](const Matrix& dy) { dx = nn::gelu_backward(x, dy); }, {{"input", &x, &dx}}, rng,
      kLayerThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_layernorm(std::uint64_t seed) {
  Rng rng(seed);
  nn::LayerNorm ln("ln", 6);
  jitter(ln.gain, rng, 0.5, 1.5);
  jitter(ln.bias, rng, -0.5, 0.5);
  Matrix x = normal(rng, 1.0, 5, 6);
  Matrix dx;
  auto r = gradcheck(
      "layernorm", [&] { return ln.forward(x); },
      [&](const Matrix& dy) {
        ln.gain.zero_grad();
        ln.bias.zero_grad();
        dx = ln.backward(dy);
      },
      {target(ln.gain), target(ln.bias), {"input", &x, &dx}}, rng, kLayerThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_batchnorm(std::uint64_t seed) {
  Rng rng(seed);
  nn::BatchNorm bn("bn", 4);
  jitter(bn.gain, rng, 0.5, 1.5);
  jitter(bn.bias, rng, -0.5, 0.5);
  const std::size_t batch = 3;
  Matrix x = normal(rng, 1.0, batch * 2, 4);
  Matrix dx;
  auto r = gradcheck(
      "batchnorm", [&] { return bn.forward(x, batch, true); },
      [&](const Matrix& dy) {
        bn.gain.zero_grad();
        bn.bias.zero_grad();
        dx = bn.backward(dy);
      },
      {target(bn.gain), target(bn.bias), {"input", &x, &dx}}, rng, kDefaultThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_dropout(std::uint64_t seed) {
  Rng rng(seed);
  nn::Dropout drop(0.2);
  Matrix x = normal(rng, 1.0, 6, 5);
  drop.forward(x, &rng, true);
  drop.set_frozen(true);
  Matrix dx;
  auto r = gradcheck(
      "dropout", [&] { return drop.forward(x, &rng, true); },
      [&](const Matrix& dy) { dx = drop.backward(dy); }, {{"input", &x, &dx}}, rng,
      kLinearThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_wj_layer(std::uint64_t seed) {
  Rng rng(seed);
  const SkeletonGraph g = small_graph(rng);
  const GraphOperators ops = build_operators(g);
  const std::size_t batch = 2, c_in = 3, c_out = 5, f = 4;
  nn::WjLayer wj("wj", ops.norm_adj, c_in, c_out, f, 0.3, rng);
  jitter(wj.omega, rng, 0.5, 1.5);
  jitter(wj.q, rng, -0.2, 0.2);
  Matrix h = normal(rng, 1.0, batch * g.n_joints, c_in);
  Matrix x0 = normal(rng, 1.0, batch * g.n_joints, f);
  Matrix dh, dx0;
  auto r = gradcheck(
      "wj_layer", [&] { return wj.forward(h, x0); },
      [&](const Matrix& dy) {
        for (Parameter* p : {&wj.w1, &wj.w2, &wj.w3, &wj.omega, &wj.q}) p->zero_grad();
        auto gr = wj.backward(dy);
        dh = std::move(gr.dh);
        dx0 = std::move(gr.dx0);
      },
      {target(wj.w1), target(wj.w2), target(wj.w3), target(wj.omega), target(wj.q),
       {"input", &h, &dh}, {"x0", &x0, &dx0}},
      rng, kLayerThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_joint_mixing(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 4, f = 3, batch = 2;
  nn::JointMixing jm("jm", n, f, rng);
  jitter(jm.ln.gain, rng, 0.5, 1.5);
  jitter(jm.ln.bias, rng, -0.5, 0.5);
  Matrix h = normal(rng, 1.0, batch * n, f);
  Matrix dh;
  auto r = gradcheck(
      "joint_mixing", [&] { return jm.forward(h); },
      [&](const Matrix& dy) {
        for (Parameter* p : {&jm.ln.gain, &jm.ln.bias, &jm.w5, &jm.w6}) p->zero_grad();
        dh = jm.backward(dy);
      },
      {target(jm.ln.gain), target(jm.ln.bias), target(jm.w5), target(jm.w6), {"input", &h, &dh}},
      rng, kDefaultThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_graphwj_block(std::uint64_t seed) {
  Rng rng(seed);
  const SkeletonGraph g = small_graph(rng);
  const GraphOperators ops = build_operators(g);
  const std::size_t f = 3, hidden = 5, batch = 2;
  nn::GraphWjBlock block("block", ops.norm_adj, f, hidden, 0.1, 0.2, rng);
  for (nn::WjLayer* wj : {&block.wj1, &block.wj2}) {
    jitter(wj->omega, rng, 0.5, 1.5);
    jitter(wj->q, rng, -0.2, 0.2);
  }
  Matrix u = normal(rng, 1.0, batch * g.n_joints, f);
  Matrix x0 = normal(rng, 1.0, batch * g.n_joints, f);
  block.forward(u, x0, batch, &rng, true);
  block.drop1.set_frozen(true);
  block.drop2.set_frozen(true);

  std::vector<Parameter*> params{&block.wj1.w1,    &block.wj1.w2,    &block.wj1.w3, &block.wj1.omega,
                                 &block.wj1.q,     &block.bn1.gain,  &block.bn1.bias, &block.wj2.w1,
                                 &block.wj2.w2,    &block.wj2.w3,    &block.wj2.omega, &block.wj2.q,
                                 &block.bn2.gain,  &block.bn2.bias};
  Matrix du, dx0;
  std::vector<GradTarget> targets;
  for (Parameter* p : params) targets.push_back(target(*p));
  targets.push_back({"input", &u, &du});
  targets.push_back({"x0", &x0, &dx0});
  auto r = gradcheck(
      "graphwj_block", [&] { return block.forward(u, x0, batch, &rng, true); },
      [&](const Matrix& dy) {
        for (Parameter* p : params) p->zero_grad();
        auto gr = block.backward(dy);
        du = std::move(gr.du);
        dx0 = std::move(gr.dx0);
      },
      targets, rng, kDefaultThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_head(std::uint64_t seed) {
  Rng rng(seed);
  nn::RegressionHead head(4, rng);
  jitter(head.ln.gain, rng, 0.5, 1.5);
  jitter(head.ln.bias, rng, -0.5, 0.5);
  jitter(head.b, rng, -0.5, 0.5);
  Matrix z = normal(rng, 1.0, 6, 4);
  Matrix dz;
  auto r = gradcheck(
      "regression_head", [&] { return head.forward(z); },
      [&](const Matrix& dy) {
        for (Parameter* p : {&head.ln.gain, &head.ln.bias, &head.w, &head.b}) p->zero_grad();
        dz = head.backward(dy);
      },
      {target(head.ln.gain), target(head.ln.bias), target(head.w), target(head.b),
       {"input", &z, &dz}},
      rng, kDefaultThreshold);
  r.seed = seed;
  return r;
}

GradcheckReport audit_pose_loss(std::uint64_t seed) {
  Rng rng(seed);
  const double lambda = 0.3;
  Matrix pred = normal(rng, 1.0, 5, 3);
  const Matrix target3 = normal(rng, 1.0, 5, 3);
  const Matrix analytic = pose_loss_grad(pred, target3, lambda);
  GradcheckReport r;
  r.layer = "pose_loss";
  r.seed = seed;
  r.threshold = kLayerThreshold;
  TargetError err;
  err.name = "pred";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double& x = pred.data()[i];
    const double saved = x;
    // The l1 term has a kink at zero residual.
    if (std::abs(target3.data()[i] - saved) <= 2.0 * kGradcheckStep) continue;
    x = saved + kGradcheckStep;
    const double lp = pose_loss(pred, target3, lambda);
    x = saved - kGradcheckStep;
    const double lm = pose_loss(pred, target3, lambda);
    x = saved;
    const double numeric = (lp - lm) / (2.0 * kGradcheckStep);
    ++err.entries;
    err.max_rel_error = std::max(err.max_rel_error, relative_error(analytic.data()[i], numeric));
    err.max_abs_error = std::max(err.max_abs_error, std::abs(analytic.data()[i] - numeric));
  }
  r.targets.push_back(err);
  return r;
}

GradcheckReport audit_model(std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig cfg;
  cfg.n_joints = 4;
  cfg.frames = 3;
  cfg.layers = 1;
  cfg.embed_dim = 3;
  cfg.hidden_dim = 5;
  cfg.seed = seed;
  const std::size_t batch = 2;
  MixerModel model(cfg, small_graph(rng));
  for (Parameter* p : model.parameters()) {
    if (p->name.ends_with(".omega") || p->name.ends_with(".gain")) jitter(*p, rng, 0.5, 1.5);
    else if (p->name.ends_with(".q")) jitter(*p, rng, -0.2, 0.2);
    else if (p->name.ends_with(".bias") || p->name == "head.b") jitter(*p, rng, -0.5, 0.5);
  }
  Matrix s = normal(rng, 1.0, batch * cfg.n_joints, 2 * cfg.frames);
  model.forward(s, true, &rng);
  model.set_dropout_frozen(true);

  Matrix ds;
  std::vector<GradTarget> targets;
  for (Parameter* p : model.parameters()) targets.push_back(target(*p));
  targets.push_back({"input", &s, &ds});
  auto r = gradcheck(
      "model", [&] { return model.forward(s, true, &rng); },
      [&](const Matrix& dy) {
        model.zero_grad();
        ds = model.backward(dy);
      },
      targets, rng, kDefaultThreshold);
  r.seed = seed;
  return r;
}

std::vector<GradcheckReport> run_audit_suite(std::uint64_t seed) {
  return {audit_embedding(seed),    audit_gelu(seed),         audit_layernorm(seed),
          audit_batchnorm(seed),    audit_dropout(seed),      audit_wj_layer(seed),
          audit_joint_mixing(seed), audit_graphwj_block(seed), audit_head(seed),
          audit_pose_loss(seed),    audit_model(seed)};
}

}  // namespace wjmix
