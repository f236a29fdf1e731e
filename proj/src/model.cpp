#include "wjmix/model.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace wjmix {
namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  return json{{"shape", {m.rows(), m.cols()}},
              {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  try {
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw std::invalid_argument(what + ": shape must have two entries");
    return Matrix(shape[0], shape[1], j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw std::invalid_argument(what + ": " + e.what());
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (n_joints < 1) throw std::invalid_argument("model config: n_joints must be >= 1");
  if (frames < 1 || frames % 2 == 0)
    throw std::invalid_argument("model config: frames must be odd and >= 1, got " +
                                std::to_string(frames));
  if (layers < 1) throw std::invalid_argument("model config: layers must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("model config: embed_dim must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("model config: hidden_dim must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("model config: alpha must lie in (0, 1)");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("model config: lambda must lie in [0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("model config: dropout must lie in [0, 1)");
  if (!(target_unit_mm > 0.0))
    throw std::invalid_argument("model config: target_unit_mm must be positive");
}

json to_json(const ModelConfig& c) {
  return json{{"n_joints", c.n_joints},     {"frames", c.frames},
              {"layers", c.layers},         {"embed_dim", c.embed_dim},
              {"hidden_dim", c.hidden_dim}, {"alpha", c.alpha},
              {"lambda", c.lambda},         {"dropout", c.dropout},
              {"target_unit_mm", c.target_unit_mm}, {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw std::invalid_argument("model config: expected a JSON object");
  static const std::set<std::string> known{"n_joints", "frames",  "layers",
                                           "embed_dim", "hidden_dim", "alpha",
                                           "lambda",   "dropout", "target_unit_mm", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("model config: unknown key '" + key + "'");
  try {
    c.n_joints = j.value("n_joints", c.n_joints);
    c.frames = j.value("frames", c.frames);
    c.layers = j.value("layers", c.layers);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.alpha = j.value("alpha", c.alpha);
    c.lambda = j.value("lambda", c.lambda);
    c.dropout = j.value("dropout", c.dropout);
    c.target_unit_mm = j.value("target_unit_mm", c.target_unit_mm);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  return c;
}

std::size_t param_count_formula(const ModelConfig& c) {
  const std::size_t t = c.frames, f = c.embed_dim, r = c.hidden_dim, n = c.n_joints;
  const std::size_t per_layer =
      2 * f + 2 * n * f                 // joint mixing: LN, W5, W6
      + 3 * f * r + n * r + 2 * r       // WJ1 (W1, W2, W3, Ω) and BN1
      + 2 * r * f + f * f + n * f       // WJ2 (W1, W2, W3, Ω)
      + 2 * n * n                       // Q of both WJ layers
      + 2 * f;                          // BN2
  return 2 * t * f + c.layers * per_layer + 5 * f + 3;
}

std::string param_count_formula_text() {
  return "2TF + L*(2F + 2NF + 3FR + NR + 2R + 2RF + F^2 + NF + 2N^2 + 2F) + 5F + 3";
}

MixerModel::MixerModel(const ModelConfig& config, const SkeletonGraph& graph)
    : config_(config), graph_(graph) {
  config_.validate();
  if (graph.n_joints != config.n_joints)
    throw std::invalid_argument("model: graph has " + std::to_string(graph.n_joints) +
                                " joints, config expects " + std::to_string(config.n_joints));
  const GraphOperators ops = build_operators(graph);
  Rng rng(config.seed);
  embedding = nn::SkeletonEmbedding(config.frames, config.embed_dim, rng);
  layers.reserve(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    nn::JointMixing jm(prefix + ".joint_mix", config.n_joints, config.embed_dim, rng);
    nn::GraphWjBlock block(prefix + ".graphwj", ops.norm_adj, config.embed_dim, config.hidden_dim,
                           config.alpha, config.dropout, rng);
    layers.push_back(Layer{std::move(jm), std::move(block)});
  }
  head = nn::RegressionHead(config.embed_dim, rng);
}

Matrix MixerModel::forward(const Matrix& s_tilde, bool training, Rng* rng) {
  const std::size_t n = config_.n_joints;
  if (s_tilde.rows() == 0 || s_tilde.rows() % n != 0)
    throw DimensionError("model forward: input " + to_string(s_tilde.shape()) +
                         " is not a stack of " + std::to_string(n) + "-joint samples");
  batch_ = s_tilde.rows() / n;
  shapes_ = TraceShapes{};
  const Matrix x0 = embedding.forward(s_tilde);
  shapes_.embedding = x0.shape();
  Matrix h = x0;
  Matrix z;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix u = layers[l].joint_mix.forward(h);
    shapes_.joint_mix.push_back(u.shape());
    Matrix q = layers[l].block.forward(u, x0, batch_, rng, training);
    shapes_.block_hidden.push_back(layers[l].block.hidden().shape());
    shapes_.block_out.push_back(q.shape());
    if (l + 1 == layers.size()) {
      z = add(u, q);
    } else {
      h = std::move(q);
    }
  }
  Matrix y = head.forward(z);
  shapes_.output = y.shape();
  return y;
}

Matrix MixerModel::backward(const Matrix& dy) {
  const Matrix dz = head.backward(dy);
  Matrix dx0(dz.rows(), config_.embed_dim);
  // Z = U_L + Q_L: both branches receive dZ.
  Matrix dq = dz;
  Matrix du_skip = dz;
  for (std::size_t l = layers.size(); l-- > 0;) {
    auto block_grads = layers[l].block.backward(dq);
    axpy_inplace(dx0, 1.0, block_grads.dx0);
    Matrix du = std::move(block_grads.du);
    if (l + 1 == layers.size()) axpy_inplace(du, 1.0, du_skip);
    dq = layers[l].joint_mix.backward(du);
  }
  // dq now holds dL/dH⁽⁰⁾, and H⁽⁰⁾ = X₀.
  axpy_inplace(dx0, 1.0, dq);
  return embedding.backward(dx0);
}

std::vector<Parameter*> MixerModel::parameters() {
  std::vector<Parameter*> out{&embedding.w4};
  for (auto& layer : layers) {
    auto& jm = layer.joint_mix;
    out.insert(out.end(), {&jm.ln.gain, &jm.ln.bias, &jm.w5, &jm.w6});
    auto& b = layer.block;
    for (nn::WjLayer* wj : {&b.wj1, &b.wj2}) {
      out.insert(out.end(), {&wj->w1, &wj->w2, &wj->w3, &wj->omega, &wj->q});
      nn::BatchNorm& bn = wj == &b.wj1 ? b.bn1 : b.bn2;
      out.insert(out.end(), {&bn.gain, &bn.bias});
    }
  }
  out.insert(out.end(), {&head.ln.gain, &head.ln.bias, &head.w, &head.b});
  return out;
}

std::vector<const Parameter*> MixerModel::parameters() const {
  auto mut = const_cast<MixerModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<nn::BatchNorm*> MixerModel::batchnorms() {
  std::vector<nn::BatchNorm*> out;
  for (auto& layer : layers) {
    out.push_back(&layer.block.bn1);
    out.push_back(&layer.block.bn2);
  }
  return out;
}

std::vector<const nn::BatchNorm*> MixerModel::batchnorms() const {
  auto mut = const_cast<MixerModel*>(this)->batchnorms();
  return {mut.begin(), mut.end()};
}

Parameter* MixerModel::find_parameter(const std::string& name) {
  for (Parameter* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

void MixerModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

void MixerModel::set_dropout_frozen(bool frozen) {
  for (auto& layer : layers) {
    layer.block.drop1.set_frozen(frozen);
    layer.block.drop2.set_frozen(frozen);
  }
}

ParamTable MixerModel::count_params() const {
  ParamTable table;
  for (const Parameter* p : parameters()) {
    table.rows.push_back({p->name, p->value.rows(), p->value.cols(), p->count()});
    table.total += p->count();
  }
  table.formula_total = param_count_formula(config_);
  table.formula = param_count_formula_text();
  return table;
}

// --- checkpoints ------------------------------------------------------------

json checkpoint_to_json(const MixerModel& model, const json& optimizer_state, const json& train_state) {
  json j;
  j["format_version"] = 1;
  j["config"] = to_json(model.config());
  j["topology"] = json::parse(topology_to_json_text(model.graph()));
  json params = json::object();
  for (const Parameter* p : model.parameters()) params[p->name] = matrix_to_json(p->value);
  j["params"] = std::move(params);
  json stats = json::object();
  for (const nn::BatchNorm* bn : model.batchnorms())
    stats[bn->name] = json{{"mean", bn->running_mean}, {"var", bn->running_var}};
  j["bn_running_stats"] = std::move(stats);
  if (!optimizer_state.is_null()) j["optimizer_state"] = optimizer_state;
  if (!train_state.is_null()) j["train_state"] = train_state;
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format_version", 0) != 1)
    throw std::invalid_argument("checkpoint: unsupported format_version");
  const ModelConfig config = model_config_from_json(j.at("config"));
  const SkeletonGraph graph =
      j.contains("topology") ? topology_from_json_text(j.at("topology").dump()) : human36m_topology();
  Checkpoint ck{MixerModel(config, graph), std::nullopt, std::nullopt};
  const json& params = j.at("params");
  for (Parameter* p : ck.model.parameters()) {
    if (!params.contains(p->name))
      throw std::invalid_argument("checkpoint: missing parameter '" + p->name + "'");
    Matrix value = matrix_from_json(params.at(p->name), "checkpoint parameter '" + p->name + "'");
    if (value.shape() != p->value.shape())
      throw DimensionError("checkpoint: parameter '" + p->name + "' has shape " +
                           to_string(value.shape()) + ", model expects " +
                           to_string(p->value.shape()));
    p->value = std::move(value);
  }
  if (params.size() != ck.model.parameters().size())
    throw std::invalid_argument("checkpoint: unexpected extra parameters");
  if (j.contains("bn_running_stats")) {
    const json& stats = j.at("bn_running_stats");
    for (nn::BatchNorm* bn : ck.model.batchnorms()) {
      if (!stats.contains(bn->name)) continue;
      auto mean = stats.at(bn->name).at("mean").get<std::vector<double>>();
      auto var = stats.at(bn->name).at("var").get<std::vector<double>>();
      if (mean.size() != bn->running_mean.size() || var.size() != bn->running_var.size())
        throw DimensionError("checkpoint: running stats of '" + bn->name + "' have wrong length");
      bn->running_mean = std::move(mean);
      bn->running_var = std::move(var);
    }
  }
  if (j.contains("optimizer_state")) ck.optimizer_state = j.at("optimizer_state");
  if (j.contains("train_state")) ck.train_state = j.at("train_state");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const MixerModel& model,
                     const json& optimizer_state, const json& train_state) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out << checkpoint_to_json(model, optimizer_state, train_state).dump() << "\n";
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace wjmix
