#include "wjmix/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "wjmix/kernels.hpp"
#include "wjmix/metrics.hpp"

namespace wjmix {
namespace {

using nlohmann::json;

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": prediction " + to_string(a.shape()) +
                         " vs target " + to_string(b.shape()));
}

std::string parameter_norms(const MixerModel& model) {
  std::ostringstream out;
  for (const Parameter* p : model.parameters())
    out << "  " << p->name << ": |value|=" << frobenius_norm(p->value)
        << " |grad|=" << frobenius_norm(p->grad) << "\n";
  return out.str();
}

json rng_to_json(const Rng& rng) {
  json arr = json::array();
  for (std::uint64_t w : rng.state()) arr.push_back(w);
  return arr;
}

Rng rng_from_json(const json& j) {
  std::array<std::uint64_t, 4> s{};
  for (std::size_t i = 0; i < 4; ++i) s[i] = j.at(i).get<std::uint64_t>();
  Rng rng;
  rng.set_state(s);
  return rng;
}

json matrix_data(const Matrix& m) { return std::vector<double>(m.data().begin(), m.data().end()); }

void load_matrix_data(Matrix& m, const json& j, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != m.size())
    throw DimensionError("optimizer state for '" + what + "' has " + std::to_string(v.size()) +
                         " entries, expected " + std::to_string(m.size()));
  std::copy(v.begin(), v.end(), m.data().begin());
}

}  // namespace

double pose_loss(const Matrix& pred, const Matrix& target, double lambda) {
  require_same_shape(pred, target, "pose_loss");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("pose_loss: lambda must lie in [0, 1]");
  double l2 = 0.0;
  double l1 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = target.data()[i] - pred.data()[i];
    l2 += r * r;
    l1 += std::abs(r);
  }
  return ((1.0 - lambda) * l2 + lambda * l1) / static_cast<double>(pred.rows());
}

Matrix pose_loss_grad(const Matrix& pred, const Matrix& target, double lambda) {
  require_same_shape(pred, target, "pose_loss_grad");
  const double inv_n = 1.0 / static_cast<double>(pred.rows());
  Matrix g(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = target.data()[i] - pred.data()[i];
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    g.data()[i] = inv_n * (-2.0 * (1.0 - lambda) * r - lambda * sign);
  }
  return g;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
  if (!(lr0 > 0.0)) throw std::invalid_argument("train config: lr0 must be positive");
  if (!(per_epoch_decay > 0.0 && per_epoch_decay <= 1.0))
    throw std::invalid_argument("train config: per_epoch_decay must lie in (0, 1]");
  if (!(five_epoch_decay > 0.0 && five_epoch_decay <= 1.0))
    throw std::invalid_argument("train config: five_epoch_decay must lie in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("train config: lambda must lie in [0, 1]");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("train config: val_fraction must lie in [0, 1)");
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"lr0", c.lr0},
              {"per_epoch_decay", c.per_epoch_decay},
              {"five_epoch_decay", c.five_epoch_decay},
              {"lambda", c.lambda},
              {"val_fraction", c.val_fraction},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("train config: expected a JSON object");
  static const std::set<std::string> known{"batch_size", "epochs", "lr0",          "per_epoch_decay",
                                           "five_epoch_decay", "lambda", "val_fraction", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("train config: unknown key '" + key + "'");
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lr0 = j.value("lr0", c.lr0);
    c.per_epoch_decay = j.value("per_epoch_decay", c.per_epoch_decay);
    c.five_epoch_decay = j.value("five_epoch_decay", c.five_epoch_decay);
    c.lambda = j.value("lambda", c.lambda);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  return c;
}

double lr_at_epoch(const TrainConfig& c, std::size_t epoch) {
  return c.lr0 * std::pow(c.per_epoch_decay, static_cast<double>(epoch)) *
         std::pow(c.five_epoch_decay, static_cast<double>(epoch / 5));
}

// --- AMSGrad ----------------------------------------------------------------

void AmsGrad::step(const std::vector<Parameter*>& params, double lr) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    double* theta = p->value.data().data();
    const double* g = p->grad.data().data();
    double* m = p->m.data().data();
    double* v = p->v.data().data();
    double* vh = p->v_hat.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      vh[i] = std::max(vh[i], v[i]);
      const double m_hat = m[i] / bc1;
      const double v_corr = vh[i] / bc2;
      theta[i] -= lr * m_hat / (std::sqrt(v_corr) + kEps);
    }
  }
}

json AmsGrad::state_json(const std::vector<const Parameter*>& params) const {
  json moments = json::object();
  for (const Parameter* p : params)
    moments[p->name] = json{{"m", matrix_data(p->m)}, {"v", matrix_data(p->v)},
                            {"v_hat", matrix_data(p->v_hat)}};
  return json{{"algorithm", "amsgrad"},
              {"beta1", kBeta1},
              {"beta2", kBeta2},
              {"eps", kEps},
              {"step", step_count_},
              {"moments", std::move(moments)}};
}

void AmsGrad::load_state_json(const json& j, const std::vector<Parameter*>& params) {
  step_count_ = j.at("step").get<std::size_t>();
  const json& moments = j.at("moments");
  for (Parameter* p : params) {
    if (!moments.contains(p->name))
      throw std::invalid_argument("optimizer state: missing moments for '" + p->name + "'");
    const json& e = moments.at(p->name);
    load_matrix_data(p->m, e.at("m"), p->name);
    load_matrix_data(p->v, e.at("v"), p->name);
    load_matrix_data(p->v_hat, e.at("v_hat"), p->name);
  }
}

// --- batches ----------------------------------------------------------------

Batch make_batch(const std::vector<PoseSample>& samples, const std::vector<std::size_t>& indices,
                 const ModelConfig& config, std::size_t root) {
  const std::size_t n = config.n_joints;
  Batch batch;
  batch.size = indices.size();
  batch.inputs = Matrix(indices.size() * n, 2 * config.frames);
  batch.targets = Matrix(indices.size() * n, 3);
  const double inv_unit = 1.0 / config.target_unit_mm;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const PoseSample& s = samples.at(indices[b]);
    if (s.frames() != config.frames)
      throw DimensionError("sample '" + s.id + "' has " + std::to_string(s.frames()) +
                           " frames, model expects " + std::to_string(config.frames));
    if (s.joints() != n)
      throw DimensionError("sample '" + s.id + "' has " + std::to_string(s.joints()) +
                           " joints, model expects " + std::to_string(n));
    batch.inputs.set_rows(b * n, concat_frames(normalize_2d(s.seq2d, root)));
    batch.targets.set_rows(b * n, scale(s.target3d, inv_unit));
  }
  return batch;
}

std::vector<Matrix> predict_mm(MixerModel& model, const std::vector<PoseSample>& samples,
                               const std::vector<std::size_t>& indices, std::size_t chunk) {
  const std::size_t n = model.config().n_joints;
  std::vector<Matrix> out;
  out.reserve(indices.size());
  for (std::size_t first = 0; first < indices.size(); first += chunk) {
    const std::size_t last = std::min(indices.size(), first + chunk);
    const std::vector<std::size_t> part(indices.begin() + static_cast<std::ptrdiff_t>(first),
                                        indices.begin() + static_cast<std::ptrdiff_t>(last));
    const Batch batch = make_batch(samples, part, model.config(), model.graph().root);
    const Matrix y = scale(model.forward(batch.inputs, false, nullptr), model.config().target_unit_mm);
    for (std::size_t b = 0; b < part.size(); ++b) out.push_back(y.rows_slice(b * n, n));
  }
  return out;
}

json to_json(const EpochLog& e) {
  json j{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}};
  j["val_mpjpe"] = std::isfinite(e.val_mpjpe) ? json(e.val_mpjpe) : json(nullptr);
  return j;
}

// --- training loop ----------------------------------------------------------

TrainResult train(MixerModel& model, const std::vector<PoseSample>& dataset,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  TrainResult result;
  result.split = split_indices(dataset.size(), config.val_fraction, config.seed);
  if (result.split.train.size() < 2)
    throw std::invalid_argument("train: need at least 2 training samples");

  const std::size_t root = model.graph().root;
  Rng rng(config.seed);
  AmsGrad optimizer;
  std::size_t start_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  if (options.resume_train_state) {
    const json& st = *options.resume_train_state;
    start_epoch = st.at("next_epoch").get<std::size_t>();
    rng = rng_from_json(st.at("rng_state"));
    if (st.contains("best_val_mpjpe") && st.at("best_val_mpjpe").is_number())
      best_val = st.at("best_val_mpjpe").get<double>();
  }
  if (options.resume_optimizer_state)
    optimizer.load_state_json(*options.resume_optimizer_state, model.parameters());

  std::ofstream log_file;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_file.open(*options.out_dir / "train_log.jsonl",
                  start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!log_file) throw IoError("cannot write training log in " + options.out_dir->string());
  }

  std::size_t end_epoch = config.epochs;
  if (options.max_epochs_this_run)
    end_epoch = std::min(end_epoch, start_epoch + *options.max_epochs_this_run);

  const auto params = model.parameters();
  for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    std::vector<std::size_t> order = result.split.train;
    shuffle(order, rng);

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      if (last - first < 2) continue;  // batch norm needs two samples
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(first),
                                         order.begin() + static_cast<std::ptrdiff_t>(last));
      const Batch batch = make_batch(dataset, idx, model.config(), root);
      model.zero_grad();
      const Matrix pred = model.forward(batch.inputs, true, &rng);
      const double loss = pose_loss(pred, batch.targets, config.lambda);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(n_batches) + " (first sample '" + dataset[idx.front()].id +
                             "'); parameter norms:\n" + parameter_norms(model));
      model.backward(pose_loss_grad(pred, batch.targets, config.lambda));
      optimizer.step(params, lr);
      loss_sum += loss;
      ++n_batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = n_batches > 0 ? loss_sum / static_cast<double>(n_batches) : 0.0;
    entry.val_mpjpe = std::numeric_limits<double>::quiet_NaN();
    if (!result.split.val.empty()) {
      const auto preds = predict_mm(model, dataset, result.split.val);
      double s = 0.0;
      for (std::size_t i = 0; i < preds.size(); ++i)
        s += mpjpe(root_relative(preds[i], root),
                   root_relative(dataset[result.split.val[i]].target3d, root));
      entry.val_mpjpe = s / static_cast<double>(preds.size());
    }
    result.log.push_back(entry);

    const bool improved = std::isfinite(entry.val_mpjpe) && entry.val_mpjpe < best_val;
    if (improved) best_val = entry.val_mpjpe;

    if (options.out_dir) {
      log_file << to_json(entry).dump() << "\n" << std::flush;
      const json train_state{{"next_epoch", epoch + 1},
                             {"rng_state", rng_to_json(rng)},
                             {"best_val_mpjpe", std::isfinite(best_val) ? json(best_val) : json(nullptr)},
                             {"train_config", to_json(config)}};
      const json opt_state = optimizer.state_json(std::as_const(model).parameters());
      save_checkpoint(*options.out_dir / "checkpoint_last.json", model, opt_state, train_state);
      if (improved) save_checkpoint(*options.out_dir / "checkpoint_best.json", model, opt_state, train_state);
    }
    if (options.on_epoch) options.on_epoch(entry);
  }
  result.best_val_mpjpe = best_val;
  return result;
}

}  // namespace wjmix
