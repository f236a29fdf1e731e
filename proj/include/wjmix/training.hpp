#pragma once

// Loss, AMSGrad, learning-rate schedule and the training loop.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wjmix/data.hpp"
#include "wjmix/model.hpp"
#include "wjmix/tensor.hpp"

namespace wjmix {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// (1/N)·[(1−λ)·Σᵢ‖yᵢ−ŷᵢ‖₂² + λ·Σᵢ‖yᵢ−ŷᵢ‖₁] over the N rows.
double pose_loss(const Matrix& pred, const Matrix& target, double lambda);
// d(pose_loss)/d(pred); the ℓ₁ subgradient at a zero residual is 0.
Matrix pose_loss_grad(const Matrix& pred, const Matrix& target, double lambda);

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  double lr0 = 0.001;
  double per_epoch_decay = 0.95;
  double five_epoch_decay = 0.5;
  double lambda = 0.01;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// lr0 · per_epoch_decay^epoch · five_epoch_decay^⌊epoch/5⌋ (epoch is 0-based).
double lr_at_epoch(const TrainConfig& c, std::size_t epoch);

// AMSGrad with Adam-style bias correction:
//   m ← β₁m + (1−β₁)g;  v ← β₂v + (1−β₂)g²;  v̂ ← max(v̂, v)
//   θ ← θ − lr · (m / (1−β₁ᵗ)) / (sqrt(v̂ / (1−β₂ᵗ)) + ε)
// Moments live in each Parameter; the step counter lives here.
class AmsGrad {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  void step(const std::vector<Parameter*>& params, double lr);
  std::size_t step_count() const { return step_count_; }
  void set_step_count(std::size_t t) { step_count_ = t; }

  nlohmann::json state_json(const std::vector<const Parameter*>& params) const;
  void load_state_json(const nlohmann::json& j, const std::vector<Parameter*>& params);

 private:
  std::size_t step_count_ = 0;
};

// Stacked S̃ rows (normalized 2D) and stacked targets (network units) for the
// samples at `indices`.
struct Batch {
  Matrix inputs;   // (B·N)×2T
  Matrix targets;  // (B·N)×3
  std::size_t size = 0;
};
Batch make_batch(const std::vector<PoseSample>& samples, const std::vector<std::size_t>& indices,
                 const ModelConfig& config, std::size_t root);

// Eval-mode predictions in millimetres, one N×3 matrix per sample.
std::vector<Matrix> predict_mm(MixerModel& model, const std::vector<PoseSample>& samples,
                               const std::vector<std::size_t>& indices, std::size_t chunk = 256);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mpjpe = 0.0;
};
nlohmann::json to_json(const EpochLog& e);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + train_log.jsonl
  std::function<void(const EpochLog&)> on_epoch;
  // Resume from a checkpoint's train_state/optimizer_state.
  std::optional<nlohmann::json> resume_train_state;
  std::optional<nlohmann::json> resume_optimizer_state;
  // Stop after this many epochs in this call (the log still numbers epochs
  // from the start of training).
  std::optional<std::size_t> max_epochs_this_run;
};

struct TrainResult {
  std::vector<EpochLog> log;
  Split split;
  double best_val_mpjpe = 0.0;
};

// Trains in place. Throws NumericalError on a non-finite loss, naming the
// epoch, batch and parameter norms.
TrainResult train(MixerModel& model, const std::vector<PoseSample>& dataset,
                  const TrainConfig& config, const TrainOptions& options = {});

}  // namespace wjmix
