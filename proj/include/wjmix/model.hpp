#pragma once

// The MLP-GraphWJ mixer: skeleton embedding, L mixer layers (joint mixing +
// GraphWJ block), final skip connection and regression head.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wjmix/graph.hpp"
#include "wjmix/nn.hpp"
#include "wjmix/tensor.hpp"

namespace wjmix {

struct ModelConfig {
  std::size_t n_joints = 16;
  std::size_t frames = 243;
  std::size_t layers = 3;
  std::size_t embed_dim = 384;
  std::size_t hidden_dim = 768;
  double alpha = 0.1;
  double lambda = 0.01;
  double dropout = 0.2;
  // Millimetres per network output unit. Targets are divided by this before
  // the loss and predictions multiplied by it before metrics.
  double target_unit_mm = 1000.0;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
// Missing keys keep the values already in `base`; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct ParamRow {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t count = 0;
};

struct ParamTable {
  std::vector<ParamRow> rows;
  std::size_t total = 0;          // direct registry summation
  std::size_t formula_total = 0;  // closed form below
  std::string formula;
};

// Closed-form trainable parameter count:
//   2TF + L·(2F + 2NF + 3FR + NR + 2R + 2RF + F² + NF + 2N² + 2F) + 5F + 3
// (embedding; per layer: joint-mix LN + W₅ + W₆, WJ₁ W₁..W₃ + Ω, BN₁,
// WJ₂ W₁..W₃ + Ω, two Q matrices, BN₂; head LN + W + b).
std::size_t param_count_formula(const ModelConfig& c);
std::string param_count_formula_text();

class MixerModel {
 public:
  struct Layer {
    nn::JointMixing joint_mix;
    nn::GraphWjBlock block;
  };

  MixerModel() = default;
  MixerModel(const ModelConfig& config, const SkeletonGraph& graph);

  const ModelConfig& config() const { return config_; }
  const SkeletonGraph& graph() const { return graph_; }

  // s_tilde: stacked (B·N)×2T inputs. Returns stacked (B·N)×3 predictions in
  // network units. `rng` drives dropout and may be null when not training.
  Matrix forward(const Matrix& s_tilde, bool training, Rng* rng);
  // Accumulates parameter gradients; returns d(loss)/d(s_tilde).
  Matrix backward(const Matrix& dy);

  // Fixed construction order; names are unique.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<nn::BatchNorm*> batchnorms();
  std::vector<const nn::BatchNorm*> batchnorms() const;
  Parameter* find_parameter(const std::string& name);

  void zero_grad();
  void set_dropout_frozen(bool frozen);

  ParamTable count_params() const;

  // Shapes observed during the last forward, for conformance checks.
  struct TraceShapes {
    Shape embedding;
    std::vector<Shape> joint_mix;
    std::vector<Shape> block_hidden;
    std::vector<Shape> block_out;
    Shape output;
  };
  const TraceShapes& last_shapes() const { return shapes_; }

  std::vector<Layer> layers;
  nn::SkeletonEmbedding embedding;
  nn::RegressionHead head;

 private:
  ModelConfig config_;
  SkeletonGraph graph_;
  std::size_t batch_ = 0;
  TraceShapes shapes_;
};

// Checkpoint JSON:
//   {"format_version": 1, "config": {...}, "topology": {...},
//    "params": {name: {"shape": [r, c], "data": [...]}},
//    "bn_running_stats": {name: {"mean": [...], "var": [...]}},
//    "optimizer_state": {...} (optional), "train_state": {...} (optional)}
struct Checkpoint {
  MixerModel model;
  std::optional<nlohmann::json> optimizer_state;
  std::optional<nlohmann::json> train_state;
};

// A null optimizer_state or train_state is omitted from the file.
nlohmann::json checkpoint_to_json(const MixerModel& model, const nlohmann::json& optimizer_state = {},
                                  const nlohmann::json& train_state = {});
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const MixerModel& model,
                     const nlohmann::json& optimizer_state = {},
                     const nlohmann::json& train_state = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wjmix
