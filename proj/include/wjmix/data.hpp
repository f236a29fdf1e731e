#pragma once

// Pose samples, dataset files, and the seeded synthetic skeleton generator.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wjmix/graph.hpp"
#include "wjmix/tensor.hpp"

namespace wjmix {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PoseSample {
  std::string id;
  std::vector<Matrix> seq2d;  // T frames, each N×2
  Matrix target3d;            // N×3, millimetres, root-relative (center frame)

  std::size_t frames() const { return seq2d.size(); }
  std::size_t joints() const { return target3d.rows(); }

  friend bool operator==(const PoseSample&, const PoseSample&) = default;
};

// Window of T frames centred on `center`; indices outside the sequence are
// clamped to the first/last frame.
std::vector<Matrix> window_sequence(const std::vector<Matrix>& frames, std::size_t t,
                                    std::size_t center);

// Subtracts the center-frame root joint from every frame and divides by the
// center frame's largest joint radius. Throws DataError if that radius is 0.
std::vector<Matrix> normalize_2d(const std::vector<Matrix>& seq2d, std::size_t root);

// S̃ (N×2T): row j is (x₀, y₀, x₁, y₁, …) of joint j across frames.
Matrix concat_frames(const std::vector<Matrix>& seq2d);

// --- dataset files: one JSON object per line --------------------------------
//   {"id": str, "seq2d": [T][N][2], "target3d": [N][3]}

std::string sample_to_json_line(const PoseSample& s);
void save_dataset(const std::filesystem::path& path, const std::vector<PoseSample>& samples);
void write_dataset(std::ostream& out, const std::vector<PoseSample>& samples);
// Errors name the 1-based line and the offending field.
std::vector<PoseSample> load_dataset(const std::filesystem::path& path);
std::vector<PoseSample> read_dataset(std::istream& in);

// --- synthetic generation ---------------------------------------------------

struct SyntheticConfig {
  std::size_t n_samples = 2000;
  std::size_t frames = 9;
  // One length per edge (mm). Empty: defaults for the Human3.6M topology,
  // otherwise 250 mm per bone.
  std::vector<double> bone_lengths;
  double angle_step_sigma = 0.05;  // rad per frame
  double init_angle_sigma = 0.35;  // rad, spread of the initial pose around rest
  double noise2d_sigma = 0.0;      // 2D units (mm before normalization)
  bool random_camera = true;
  std::uint64_t seed = 0;

  void validate(std::size_t n_edges) const;
};

nlohmann::json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig base = {});

// Rest-pose bone directions (unit vectors, y up) in edge order.
std::vector<std::array<double, 3>> rest_directions(const SkeletonGraph& g);
std::vector<double> default_bone_lengths(const SkeletonGraph& g);

// Per sample: random initial joint angles, a Gaussian random walk per frame,
// forward kinematics along the tree, and orthographic projection through a
// random camera. The target is the camera-frame center pose, root-relative.
// Sample i draws from Rng(splitmix64(seed) ^ i).
std::vector<PoseSample> generate_synthetic(const SyntheticConfig& config, const SkeletonGraph& graph);

// World-space joint positions for every frame of one sample, before the
// camera; exposed for bone-length checks.
std::vector<Matrix> synthetic_motion(const SyntheticConfig& config, const SkeletonGraph& graph,
                                     std::size_t index);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Seeded shuffle; the first ceil(val_fraction·n) indices form the val set
// (at least one when n >= 2 and val_fraction > 0).
Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed);

}  // namespace wjmix
