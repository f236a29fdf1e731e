#pragma once

// Skeleton topology and the normalized graph operators built from it.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wjmix/tensor.hpp"

namespace wjmix {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Edge = std::pair<std::size_t, std::size_t>;

struct SkeletonGraph {
  std::size_t n_joints = 0;
  std::vector<Edge> edges;
  std::size_t root = 0;
  std::vector<std::string> names;  // empty or one per joint

  // Throws GraphError on self-loops, duplicate edges, out-of-range indices,
  // a bad root, or a disconnected graph.
  void validate() const;
  bool is_tree() const;
  std::vector<std::size_t> degrees() const;
  // Parent of every joint in a BFS tree from the root; root maps to itself.
  std::vector<std::size_t> parents() const;
  // Joints in BFS order from the root.
  std::vector<std::size_t> bfs_order() const;
};

struct GraphOperators {
  Matrix adj;        // A, 0/1 symmetric
  Matrix norm_adj;   // D^-1/2 A D^-1/2
  Matrix laplacian;  // I - norm_adj
  std::vector<double> sqrt_degrees;
};

GraphOperators build_operators(const SkeletonGraph& g);

// 16-joint Human3.6M skeleton rooted at the pelvis:
//   0 pelvis, 1-3 right hip/knee/ankle, 4-6 left hip/knee/ankle, 7 spine,
//   8 thorax, 9 head, 10-12 left shoulder/elbow/wrist,
//   13-15 right shoulder/elbow/wrist.
SkeletonGraph human36m_topology();

// JSON: {"n_joints": int, "root": int, "edges": [[i,j],...], "names": [...]}
SkeletonGraph load_topology(const std::filesystem::path& path);
void save_topology(const SkeletonGraph& g, const std::filesystem::path& path);
SkeletonGraph topology_from_json_text(const std::string& text);
std::string topology_to_json_text(const SkeletonGraph& g);

// Uniform random labelled tree (random attachment) plus `extra_edges`
// additional distinct non-loop edges where possible.
SkeletonGraph random_connected_graph(Rng& rng, std::size_t n, std::size_t extra_edges);

// Learnable additive perturbation Q of the normalized adjacency.
// The modulated value base + Q is recomputed on every call.
class ModulatedAdjacency {
 public:
  ModulatedAdjacency() = default;
  ModulatedAdjacency(Matrix base, Matrix q);

  const Matrix& base() const { return base_; }
  const Matrix& q() const { return q_; }
  Matrix& q() { return q_; }

  Matrix value() const;

 private:
  Matrix base_;
  Matrix q_;
};

Matrix modulated_adj(const Matrix& base, const Matrix& q);

// Q initial draw: uniform in [-0.01, 0.01] per entry.
Matrix init_modulation(Rng& rng, std::size_t n);

}  // namespace wjmix
