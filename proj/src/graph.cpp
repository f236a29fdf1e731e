#include "wjmix/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace wjmix {
namespace {

using nlohmann::json;

std::vector<std::vector<std::size_t>> neighbours(const SkeletonGraph& g) {
  std::vector<std::vector<std::size_t>> nb(g.n_joints);
  for (const auto& [i, j] : g.edges) {
    nb[i].push_back(j);
    nb[j].push_back(i);
  }
  for (auto& list : nb) std::sort(list.begin(), list.end());
  return nb;
}

}  // namespace

void SkeletonGraph::validate() const {
  if (n_joints == 0) throw GraphError("skeleton graph has no joints");
  if (root >= n_joints)
    throw GraphError("root index " + std::to_string(root) + " out of range for " +
                     std::to_string(n_joints) + " joints");
  if (!names.empty() && names.size() != n_joints)
    throw GraphError("names list has " + std::to_string(names.size()) + " entries, expected " +
                     std::to_string(n_joints));
  std::set<Edge> seen;
  for (const auto& [i, j] : edges) {
    if (i >= n_joints || j >= n_joints)
      throw GraphError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                       ") references a joint >= " + std::to_string(n_joints));
    if (i == j) throw GraphError("self-loop on joint " + std::to_string(i));
    const Edge key{std::min(i, j), std::max(i, j)};
    if (!seen.insert(key).second)
      throw GraphError("duplicate edge (" + std::to_string(key.first) + "," +
                       std::to_string(key.second) + ")");
  }
  const auto deg = degrees();
  if (n_joints > 1) {
    for (std::size_t v = 0; v < n_joints; ++v)
      if (deg[v] == 0) throw GraphError("joint " + std::to_string(v) + " is isolated");
  }
  if (bfs_order().size() != n_joints) throw GraphError("skeleton graph is disconnected");
}

bool SkeletonGraph::is_tree() const {
  return edges.size() + 1 == n_joints && bfs_order().size() == n_joints;
}

std::vector<std::size_t> SkeletonGraph::degrees() const {
  std::vector<std::size_t> d(n_joints, 0);
  for (const auto& [i, j] : edges) {
    if (i < n_joints) ++d[i];
    if (j < n_joints) ++d[j];
  }
  return d;
}

std::vector<std::size_t> SkeletonGraph::bfs_order() const {
  if (root >= n_joints) return {};
  const auto nb = neighbours(*this);
  std::vector<bool> seen(n_joints, false);
  std::vector<std::size_t> order;
  std::queue<std::size_t> frontier;
  frontier.push(root);
  seen[root] = true;
  while (!frontier.empty()) {
    const std::size_t v = frontier.front();
    frontier.pop();
    order.push_back(v);
    for (std::size_t w : nb[v]) {
      if (!seen[w]) {
        seen[w] = true;
        frontier.push(w);
      }
    }
  }
  return order;
}

std::vector<std::size_t> SkeletonGraph::parents() const {
  const auto nb = neighbours(*this);
  std::vector<std::size_t> parent(n_joints, n_joints);
  parent[root] = root;
  for (std::size_t v : bfs_order())
    for (std::size_t w : nb[v])
      if (parent[w] == n_joints) parent[w] = v;
  return parent;
}

GraphOperators build_operators(const SkeletonGraph& g) {
  g.validate();
  const std::size_t n = g.n_joints;
  GraphOperators ops;
  ops.adj = Matrix(n, n);
  for (const auto& [i, j] : g.edges) {
    ops.adj(i, j) = 1.0;
    ops.adj(j, i) = 1.0;
  }
  const auto deg = g.degrees();
  ops.sqrt_degrees.resize(n);
  for (std::size_t v = 0; v < n; ++v) ops.sqrt_degrees[v] = std::sqrt(static_cast<double>(deg[v]));

  ops.norm_adj = Matrix(n, n);
  for (const auto& [i, j] : g.edges) {
    const double w = 1.0 / std::sqrt(static_cast<double>(deg[i]) * static_cast<double>(deg[j]));
    ops.norm_adj(i, j) = w;
    ops.norm_adj(j, i) = w;
  }
  ops.laplacian = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      ops.laplacian(i, j) = (i == j ? 1.0 : 0.0) - ops.norm_adj(i, j);
  return ops;
}

SkeletonGraph human36m_topology() {
  SkeletonGraph g;
  g.n_joints = 16;
  g.root = 0;
  g.edges = {{0, 1},  {1, 2},  {2, 3},  {0, 4},   {4, 5},   {5, 6},   {0, 7},  {7, 8},
             {8, 9},  {8, 10}, {10, 11}, {11, 12}, {8, 13}, {13, 14}, {14, 15}};
  g.names = {"pelvis",     "right_hip",  "right_knee",  "right_ankle",    "left_hip",
             "left_knee",  "left_ankle", "spine",       "thorax",         "head",
             "left_shoulder", "left_elbow", "left_wrist", "right_shoulder", "right_elbow",
             "right_wrist"};
  return g;
}

SkeletonGraph topology_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GraphError(std::string("topology: invalid JSON: ") + e.what());
  }
  SkeletonGraph g;
  try {
    g.n_joints = j.at("n_joints").get<std::size_t>();
    g.root = j.value("root", std::size_t{0});
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw GraphError("topology: edge must be a pair");
      g.edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
    if (j.contains("names")) g.names = j.at("names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw GraphError(std::string("topology: ") + e.what());
  }
  g.validate();
  return g;
}

std::string topology_to_json_text(const SkeletonGraph& g) {
  json j;
  j["n_joints"] = g.n_joints;
  j["root"] = g.root;
  j["edges"] = json::array();
  for (const auto& [a, b] : g.edges) j["edges"].push_back({a, b});
  if (!g.names.empty()) j["names"] = g.names;
  return j.dump(2) + "\n";
}

SkeletonGraph load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open topology file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return topology_from_json_text(buf.str());
}

void save_topology(const SkeletonGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write topology file " + path.string());
  out << topology_to_json_text(g);
}

SkeletonGraph random_connected_graph(Rng& rng, std::size_t n, std::size_t extra_edges) {
  SkeletonGraph g;
  g.n_joints = n;
  g.root = 0;
  std::set<Edge> present;
  for (std::size_t v = 1; v < n; ++v) {
    const std::size_t parent = static_cast<std::size_t>(rng.below(v));
    g.edges.emplace_back(parent, v);
    present.insert({parent, v});
  }
  const std::size_t max_edges = n * (n - 1) / 2;
  const std::size_t target = std::min(max_edges, g.edges.size() + extra_edges);
  while (g.edges.size() < target) {
    std::size_t a = static_cast<std::size_t>(rng.below(n));
    std::size_t b = static_cast<std::size_t>(rng.below(n));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (present.insert({a, b}).second) g.edges.emplace_back(a, b);
  }
  return g;
}

ModulatedAdjacency::ModulatedAdjacency(Matrix base, Matrix q) : base_(std::move(base)), q_(std::move(q)) {
  if (base_.shape() != q_.shape() || base_.rows() != base_.cols())
    throw DimensionError("ModulatedAdjacency: base " + to_string(base_.shape()) + " vs Q " +
                         to_string(q_.shape()));
}

Matrix ModulatedAdjacency::value() const { return modulated_adj(base_, q_); }

Matrix modulated_adj(const Matrix& base, const Matrix& q) {
  if (base.shape() != q.shape() || base.rows() != base.cols())
    throw DimensionError("modulated_adj: base " + to_string(base.shape()) + " vs Q " +
                         to_string(q.shape()));
  return add(base, q);
}

Matrix init_modulation(Rng& rng, std::size_t n) { return uniform(rng, -0.01, 0.01, n, n); }

}  // namespace wjmix
