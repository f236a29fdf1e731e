#include "wjmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace wjmix {
namespace {

using nlohmann::json;
using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Vec3 mat3_apply(const Mat3& a, const Vec3& v) {
  Vec3 out{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) out[i] += a[i][k] * v[k];
  return out;
}

Mat3 rot_x(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return Mat3{{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}
Mat3 rot_y(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return Mat3{{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}
Mat3 rot_z(double t) {
  const double c = std::cos(t), s = std::sin(t);
  return Mat3{{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

Mat3 euler_zyx(const Vec3& a) { return mat3_mul(rot_z(a[0]), mat3_mul(rot_y(a[1]), rot_x(a[2]))); }

bool same_topology(const SkeletonGraph& a, const SkeletonGraph& b) {
  if (a.n_joints != b.n_joints || a.edges.size() != b.edges.size()) return false;
  auto canon = [](const SkeletonGraph& g) {
    std::set<Edge> s;
    for (auto [i, j] : g.edges) s.insert({std::min(i, j), std::max(i, j)});
    return s;
  };
  return canon(a) == canon(b);
}

// Rest direction and length for the child joint of each Human3.6M edge.
struct H36mBone {
  std::size_t child;
  Vec3 dir;
  double length;
};

// Relaxed standing pose facing +z: knees slightly bent, head and forearms
// forward. Directions are normalized on first use.
const std::vector<H36mBone>& h36m_bones() {
  static const std::vector<H36mBone> bones = [] {
    std::vector<H36mBone> b{
        {1, {-1, -0.05, 0}, 130},    {2, {0, -1, 0.15}, 450},   {3, {0, -1, -0.25}, 440},
        {4, {1, -0.05, 0}, 130},     {5, {0, -1, 0.15}, 450},   {6, {0, -1, -0.25}, 440},
        {7, {0, 1, -0.05}, 230},     {8, {0, 1, 0.1}, 250},     {9, {0, 1, 0.35}, 200},
        {10, {1, 0.05, -0.1}, 160},  {11, {0, -1, 0.2}, 280},   {12, {0, -0.6, 0.8}, 250},
        {13, {-1, 0.05, -0.1}, 160}, {14, {0, -1, 0.2}, 280},   {15, {0, -0.6, 0.8}, 250}};
    for (auto& bone : b) {
      const double n = std::sqrt(bone.dir[0] * bone.dir[0] + bone.dir[1] * bone.dir[1] +
                                 bone.dir[2] * bone.dir[2]);
      for (double& x : bone.dir) x /= n;
    }
    return b;
  }();
  return bones;
}

// Child joint of every edge, given BFS parents.
std::vector<std::size_t> edge_children(const SkeletonGraph& g) {
  const auto parent = g.parents();
  std::vector<std::size_t> child;
  child.reserve(g.edges.size());
  for (auto [i, j] : g.edges) child.push_back(parent[j] == i ? j : i);
  return child;
}

struct Motion {
  std::vector<Matrix> frames;  // world positions, N×3 each
};

Motion simulate(const SyntheticConfig& cfg, const SkeletonGraph& g, Rng& rng) {
  const std::size_t n = g.n_joints;
  const auto order = g.bfs_order();
  const auto parent = g.parents();
  const auto children = edge_children(g);
  const auto dirs = rest_directions(g);
  const auto lengths = cfg.bone_lengths.empty() ? default_bone_lengths(g) : cfg.bone_lengths;

  // Bone (edge index) ending at each joint.
  std::vector<std::size_t> bone_of(n, g.edges.size());
  for (std::size_t e = 0; e < children.size(); ++e) bone_of[children[e]] = e;

  double root_yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<Vec3> angles(n, Vec3{0, 0, 0});
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    for (double& a : angles[children[e]]) a = rng.normal(0.0, cfg.init_angle_sigma);

  Motion motion;
  motion.frames.reserve(cfg.frames);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    if (t > 0) {
      root_yaw += rng.normal(0.0, cfg.angle_step_sigma);
      for (std::size_t e = 0; e < g.edges.size(); ++e)
        for (double& a : angles[children[e]]) a += rng.normal(0.0, cfg.angle_step_sigma);
    }
    std::vector<Mat3> global(n);
    std::vector<Vec3> pos(n, Vec3{0, 0, 0});
    global[g.root] = rot_y(root_yaw);
    for (std::size_t v : order) {
      if (v == g.root) continue;
      const std::size_t p = parent[v];
      const std::size_t e = bone_of[v];
      global[v] = mat3_mul(global[p], euler_zyx(angles[v]));
      const Vec3 offset{lengths[e] * dirs[e][0], lengths[e] * dirs[e][1], lengths[e] * dirs[e][2]};
      const Vec3 d = mat3_apply(global[v], offset);
      for (int k = 0; k < 3; ++k) pos[v][k] = pos[p][k] + d[k];
    }
    Matrix frame(n, 3);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < 3; ++k) frame(v, k) = pos[v][k];
    motion.frames.push_back(std::move(frame));
  }
  return motion;
}

Rng sample_rng(std::uint64_t seed, std::size_t index) {
  std::uint64_t st = seed;
  return Rng(splitmix64(st) ^ static_cast<std::uint64_t>(index));
}

[[noreturn]] void fail(std::size_t line, const std::string& field, const std::string& msg) {
  throw DataError("line " + std::to_string(line) + ": field '" + field + "': " + msg);
}

Matrix parse_rows(const json& j, std::size_t cols, std::size_t line, const std::string& field) {
  if (!j.is_array() || j.empty()) fail(line, field, "expected a non-empty array");
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const json& row = j[r];
    if (!row.is_array() || row.size() != cols)
      fail(line, field, "row " + std::to_string(r) + " must have " + std::to_string(cols) + " numbers");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) fail(line, field, "non-numeric entry");
      m(r, c) = row[c].get<double>();
      if (!std::isfinite(m(r, c))) fail(line, field, "non-finite entry");
    }
  }
  return m;
}

json rows_to_json(const Matrix& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r)
    out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return out;
}

}  // namespace

std::vector<Matrix> window_sequence(const std::vector<Matrix>& frames, std::size_t t,
                                    std::size_t center) {
  if (frames.empty()) throw DataError("window_sequence: empty frame list");
  if (t == 0 || t % 2 == 0) throw DataError("window_sequence: window length must be odd");
  if (center >= frames.size()) throw DataError("window_sequence: center index out of range");
  const auto half = static_cast<std::ptrdiff_t>(t / 2);
  const auto last = static_cast<std::ptrdiff_t>(frames.size()) - 1;
  std::vector<Matrix> out;
  out.reserve(t);
  for (std::ptrdiff_t k = -half; k <= half; ++k) {
    const std::ptrdiff_t idx = std::clamp(static_cast<std::ptrdiff_t>(center) + k, std::ptrdiff_t{0}, last);
    out.push_back(frames[static_cast<std::size_t>(idx)]);
  }
  return out;
}

std::vector<Matrix> normalize_2d(const std::vector<Matrix>& seq2d, std::size_t root) {
  if (seq2d.empty()) throw DataError("normalize_2d: empty sequence");
  const Matrix& center = seq2d[seq2d.size() / 2];
  if (root >= center.rows()) throw DataError("normalize_2d: root index out of range");
  const double rx = center(root, 0), ry = center(root, 1);
  double radius = 0.0;
  for (std::size_t j = 0; j < center.rows(); ++j)
    radius = std::max(radius, std::hypot(center(j, 0) - rx, center(j, 1) - ry));
  if (!(radius > 0.0)) throw DataError("normalize_2d: all center-frame joints coincide");
  std::vector<Matrix> out;
  out.reserve(seq2d.size());
  for (const Matrix& f : seq2d) {
    Matrix g(f.rows(), 2);
    for (std::size_t j = 0; j < f.rows(); ++j) {
      g(j, 0) = (f(j, 0) - rx) / radius;
      g(j, 1) = (f(j, 1) - ry) / radius;
    }
    out.push_back(std::move(g));
  }
  return out;
}

Matrix concat_frames(const std::vector<Matrix>& seq2d) {
  if (seq2d.empty()) throw DataError("concat_frames: empty sequence");
  const std::size_t n = seq2d.front().rows();
  const std::size_t t = seq2d.size();
  Matrix s(n, 2 * t);
  for (std::size_t f = 0; f < t; ++f) {
    if (seq2d[f].shape() != Shape{n, 2})
      throw DimensionError("concat_frames: frame " + std::to_string(f) + " has shape " +
                           to_string(seq2d[f].shape()));
    for (std::size_t j = 0; j < n; ++j) {
      s(j, 2 * f) = seq2d[f](j, 0);
      s(j, 2 * f + 1) = seq2d[f](j, 1);
    }
  }
  return s;
}

// --- dataset I/O ------------------------------------------------------------

std::string sample_to_json_line(const PoseSample& s) {
  json j;
  j["id"] = s.id;
  json seq = json::array();
  for (const Matrix& f : s.seq2d) seq.push_back(rows_to_json(f));
  j["seq2d"] = std::move(seq);
  j["target3d"] = rows_to_json(s.target3d);
  return j.dump();
}

void write_dataset(std::ostream& out, const std::vector<PoseSample>& samples) {
  for (const auto& s : samples) out << sample_to_json_line(s) << '\n';
}

void save_dataset(const std::filesystem::path& path, const std::vector<PoseSample>& samples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path.string());
  write_dataset(out, samples);
  if (!out) throw IoError("failed writing dataset " + path.string());
}

std::vector<PoseSample> read_dataset(std::istream& in) {
  std::vector<PoseSample> samples;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError("line " + std::to_string(line) + ": expected an object");
    PoseSample s;
    if (!j.contains("id")) fail(line, "id", "missing");
    if (!j["id"].is_string()) fail(line, "id", "expected a string");
    s.id = j["id"].get<std::string>();
    if (!j.contains("seq2d")) fail(line, "seq2d", "missing");
    if (!j.contains("target3d")) fail(line, "target3d", "missing");
    const json& seq = j["seq2d"];
    if (!seq.is_array() || seq.empty()) fail(line, "seq2d", "expected a non-empty array of frames");
    for (const json& frame : seq) s.seq2d.push_back(parse_rows(frame, 2, line, "seq2d"));
    s.target3d = parse_rows(j["target3d"], 3, line, "target3d");
    const std::size_t n = s.target3d.rows();
    for (const Matrix& f : s.seq2d)
      if (f.rows() != n) fail(line, "seq2d", "joint count differs from target3d");
    if (s.frames() % 2 == 0) fail(line, "seq2d", "frame count must be odd");
    if (!samples.empty()) {
      if (s.frames() != samples.front().frames())
        fail(line, "seq2d", "has " + std::to_string(s.frames()) + " frames, earlier records have " +
                                std::to_string(samples.front().frames()));
      if (n != samples.front().joints())
        fail(line, "target3d", "has " + std::to_string(n) + " joints, earlier records have " +
                                   std::to_string(samples.front().joints()));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<PoseSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_dataset(in);
}

// --- synthetic --------------------------------------------------------------

void SyntheticConfig::validate(std::size_t n_edges) const {
  if (n_samples < 1) throw std::invalid_argument("synthetic config: n_samples must be >= 1");
  if (frames < 1 || frames % 2 == 0)
    throw std::invalid_argument("synthetic config: frames must be odd and >= 1");
  if (!bone_lengths.empty() && bone_lengths.size() != n_edges)
    throw std::invalid_argument("synthetic config: bone_lengths has " +
                                std::to_string(bone_lengths.size()) + " entries, graph has " +
                                std::to_string(n_edges) + " edges");
  for (double len : bone_lengths)
    if (!(len >= 50.0 && len <= 600.0))
      throw std::invalid_argument("synthetic config: bone length " + std::to_string(len) +
                                  " mm outside [50, 600]");
  if (!(angle_step_sigma >= 0.0) || !(init_angle_sigma >= 0.0) || !(noise2d_sigma >= 0.0))
    throw std::invalid_argument("synthetic config: sigmas must be >= 0");
}

json to_json(const SyntheticConfig& c) {
  return json{{"n_samples", c.n_samples},
              {"frames", c.frames},
              {"bone_lengths", c.bone_lengths},
              {"angle_step_sigma", c.angle_step_sigma},
              {"init_angle_sigma", c.init_angle_sigma},
              {"noise2d_sigma", c.noise2d_sigma},
              {"random_camera", c.random_camera},
              {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j, SyntheticConfig c) {
  if (!j.is_object()) throw std::invalid_argument("synthetic config: expected a JSON object");
  static const std::set<std::string> known{"n_samples",        "frames",        "bone_lengths",
                                           "angle_step_sigma", "init_angle_sigma",
                                           "noise2d_sigma",    "random_camera", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key))
      throw std::invalid_argument("synthetic config: unknown key '" + key + "'");
  try {
    c.n_samples = j.value("n_samples", c.n_samples);
    c.frames = j.value("frames", c.frames);
    c.bone_lengths = j.value("bone_lengths", c.bone_lengths);
    c.angle_step_sigma = j.value("angle_step_sigma", c.angle_step_sigma);
    c.init_angle_sigma = j.value("init_angle_sigma", c.init_angle_sigma);
    c.noise2d_sigma = j.value("noise2d_sigma", c.noise2d_sigma);
    c.random_camera = j.value("random_camera", c.random_camera);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("synthetic config: ") + e.what());
  }
  return c;
}

std::vector<std::array<double, 3>> rest_directions(const SkeletonGraph& g) {
  const auto children = edge_children(g);
  std::vector<Vec3> dirs(g.edges.size());
  if (same_topology(g, human36m_topology()) && g.root == 0) {
    for (std::size_t e = 0; e < children.size(); ++e)
      for (const auto& bone : h36m_bones())
        if (bone.child == children[e]) dirs[e] = bone.dir;
    return dirs;
  }
  // Fixed pseudo-random rest pose, keyed by the child joint index.
  for (std::size_t e = 0; e < children.size(); ++e) {
    Rng rng(0x5EED0000ULL + children[e]);
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    for (double& x : d) x /= norm;
    dirs[e] = d;
  }
  return dirs;
}

std::vector<double> default_bone_lengths(const SkeletonGraph& g) {
  std::vector<double> lengths(g.edges.size(), 250.0);
  if (same_topology(g, human36m_topology()) && g.root == 0) {
    const auto children = edge_children(g);
    for (std::size_t e = 0; e < children.size(); ++e)
      for (const auto& bone : h36m_bones())
        if (bone.child == children[e]) lengths[e] = bone.length;
  }
  return lengths;
}

std::vector<Matrix> synthetic_motion(const SyntheticConfig& config, const SkeletonGraph& graph,
                                     std::size_t index) {
  graph.validate();
  if (!graph.is_tree()) throw std::invalid_argument("synthetic generation needs a tree skeleton");
  config.validate(graph.edges.size());
  Rng rng = sample_rng(config.seed, index);
  return simulate(config, graph, rng).frames;
}

std::vector<PoseSample> generate_synthetic(const SyntheticConfig& config, const SkeletonGraph& graph) {
  graph.validate();
  if (!graph.is_tree()) throw std::invalid_argument("synthetic generation needs a tree skeleton");
  config.validate(graph.edges.size());
  const std::size_t n = graph.n_joints;
  const std::size_t center = config.frames / 2;
  std::vector<PoseSample> samples;
  samples.reserve(config.n_samples);
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    Rng rng = sample_rng(config.seed, i);
    const Motion motion = simulate(config, graph, rng);
    Mat3 cam{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    if (config.random_camera) {
      const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double pitch = rng.uniform(-0.3, 0.3);
      cam = mat3_mul(rot_x(pitch), rot_y(yaw));
    }
    std::vector<Matrix> camera_frames;
    camera_frames.reserve(config.frames);
    for (const Matrix& world : motion.frames) {
      Matrix c(n, 3);
      for (std::size_t v = 0; v < n; ++v) {
        const Vec3 p = mat3_apply(cam, Vec3{world(v, 0), world(v, 1), world(v, 2)});
        for (std::size_t k = 0; k < 3; ++k) c(v, k) = p[k];
      }
      camera_frames.push_back(std::move(c));
    }

    const Matrix& cf = camera_frames[center];
    double radius = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      radius = std::max(radius, std::hypot(cf(v, 0) - cf(graph.root, 0), cf(v, 1) - cf(graph.root, 1)));
    const double noise = config.noise2d_sigma * radius;

    PoseSample s;
    s.id = "synth-" + std::to_string(config.seed) + "-" + std::to_string(i);
    for (const Matrix& c : camera_frames) {
      Matrix f(n, 2);
      for (std::size_t v = 0; v < n; ++v) {
        f(v, 0) = c(v, 0);
        f(v, 1) = c(v, 1);
        if (noise > 0.0) {
          f(v, 0) += rng.normal(0.0, noise);
          f(v, 1) += rng.normal(0.0, noise);
        }
      }
      s.seq2d.push_back(std::move(f));
    }
    s.target3d = Matrix(n, 3);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < 3; ++k) s.target3d(v, k) = cf(v, k) - cf(graph.root, k);
    samples.push_back(std::move(s));
  }
  return samples;
}

Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("split: val_fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  shuffle(idx, rng);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n)));
  if (val_fraction > 0.0 && n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  if (n < 2) n_val = 0;
  Split split;
  split.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return split;
}

}  // namespace wjmix
