// Acceptance suite: one PASS/FAIL line per criterion on stdout, diagnostics
// on stderr. Exit status is the number of failed criteria.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wjmix/data.hpp"
#include "wjmix/fairing.hpp"
#include "wjmix/gradcheck.hpp"
#include "wjmix/graph.hpp"
#include "wjmix/metrics.hpp"
#include "wjmix/model.hpp"
#include "wjmix/training.hpp"

using namespace wjmix;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

json read_json(const std::string& name) {
  std::ifstream in(fs::path(WJMIX_CONFIG_DIR) / name);
  if (!in) throw std::runtime_error("missing config " + name);
  return json::parse(in);
}

Outcome solver_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const double svals[] = {1.0, 9.0, 99.0};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + rng.below(29);
    const std::size_t f = 1 + rng.below(8);
    const SkeletonGraph g = random_connected_graph(rng, n, rng.below(n));
    const Matrix x = normal(rng, 1.0, n, f);
    const auto p = FairingProblem::make(build_operators(g).laplacian, x, svals[trial % 3]);
    const Matrix direct = solve_direct(p);
    const Matrix iter = solve_jacobi(p, 1e-10).solution;
    worst = std::max(worst, frobenius_norm(iter - direct) / frobenius_norm(direct));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 5.0,
          "max relative gap " + fmt(worst) + " over 20 graphs in " + fmt(secs) + " s"};
}

// Geometric rate of ‖H_k − H*‖ over the second half of the run, from a
// random start.
double measured_rate(const FairingProblem& p, Rng& rng) {
  const Matrix exact = solve_direct(p);
  Matrix h = normal(rng, 1.0, exact.rows(), exact.cols());
  std::vector<double> err{frobenius_norm(h - exact)};
  const double floor = 1e-11 * err.front();
  for (int k = 0; k < 4000 && err.back() > floor; ++k) {
    h = jacobi_step(p, h);
    err.push_back(frobenius_norm(h - exact));
  }
  const std::size_t last = err.size() - 1, mid = last / 2;
  return std::pow(err[last] / err[mid], 1.0 / static_cast<double>(last - mid));
}

Outcome convergence_theory() {
  Rng rng(202);
  const double svals[] = {1.0, 9.0, 99.0};
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + rng.below(29);
    const SkeletonGraph g = random_connected_graph(rng, n, 1 + rng.below(n));
    auto p = FairingProblem::make(build_operators(g).laplacian, normal(rng, 1.0, n, 1 + rng.below(4)),
                                  svals[trial % 3]);
    do p.omega = rng.uniform(0.0, p.omega_upper_bound());
    while (p.omega <= 0.0);
    const double rho = iteration_spectral_radius(p);
    const double rate = measured_rate(p, rng);
    const double rel = std::abs(rate - rho) / rho;
    worst = std::max(worst, rel);
    if (rel > 0.1)
      std::cerr << "  rate mismatch: n=" << n << " s=" << p.s << " omega=" << p.omega << " rho=" << rho
                << " measured=" << rate << "\n";
  }

  // Trees are bipartite, so Â has eigenvalue -1.
  int diverged = 0;
  const int trees = 10;
  for (int trial = 0; trial < trees; ++trial) {
    const std::size_t n = 4 + rng.below(29);
    const SkeletonGraph g = random_connected_graph(rng, n, 0);
    auto p = FairingProblem::make(build_operators(g).laplacian, normal(rng, 1.0, n, 2), svals[trial % 3]);
    p.omega = p.omega_upper_bound() + 0.1 + rng.uniform(0.0, 0.3);
    const double rho = iteration_spectral_radius(p);
    bool detected = false;
    try {
      solve_jacobi(p);
    } catch (const ConvergenceError& e) {
      detected = true;
      std::cerr << "  divergence: n=" << n << " s=" << p.s << " omega=" << fmt(p.omega)
                << " (bound " << fmt(p.omega_upper_bound()) << ") rho=" << fmt(rho) << ": " << e.what()
                << "\n";
    }
    if (rho >= 1.0 && detected) ++diverged;
  }
  return {worst <= 0.1 && diverged == trees,
          "worst rate error " + fmt(100 * worst) + "% over 50 pairs; " + std::to_string(diverged) + "/" +
              std::to_string(trees) + " over-relaxed trees diverged"};
}

Outcome gradient_audit() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t reports = 0;
  bool ok = true;
  bool model_covers_input = false;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& r : run_audit_suite(seed)) {
      ++reports;
      worst = std::max(worst, r.max_rel_error());
      if (!r.passed() || r.max_rel_error() > 1e-4) {
        ok = false;
        std::cerr << "  audit failed: " << to_json(r).dump() << "\n";
      }
      if (r.layer == "model")
        for (const auto& t : r.targets) model_covers_input |= t.name == "input";
    }
  }
  const double secs = seconds_since(t0);
  return {ok && model_covers_input && secs < 60.0,
          std::to_string(reports) + " audits over 5 seeds, worst relative error " + fmt(worst) + " in " +
              fmt(secs) + " s"};
}

Outcome architecture() {
  ModelConfig c = model_config_from_json(read_json("model_full.json"));
  MixerModel m(c, human36m_topology());
  Rng rng(4);
  const Matrix y = m.forward(normal(rng, 1.0, c.n_joints, 2 * c.frames), false, nullptr);
  const auto& s = m.last_shapes();
  const std::size_t n = c.n_joints;
  bool shapes = y.shape() == Shape{n, 3} && s.block_out.size() == c.layers;
  for (std::size_t l = 0; l < s.block_out.size(); ++l)
    shapes = shapes && s.joint_mix[l] == Shape{n, c.embed_dim} &&
             s.block_hidden[l] == Shape{n, c.hidden_dim} && s.block_out[l] == Shape{n, c.embed_dim};
  c.frames = 9;
  const ParamTable t9 = MixerModel(c, human36m_topology()).count_params();
  c.frames = 1;
  const ParamTable t1 = MixerModel(c, human36m_topology()).count_params();
  const long diff = static_cast<long>(t9.total) - static_cast<long>(t1.total);
  const bool band = t9.total >= 4'300'000 && t9.total <= 6'500'000;
  const bool slope = diff == static_cast<long>(2 * 8 * c.embed_dim);
  return {shapes && band && slope && t9.total == t9.formula_total,
          std::string("shapes ") + (shapes ? "ok" : "wrong") + "; params(T=9) " + std::to_string(t9.total) +
              "; T=9 minus T=1 = " + std::to_string(diff)};
}

Outcome desk_learning() {
  const auto t0 = Clock::now();
  const SyntheticConfig sc = synthetic_config_from_json(read_json("synthetic_desk.json"));
  ModelConfig mc = model_config_from_json(read_json("model_desk.json"));
  const TrainConfig tc = train_config_from_json(read_json("train_desk.json"));
  const SkeletonGraph g = human36m_topology();
  const auto data = generate_synthetic(sc, g);
  mc.frames = sc.frames;
  MixerModel model(mc, g);
  TrainOptions opts;
  opts.on_epoch = [](const EpochLog& e) {
    std::cerr << "  epoch " << e.epoch << " loss " << fmt(e.train_loss) << " val " << fmt(e.val_mpjpe)
              << " mm\n";
  };
  const TrainResult r = train(model, data, tc, opts);
  const double secs = seconds_since(t0);

  double zero = 0.0;
  for (std::size_t i : r.split.val) {
    const Matrix gt = root_relative(data[i].target3d, g.root);
    zero += mpjpe(Matrix(gt.rows(), 3), gt);
  }
  zero /= static_cast<double>(r.split.val.size());
  const double final_val = r.log.back().val_mpjpe;
  int decreases = 0;
  for (std::size_t e = 1; e <= 5 && e < r.log.size(); ++e) decreases += r.log[e].train_loss < r.log[e - 1].train_loss;
  const bool ok = data.size() == 2000 && r.log.size() == 60 && tc.batch_size == 32 && secs < 900.0 &&
                  final_val < 0.5 * zero && decreases >= 4;
  return {ok, "final val MPJPE " + fmt(final_val) + " mm vs zero predictor " + fmt(zero) + " mm (ratio " +
                  fmt(final_val / zero) + "); loss fell in " + std::to_string(decreases) + "/5 early epochs; " +
                  fmt(secs) + " s"};
}

Outcome metric_correctness() {
  bool ok = mpjpe(Matrix::from_rows({{3, 4, 0}}), Matrix::from_rows({{0, 0, 0}})) == 5.0;
  Rng rng(606);
  double worst_pa = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix gt = normal(rng, 300.0, 16, 3);
    // Random rotation from a normalized quaternion.
    double q[4];
    double qn = 0.0;
    for (double& v : q) {
      v = rng.normal();
      qn += v * v;
    }
    qn = std::sqrt(qn);
    const double w = q[0] / qn, x = q[1] / qn, y = q[2] / qn, z = q[3] / qn;
    const Matrix rot = Matrix::from_rows({{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
                                          {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
                                          {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}});
    Matrix pred = scale(matmul_nt(gt, rot), rng.uniform(0.5, 2.0));
    const double t[3] = {rng.normal(0, 500), rng.normal(0, 500), rng.normal(0, 500)};
    for (std::size_t j = 0; j < 16; ++j)
      for (std::size_t k = 0; k < 3; ++k) pred(j, k) += t[k];
    worst_pa = std::max(worst_pa, pa_mpjpe(pred, gt));
  }
  ok = ok && worst_pa <= 1e-9;
  int holds = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix gt = normal(rng, 200.0, 16, 3), pred = normal(rng, 200.0, 16, 3);
    holds += pa_mpjpe(pred, gt) <= mpjpe(pred, gt);
  }
  const std::vector<double> single{75.0};
  const double a = auc(single);
  ok = ok && holds == 1000 && a == 16.0 / 31.0;
  return {ok, "3-4-5 ok; similarity copy PA " + fmt(worst_pa) + "; PA<=MPJPE on " + std::to_string(holds) +
                  "/1000; AUC(75mm) " + fmt(a)};
}

int run_command(const std::string& cmd, std::string* out) {
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out->append(buf, n);
  const int status = pclose(pipe);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = fs::temp_directory_path() / ("wjmix_acceptance_run" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string bin = WJMIX_BIN, cfg = WJMIX_CONFIG_DIR, d = dir.string();
    std::string ignored;
    const bool ok =
        run_command(bin + " synth --config " + cfg + "/synthetic_desk.json --n-samples 200 --out " + d +
                        "/data.jsonl 2>/dev/null",
                    &ignored) == 0 &&
        run_command(bin + " train --model-config " + cfg + "/model_desk.json --train-config " + cfg +
                        "/train_desk.json --epochs 3 --data " + d + "/data.jsonl --out-dir " + d + "/out 2>/dev/null",
                    &ignored) == 0 &&
        run_command(bin + " eval --checkpoint " + d + "/out/checkpoint_last.json --data " + d +
                        "/data.jsonl 2>/dev/null",
                    &reports[run]) == 0;
    fs::remove_all(dir);
    if (!ok) return {false, "pipeline run " + std::to_string(run) + " failed"};
  }
  const bool same = reports[0] == reports[1] && !reports[0].empty();
  return {same, std::string("metric JSON ") + (same ? "identical" : "differs") + " across two runs (" +
                    std::to_string(reports[0].size()) + " bytes)"};
}

double loop_loss(const Matrix& p, const Matrix& t, bool squared) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = p(i, k) - t(i, k);
      s += squared ? d * d : std::abs(d);
    }
  return s / static_cast<double>(p.rows());
}

Outcome loss_contract() {
  const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  bool ok = pose_loss(a, a, 0.01) == 0.0 && pose_loss(Matrix::from_rows({{1, 0, 0}}), Matrix(1, 3), 0.01) == 1.0 &&
            pose_loss(Matrix::from_rows({{1, 0, 0}, {0, 2, 0}}), Matrix(2, 3), 0.5) == 2.0;
  Rng rng(808);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(32);
    const Matrix p = normal(rng, 1.0, n, 3), t = normal(rng, 1.0, n, 3);
    const double mse = loop_loss(p, t, true), mae = loop_loss(p, t, false);
    worst = std::max({worst, std::abs(pose_loss(p, t, 0.0) - mse) / mse, std::abs(pose_loss(p, t, 1.0) - mae) / mae});
  }
  ok = ok && worst <= 1e-13;
  return {ok, "examples 0, 1.0, 2.0 exact; endpoint forms within " + fmt(worst) + " of loop oracles"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"solver-oracle equivalence", solver_equivalence},
      {"convergence theory", convergence_theory},
      {"gradient audit", gradient_audit},
      {"architecture shapes and parameter count", architecture},
      {"desk-scale learning", desk_learning},
      {"metric correctness", metric_correctness},
      {"determinism", determinism},
      {"loss contract", loss_contract},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed;
}
