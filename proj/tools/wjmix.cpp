// wjmix command-line entry point.
//
// Config precedence: command-line flags > config file > built-in defaults.
// Exit codes: 0 ok, 1 usage/config error, 2 numerical failure, 3 I/O error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wjmix/data.hpp"
#include "wjmix/fairing.hpp"
#include "wjmix/gradcheck.hpp"
#include "wjmix/graph.hpp"
#include "wjmix/kernels.hpp"
#include "wjmix/metrics.hpp"
#include "wjmix/model.hpp"
#include "wjmix/training.hpp"

using nlohmann::json;
using namespace wjmix;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kIo = 3 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

void echo(const std::string& what, const json& j) { std::cerr << what << ": " << j.dump() << "\n"; }

template <class T>
void apply(std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

SkeletonGraph topology_or_default(const std::string& path) {
  return path.empty() ? human36m_topology() : load_topology(path);
}

struct ModelFlags {
  std::string file;
  std::optional<std::size_t> layers, embed_dim, hidden_dim, frames;
  std::optional<double> alpha, lambda, dropout, target_unit_mm;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--model-config", file, "Model config JSON")->check(CLI::ExistingFile);
    app->add_option("--layers", layers, "Mixer layers L");
    app->add_option("--embed-dim", embed_dim, "Embedding width F");
    app->add_option("--hidden-dim", hidden_dim, "GraphWJ hidden width R");
    app->add_option("--frames", frames, "Input frames T");
    app->add_option("--alpha", alpha, "WJ alpha");
    app->add_option("--lambda", lambda, "Loss l1 weight");
    app->add_option("--dropout", dropout, "Dropout probability");
    app->add_option("--target-unit-mm", target_unit_mm, "Millimetres per output unit");
    app->add_option("--model-seed", seed, "Initialization seed");
  }

  // Returns the config and whether `frames` was set by the file or a flag.
  std::pair<ModelConfig, bool> resolve() const {
    ModelConfig c;
    bool frames_given = false;
    if (!file.empty()) {
      const json j = read_json_file(file);
      c = model_config_from_json(j);
      frames_given = j.contains("frames");
    }
    auto o = *this;
    apply(o.layers, c.layers);
    apply(o.embed_dim, c.embed_dim);
    apply(o.hidden_dim, c.hidden_dim);
    apply(o.frames, c.frames);
    apply(o.alpha, c.alpha);
    apply(o.lambda, c.lambda);
    apply(o.dropout, c.dropout);
    apply(o.target_unit_mm, c.target_unit_mm);
    apply(o.seed, c.seed);
    return {c, frames_given || frames.has_value()};
  }
};

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string config, out, topology;
  std::optional<std::size_t> n_samples, frames;
  std::optional<double> noise;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a) {
  SyntheticConfig c;
  if (!a.config.empty()) c = synthetic_config_from_json(read_json_file(a.config));
  auto o = a;
  apply(o.n_samples, c.n_samples);
  apply(o.frames, c.frames);
  apply(o.noise, c.noise2d_sigma);
  apply(o.seed, c.seed);
  const SkeletonGraph g = topology_or_default(a.topology);
  c.validate(g.edges.size());
  echo("synth config", to_json(c));
  const auto samples = generate_synthetic(c, g);
  save_dataset(a.out, samples);
  std::cerr << "wrote " << samples.size() << " samples to " << a.out << "\n";
  return kOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  ModelFlags model;
  std::string train_config, data, out_dir, topology, resume;
  std::optional<std::size_t> epochs, batch_size, max_epochs;
  std::optional<double> lr0, val_fraction;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  const auto dataset = load_dataset(a.data);
  if (dataset.empty()) throw UsageError("dataset " + a.data + " is empty");

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  auto [mc, frames_given] = a.model.resolve();
  SkeletonGraph graph;
  if (resume) {
    mc = resume->model.config();
    graph = resume->model.graph();
  } else {
    graph = topology_or_default(a.topology);
    mc.n_joints = graph.n_joints;
    if (!frames_given) mc.frames = dataset.front().frames();
  }

  TrainConfig tc;
  bool lambda_given = false;
  if (!a.train_config.empty()) {
    const json j = read_json_file(a.train_config);
    tc = train_config_from_json(j);
    lambda_given = j.contains("lambda");
  }
  if (resume && resume->train_state && resume->train_state->contains("train_config"))
    tc = train_config_from_json(resume->train_state->at("train_config"));
  else if (!lambda_given || a.model.lambda)
    tc.lambda = mc.lambda;
  auto o = a;
  apply(o.epochs, tc.epochs);
  apply(o.batch_size, tc.batch_size);
  apply(o.lr0, tc.lr0);
  apply(o.val_fraction, tc.val_fraction);
  apply(o.seed, tc.seed);
  mc.validate();
  tc.validate();
  echo("model config", to_json(mc));
  echo("train config", to_json(tc));
  echo("kernels", kernels::isa_name(kernels::active().isa));

  MixerModel model = resume ? std::move(resume->model) : MixerModel(mc, graph);
  TrainOptions opts;
  opts.out_dir = a.out_dir;
  if (resume) {
    opts.resume_train_state = resume->train_state;
    opts.resume_optimizer_state = resume->optimizer_state;
  }
  opts.max_epochs_this_run = a.max_epochs;
  opts.on_epoch = [](const EpochLog& e) { std::cerr << to_json(e).dump() << "\n"; };
  const TrainResult r = train(model, dataset, tc, opts);
  json summary{{"epochs_run", r.log.size()},
               {"best_val_mpjpe", std::isfinite(r.best_val_mpjpe) ? json(r.best_val_mpjpe) : json(nullptr)},
               {"out_dir", a.out_dir}};
  std::cout << summary.dump() << "\n";
  return kOk;
}

// --- eval --------------------------------------------------------------------

int run_eval(const std::string& checkpoint, const std::string& data) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const auto dataset = load_dataset(data);
  if (dataset.empty()) throw UsageError("dataset " + data + " is empty");
  const ModelConfig& mc = ck.model.config();
  echo("model config", to_json(mc));
  for (const auto& s : dataset) {
    if (s.joints() != mc.n_joints)
      throw UsageError("sample '" + s.id + "' has " + std::to_string(s.joints()) +
                       " joints but the checkpoint expects " + std::to_string(mc.n_joints));
    if (s.frames() != mc.frames)
      throw UsageError("sample '" + s.id + "' has " + std::to_string(s.frames()) +
                       " frames but the checkpoint expects " + std::to_string(mc.frames));
  }
  std::vector<std::size_t> idx(dataset.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto preds = predict_mm(ck.model, dataset, idx);
  std::vector<Matrix> gts;
  for (const auto& s : dataset) gts.push_back(s.target3d);
  std::cout << to_json(evaluate_poses(preds, gts, ck.model.graph().root)).dump() << "\n";
  return kOk;
}

// --- filter ------------------------------------------------------------------

struct FilterArgs {
  std::string graph, signal;
  std::size_t features = 3;
  std::uint64_t seed = 0;
  double s = 1.0;
  double omega = SolverDefaults::omega;
  double tol = SolverDefaults::tol;
  std::size_t max_iters = SolverDefaults::max_iters;
};

int run_filter(const FilterArgs& a) {
  if (!(a.omega > 0.0)) throw UsageError("--omega must be positive");
  if (!(a.s > 0.0)) throw UsageError("--s must be positive");
  const SkeletonGraph g = topology_or_default(a.graph);
  const GraphOperators ops = build_operators(g);
  Matrix x;
  if (!a.signal.empty()) {
    const json j = read_json_file(a.signal);
    try {
      const auto rows = j.get<std::vector<std::vector<double>>>();
      if (rows.empty() || rows.front().empty()) throw UsageError("signal " + a.signal + " is empty");
      x = Matrix(rows.size(), rows.front().size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != x.cols()) throw UsageError("signal " + a.signal + ": ragged rows");
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = rows[r][c];
      }
    } catch (const json::exception& e) {
      throw UsageError("signal " + a.signal + ": expected an array of rows: " + e.what());
    }
  } else {
    Rng rng(a.seed);
    x = normal(rng, 1.0, g.n_joints, a.features);
  }
  const FairingProblem p = FairingProblem::make(ops.laplacian, x, a.s, a.omega);
  json cfg{{"n_joints", g.n_joints}, {"features", x.cols()}, {"s", a.s},
           {"alpha", p.alpha}, {"omega", a.omega}, {"tol", a.tol}, {"max_iters", a.max_iters}};
  echo("filter config", cfg);
  if (!p.omega_in_convergence_range())
    std::cerr << "warning: omega " << a.omega << " is outside (0, " << p.omega_upper_bound()
              << "); convergence is not guaranteed\n";
  json out{{"omega_upper_bound", p.omega_upper_bound()}};
  if (g.n_joints <= 512) out["spectral_radius"] = iteration_spectral_radius(p);
  const SolveReport r = solve_jacobi(p, a.tol, a.max_iters);
  const Matrix direct = solve_direct(p);
  out["iterations"] = r.iterations;
  out["final_residual"] = r.final_residual;
  out["direct_gap"] = frobenius_norm(r.solution - direct) / std::max(frobenius_norm(direct), 1e-300);
  std::cout << out.dump() << "\n";
  return kOk;
}

// --- gradcheck / params ------------------------------------------------------

int run_gradcheck(std::uint64_t seed) {
  echo("gradcheck config", json{{"seed", seed}, {"step", kGradcheckStep}});
  json reports = json::array();
  bool ok = true;
  for (const auto& r : run_audit_suite(seed)) {
    reports.push_back(to_json(r));
    ok = ok && r.passed();
    std::cerr << (r.passed() ? "pass " : "FAIL ") << r.layer << " max_rel_error=" << r.max_rel_error()
              << "\n";
  }
  std::cout << json{{"passed", ok}, {"reports", reports}}.dump() << "\n";
  return ok ? kOk : kNumerical;
}

int run_params(const ModelFlags& flags) {
  ModelConfig c = flags.resolve().first;
  c.validate();
  echo("model config", to_json(c));
  SkeletonGraph g = human36m_topology();
  if (c.n_joints != g.n_joints) {
    Rng rng(c.seed);
    g = random_connected_graph(rng, c.n_joints, 0);
  }
  const MixerModel model(c, g);
  const ParamTable t = model.count_params();
  json rows = json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"name", r.name}, {"shape", {r.rows, r.cols}}, {"count", r.count}});
  std::cout << json{{"params", rows}, {"total", t.total}, {"formula_total", t.formula_total},
                    {"formula", t.formula}}
                   .dump()
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MLP-GraphWJ pose lifting: data, training, evaluation and solver tools"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic pose dataset");
  synth_cmd->add_option("--config", synth.config, "Synthetic config JSON")->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth.out, "Output dataset (JSONL)")->required();
  synth_cmd->add_option("--topology", synth.topology, "Topology JSON (default Human3.6M 16 joints)");
  synth_cmd->add_option("--n-samples", synth.n_samples, "Number of samples");
  synth_cmd->add_option("--frames", synth.frames, "Frames per sample (odd)");
  synth_cmd->add_option("--noise", synth.noise, "2D noise relative to pose radius");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  tr.model.add(train_cmd);
  train_cmd->add_option("--train-config", tr.train_config, "Train config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "Training dataset (JSONL)")->required();
  train_cmd->add_option("--out-dir", tr.out_dir, "Checkpoint and log directory")->required();
  train_cmd->add_option("--topology", tr.topology, "Topology JSON (default Human3.6M 16 joints)");
  train_cmd->add_option("--resume", tr.resume, "Resume from checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--epochs", tr.epochs, "Total epochs");
  train_cmd->add_option("--max-epochs", tr.max_epochs, "Stop after this many epochs in this run");
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size (>= 2)");
  train_cmd->add_option("--lr0", tr.lr0, "Initial learning rate");
  train_cmd->add_option("--val-fraction", tr.val_fraction, "Held-out fraction");
  train_cmd->add_option("--seed", tr.seed, "Split, shuffle and dropout seed");

  std::string ev_ckpt, ev_data;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint; metrics JSON on stdout");
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON")->required();
  eval_cmd->add_option("--data", ev_data, "Dataset (JSONL)")->required();

  FilterArgs fa;
  auto* filter_cmd = app.add_subcommand("filter", "Implicit fairing by weighted Jacobi vs direct solve");
  filter_cmd->add_option("--graph", fa.graph, "Topology JSON (default Human3.6M 16 joints)");
  filter_cmd->add_option("--signal", fa.signal, "Signal JSON, array of N rows (default random)");
  filter_cmd->add_option("--features", fa.features, "Random signal width");
  filter_cmd->add_option("--seed", fa.seed, "Random signal seed");
  filter_cmd->add_option("--s", fa.s, "Smoothing strength s > 0");
  filter_cmd->add_option("--omega", fa.omega, "Relaxation factor");
  filter_cmd->add_option("--tol", fa.tol, "Relative residual tolerance");
  filter_cmd->add_option("--max-iters", fa.max_iters, "Iteration cap");

  std::uint64_t gc_seed = 0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference audit of every layer");
  gc_cmd->add_option("--seed", gc_seed, "Audit seed");

  ModelFlags pf;
  auto* params_cmd = app.add_subcommand("params", "Per-tensor parameter table; JSON on stdout");
  pf.add(params_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev_ckpt, ev_data);
    if (*filter_cmd) return run_filter(fa);
    if (*gc_cmd) return run_gradcheck(gc_seed);
    if (*params_cmd) return run_params(pf);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ConvergenceError& e) {
    std::cerr << "divergence: " << e.what() << " (iterations " << e.iterations() << ", residual "
              << e.residual() << ")\n";
    return kNumerical;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
