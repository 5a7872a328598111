#include "singd/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>

#include "singd/errors.hpp"
#include "singd/rng.hpp"

namespace singd {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Per-step problem view: weights, gradients, curvature and eval metrics for
// either task family.
struct Problem {
  std::vector<Matrix> weights;
  std::vector<Matrix> grads;       // refreshed every step
  std::vector<KroneckerCurvature> curvature;
  double step_loss = 0.0;
  bool finite = true;

  virtual ~Problem() = default;
  virtual void compute_step(std::uint64_t step, bool want_curvature) = 0;
  virtual double full_loss() = 0;
  virtual double test_error() { return kNan; }
};

struct QuadraticProblem : Problem {
  KroneckerQuadratic task;

  QuadraticProblem(const TaskSpec& spec, Rng& rng) {
    task = make_kronecker_quadratic(spec.d_i, spec.d_o, spec.cond, rng, spec.cond_split);
    weights.push_back(Matrix(spec.d_o, spec.d_i));
    grads.resize(1);
    curvature.resize(1);
  }

  void compute_step(std::uint64_t, bool want_curvature) override {
    QuadraticEval eval = kronecker_quadratic_eval(task, weights[0]);
    step_loss = eval.loss;
    grads[0] = std::move(eval.grad);
    if (want_curvature) curvature[0] = eval.curvature;
    finite = std::isfinite(step_loss) && is_finite(grads[0]);
  }

  double full_loss() override { return task.loss(weights[0]); }
};

struct MlpProblem : Problem {
  Mlp model;
  LabeledData train, test;
  Matrix train_targets;
  LossKind loss;
  std::size_t batch_size;
  Rng shuffle_rng;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;

  MlpProblem(const RunConfig& cfg, Rng& rng)
      : loss(cfg.model.loss), batch_size(cfg.batch_size), shuffle_rng(cfg.seed ^ 0x9e3779b9) {
    if (cfg.task.kind == TaskKind::GaussianBlobs) {
      BlobsData blobs = make_gaussian_blobs(cfg.task.blobs, rng);
      train = std::move(blobs.train);
      test = std::move(blobs.test);
    } else {
      LabeledData all = load_csv_dataset(cfg.task.csv_path);
      const auto n_test = static_cast<std::size_t>(
          cfg.task.csv_test_fraction * static_cast<double>(all.x.rows()));
      const std::vector<std::size_t> perm = rng.permutation(all.x.rows());
      auto take = [&](std::size_t begin, std::size_t end) {
        LabeledData part;
        part.classes = all.classes;
        part.x = Matrix(end - begin, all.x.cols());
        part.labels.resize(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
          for (std::size_t j = 0; j < all.x.cols(); ++j) {
            part.x(i - begin, j) = all.x(perm[i], j);
          }
          part.labels[i - begin] = all.labels[perm[i]];
        }
        return part;
      };
      test = take(0, n_test);
      train = take(n_test, all.x.rows());
    }
    if (train.x.rows() == 0) throw ConfigError("task: empty training set");
    train_targets = one_hot(train.labels, train.classes);
    batch_size = std::min(batch_size, train.x.rows());

    std::vector<std::size_t> widths = cfg.model.hidden;
    std::vector<Activation> acts(widths.size(), cfg.model.activation);
    widths.push_back(train.classes);
    acts.push_back(Activation::Identity);
    model = Mlp::random(train.x.cols(), widths, acts, rng);

    weights = model.weights();
    grads.resize(weights.size());
    curvature.resize(weights.size());
  }

  std::pair<Matrix, Matrix> next_batch() {
    if (cursor + batch_size > train.x.rows() || order.empty()) {
      order = shuffle_rng.permutation(train.x.rows());
      cursor = 0;
    }
    Matrix x(batch_size, train.x.cols());
    Matrix y(batch_size, train.classes);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t src = order[cursor + i];
      for (std::size_t j = 0; j < train.x.cols(); ++j) x(i, j) = train.x(src, j);
      for (std::size_t c = 0; c < train.classes; ++c) y(i, c) = train_targets(src, c);
    }
    cursor += batch_size;
    return {std::move(x), std::move(y)};
  }

  void compute_step(std::uint64_t, bool want_curvature) override {
    model.weights() = weights;
    auto [x, y] = next_batch();
    ForwardBackward fb = forward_backward(model, x, y, loss);
    step_loss = fb.loss;
    finite = fb.finite;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      grads[l] = std::move(fb.layers[l].grad);
      if (want_curvature) {
        curvature[l] = linear_layer_curvature(fb.layers[l].inputs, fb.layers[l].out_grads);
      }
    }
  }

  double full_loss() override {
    model.weights() = weights;
    return forward_backward(model, train.x, train_targets, loss).loss;
  }

  double test_error() override {
    if (test.x.rows() == 0) return kNan;
    model.weights() = weights;
    return 1.0 - accuracy(model.predict(test.x), test.labels);
  }
};

}  // namespace

RunSummary run_training(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  if (const char* env_seed = std::getenv("SINGD_SEED")) {
    try {
      cfg.seed = std::stoull(env_seed);
    } catch (const std::exception&) {
      throw ConfigError("SINGD_SEED: expected an integer, got '" + std::string(env_seed) + "'");
    }
  }

  Rng rng(cfg.seed);
  std::unique_ptr<Problem> problem;
  if (cfg.task.kind == TaskKind::KroneckerQuadratic) {
    problem = std::make_unique<QuadraticProblem>(cfg.task, rng);
  } else {
    problem = std::make_unique<MlpProblem>(cfg, rng);
  }

  // Initial parameters live in the storage format like everything else.
  for (Matrix& w : problem->weights) {
    cfg.opt.precision.apply_in_place(w, kQuantizeParameters);
  }

  std::vector<LayerOptState> states;
  states.reserve(problem->weights.size());
  for (const Matrix& w : problem->weights) {
    states.push_back(LayerOptState::init(w.rows(), w.cols(), cfg.opt));
  }

  RunSummary summary;
  summary.initial_loss = problem->full_loss();

  const auto t0 = std::chrono::steady_clock::now();
  bool nonfinite_seen = false;

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    const bool precond_step =
        has_preconditioner(cfg.opt.kind) && (step % cfg.opt.interval == 0);
    problem->compute_step(step, precond_step);
    if (!problem->finite && !nonfinite_seen) {
      nonfinite_seen = true;
      summary.events.push_back({step, "non-finite loss or gradient"});
    }

    OptimizerConfig step_cfg = cfg.opt;
    step_cfg.beta2 = cfg.schedule.value(cfg.opt.beta2, step, cfg.steps);

    for (std::size_t l = 0; l < states.size(); ++l) {
      if (precond_step) {
        try {
          switch (cfg.opt.kind) {
            case OptimizerKind::Kfac:
              kfac_precond_update(states[l], problem->curvature[l], step_cfg);
              break;
            case OptimizerKind::Ikfac:
              ikfac_precond_update(states[l], problem->curvature[l], step_cfg);
              break;
            case OptimizerKind::Singd:
              singd_precond_update(states[l], problem->curvature[l], step_cfg);
              break;
            default:
              break;
          }
        } catch (const SingularError&) {
          // Keep stepping with the last usable preconditioner; the event is
          // already recorded on the layer state.
        }
      }
      switch (cfg.opt.kind) {
        case OptimizerKind::Adamw:
          adamw_step(states[l], problem->grads[l], problem->weights[l], step_cfg);
          break;
        case OptimizerKind::Sgd:
          sgd_momentum_step(states[l], problem->grads[l], problem->weights[l], step_cfg);
          break;
        default:
          apply_direction(states[l], problem->grads[l], problem->weights[l], step_cfg);
          break;
      }
      if (!nonfinite_seen && !is_finite(problem->weights[l])) {
        nonfinite_seen = true;
        summary.events.push_back({step, "non-finite weights in layer " + std::to_string(l)});
      }
    }

    if (step % cfg.eval_every == 0 || step + 1 == cfg.steps) {
      TrainRecord rec;
      rec.step = step;
      rec.train_loss = problem->step_loss;
      rec.test_error = problem->test_error();
      double gn = 0.0, fk = 0.0, fc = 0.0;
      for (std::size_t l = 0; l < states.size(); ++l) {
        const double g = frobenius_norm(problem->grads[l]);
        gn += g * g;
        const double k = states[l].factor_norm_K();
        const double c = states[l].factor_norm_C();
        fk += k * k;
        fc += c * c;
      }
      rec.grad_norm = std::sqrt(gn);
      const bool has_factors = has_preconditioner(cfg.opt.kind);
      rec.factor_norm_K = has_factors ? std::sqrt(fk) : kNan;
      rec.factor_norm_C = has_factors ? std::sqrt(fc) : kNan;
      rec.nonfinite_flag = nonfinite_seen ? 1 : 0;
      if (cfg.record_wall_time) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      }
      if (!summary.records.empty() && summary.records.back().step == rec.step) {
        summary.records.back() = rec;
      } else {
        summary.records.push_back(rec);
      }
    }
  }

  summary.final_loss = problem->full_loss();
  summary.diverged = nonfinite_seen;
  for (const LayerOptState& state : states) {
    summary.max_precond_residual = std::max(summary.max_precond_residual, state.precond_residual);
    for (const StepEvent& e : state.events) {
      summary.events.push_back(e);
      if (e.what.rfind("singular", 0) == 0) ++summary.singular_events;
    }
  }
  summary.nonfinite_events = nonfinite_seen ? 1 : 0;

  if (!cfg.out_path.empty()) {
    std::ofstream out(cfg.out_path);
    if (!out) throw ConfigError("cannot write '" + cfg.out_path + "'");
    write_csv(summary.records, out);
  }
  return summary;
}

void write_csv(const std::vector<TrainRecord>& records, std::ostream& os) {
  os << "# singd-kit v1\n";
  os << "step,train_loss,test_error,grad_norm,factor_norm_K,factor_norm_C,"
        "nonfinite_flag,wall_ms\n";
  for (const TrainRecord& r : records) {
    os << r.step << ',' << fmt(r.train_loss) << ',' << fmt(r.test_error) << ','
       << fmt(r.grad_norm) << ',' << fmt(r.factor_norm_K) << ',' << fmt(r.factor_norm_C)
       << ',' << r.nonfinite_flag << ',' << fmt(r.wall_ms) << '\n';
  }
}

std::size_t LayerMemory::total() const {
  std::size_t n = 0;
  for (const MemoryItem& item : items) n += item.count;
  return n;
}

std::size_t MemoryReport::total() const {
  std::size_t n = 0;
  for (const LayerMemory& layer : layers) n += layer.total();
  return n;
}

MemoryReport memory_report(const std::vector<std::pair<std::size_t, std::size_t>>& dims,
                           const OptimizerConfig& cfg) {
  MemoryReport report;
  report.kind = cfg.kind;
  std::size_t index = 0;
  for (const auto& [d_out, d_in] : dims) {
    LayerMemory layer;
    layer.index = index++;
    layer.d_out = d_out;
    layer.d_in = d_in;
    switch (cfg.kind) {
      case OptimizerKind::Kfac:
        layer.items = {{"S_K", d_in * d_in},
                       {"S_C", d_out * d_out},
                       {"S_K_inv", d_in * d_in},
                       {"S_C_inv", d_out * d_out},
                       {"m_mu", d_out * d_in}};
        break;
      case OptimizerKind::Ikfac:
      case OptimizerKind::Singd: {
        const std::size_t ck = storage_count(cfg.structure_K.bind(d_in));
        const std::size_t cc = storage_count(cfg.structure_C.bind(d_out));
        layer.items = {{"K", ck}, {"C", cc}, {"m_K", ck}, {"m_C", cc}, {"m_mu", d_out * d_in}};
        break;
      }
      case OptimizerKind::Adamw:
        layer.items = {{"m_s", d_out * d_in}, {"m_mu", d_out * d_in}};
        break;
      case OptimizerKind::Sgd:
        layer.items = {{"m_mu", d_out * d_in}};
        break;
    }
    report.layers.push_back(std::move(layer));
  }
  return report;
}

std::vector<std::pair<std::size_t, std::size_t>> layer_dims(const RunConfig& cfg) {
  if (cfg.task.kind == TaskKind::KroneckerQuadratic) {
    return {{cfg.task.d_o, cfg.task.d_i}};
  }
  std::size_t input = cfg.task.blobs.dim;
  std::size_t classes = cfg.task.blobs.classes;
  if (cfg.task.kind == TaskKind::Csv) {
    const LabeledData data = load_csv_dataset(cfg.task.csv_path);
    input = data.x.cols();
    classes = data.classes;
  }
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  std::size_t fan_in = input;
  for (std::size_t w : cfg.model.hidden) {
    dims.emplace_back(w, fan_in + 1);
    fan_in = w;
  }
  dims.emplace_back(classes, fan_in + 1);
  return dims;
}

MemoryReport memory_report(const RunConfig& cfg) {
  return memory_report(layer_dims(cfg), cfg.opt);
}

void print_memory_report(const MemoryReport& report, std::ostream& os) {
  os << "optimizer=" << optimizer_name(report.kind) << "\n";
  for (const LayerMemory& layer : report.layers) {
    os << "layer=" << layer.index << " d_out=" << layer.d_out << " d_in=" << layer.d_in;
    for (const MemoryItem& item : layer.items) {
      os << " " << item.name << "=" << item.count;
    }
    os << " layer_total=" << layer.total() << "\n";
  }
  os << "total=" << report.total() << "\n";
}

}  // namespace singd
