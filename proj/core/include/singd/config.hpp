#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "singd/model.hpp"
#include "singd/optim.hpp"
#include "singd/tasks.hpp"

namespace singd {

enum class TaskKind { GaussianBlobs, KroneckerQuadratic, Csv };

struct TaskSpec {
  TaskKind kind = TaskKind::GaussianBlobs;
  BlobsSpec blobs;
  // kronecker_quadratic
  std::size_t d_i = 4;
  std::size_t d_o = 4;
  double cond = 100.0;
  double cond_split = 0.5;  // fraction of log-cond on the input-side factor
  // csv
  std::string csv_path;
  double csv_test_fraction = 0.25;
};

struct ModelSpec {
  std::vector<std::size_t> hidden;  // hidden widths; output width comes from the task
  Activation activation = Activation::Tanh;  // hidden activation; output is identity
  LossKind loss = LossKind::SoftmaxCrossEntropy;
};

enum class ScheduleKind { Constant, Cosine, Step };

/// Learning-rate schedule for beta2: cosine decays over the whole run,
/// step multiplies by `factor` every `interval` steps.
struct Schedule {
  ScheduleKind kind = ScheduleKind::Constant;
  std::size_t interval = 40;
  double factor = 0.5;

  double value(double base, std::uint64_t step, std::size_t total_steps) const;
};

struct RunConfig {
  TaskSpec task;
  ModelSpec model;
  OptimizerConfig opt;
  std::size_t steps = 100;
  std::size_t batch_size = 32;
  std::size_t eval_every = 10;
  std::uint64_t seed = 0;
  Schedule schedule;
  bool record_wall_time = false;  // keeps the CSV reproducible by default
  std::string out_path;

  void validate() const;

  /// Flat `section.key = value` file; '#' starts a comment. Unknown keys and
  /// malformed values raise ConfigError with file:line diagnostics.
  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text, const std::string& origin);
};

}  // namespace singd
