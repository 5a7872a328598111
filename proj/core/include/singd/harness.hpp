#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "singd/config.hpp"
#include "singd/optim.hpp"

namespace singd {

/// One CSV row. wall_ms is 0 unless the config opts into wall-clock
/// recording, so that identical seeds give byte-identical files.
struct TrainRecord {
  std::uint64_t step = 0;
  double train_loss = 0.0;
  double test_error = 0.0;  // nan for tasks without a test split
  double grad_norm = 0.0;
  double factor_norm_K = 0.0;  // nan for optimizers without factors
  double factor_norm_C = 0.0;
  int nonfinite_flag = 0;
  double wall_ms = 0.0;
};

struct RunSummary {
  std::vector<TrainRecord> records;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool diverged = false;  // a non-finite value was encountered
  std::size_t nonfinite_events = 0;
  std::size_t singular_events = 0;
  double max_precond_residual = 0.0;
  std::vector<StepEvent> events;
};

/// Deterministic given the seed (FP64 single-threaded). Writes the CSV to
/// cfg.out_path when set. SINGD_SEED in the environment overrides the
/// config seed.
RunSummary run_training(const RunConfig& cfg);

/// Schema: `# singd-kit v1` comment, then the fixed header row.
void write_csv(const std::vector<TrainRecord>& records, std::ostream& os);

struct MemoryItem {
  std::string name;
  std::size_t count = 0;
};

struct LayerMemory {
  std::size_t index = 0;
  std::size_t d_out = 0;
  std::size_t d_in = 0;
  std::vector<MemoryItem> items;
  std::size_t total() const;
};

/// Itemized stored-scalar counts: every state buffer the optimizer keeps,
/// per layer, nothing hidden.
struct MemoryReport {
  OptimizerKind kind = OptimizerKind::Singd;
  std::vector<LayerMemory> layers;
  std::size_t total() const;
};

MemoryReport memory_report(const std::vector<std::pair<std::size_t, std::size_t>>& layer_dims,
                           const OptimizerConfig& cfg);
MemoryReport memory_report(const RunConfig& cfg);

/// (d_out, d_in) per layer, bias coordinate included for MLP tasks.
std::vector<std::pair<std::size_t, std::size_t>> layer_dims(const RunConfig& cfg);

void print_memory_report(const MemoryReport& report, std::ostream& os);

}  // namespace singd
