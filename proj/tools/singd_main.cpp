#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "singd/config.hpp"
#include "singd/harness.hpp"
#include "singd/rng.hpp"
#include "singd/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitVerifyFailed = 4;

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  singd::RunConfig cfg = singd::RunConfig::from_file(config_path);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    cfg.out_path = (std::filesystem::path(out_dir) / "run.csv").string();
  }
  const singd::RunSummary summary = singd::run_training(cfg);

  std::cout << "steps=" << cfg.steps << " initial_loss=" << summary.initial_loss
            << " final_loss=" << summary.final_loss
            << " diverged=" << (summary.diverged ? 1 : 0)
            << " singular_events=" << summary.singular_events
            << " max_precond_residual=" << summary.max_precond_residual << "\n";
  for (const singd::StepEvent& e : summary.events) {
    std::cout << "event step=" << e.step << " " << e.what << "\n";
  }
  if (!cfg.out_path.empty()) std::cout << "csv=" << cfg.out_path << "\n";
  return summary.diverged ? kExitDiverged : kExitOk;
}

int cmd_verify(const std::string& suite) {
  const singd::VerifyReport report = singd::run_verify_suite(suite);
  singd::print_report(report, std::cout);
  return report.pass() ? kExitOk : kExitVerifyFailed;
}

int cmd_report_memory(const std::string& config_path) {
  const singd::RunConfig cfg = singd::RunConfig::from_file(config_path);
  singd::print_memory_report(singd::memory_report(cfg), std::cout);
  return kExitOk;
}

// Mean microseconds per call: one warmup, then batches until the total
// elapsed time is long enough to trust.
double time_us(const std::function<void()>& fn) {
  fn();
  double total_us = 0.0;
  long calls = 0;
  long batch = 1;
  while (total_us < 5e4) {
    const auto t0 = std::chrono::steady_clock::now();
    for (long r = 0; r < batch; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    total_us += std::chrono::duration<double, std::micro>(t1 - t0).count();
    calls += batch;
    batch *= 2;
  }
  return total_us / static_cast<double>(calls);
}

int cmd_bench(const std::string& structure, const std::vector<std::size_t>& dims) {
  const singd::StructureSpec spec = singd::StructureSpec::parse(structure);
  singd::Rng rng(7);
  double prev = 0.0;
  for (std::size_t d : dims) {
    const singd::FactorStructure s = spec.bind(d);
    singd::StructuredFactor k = singd::StructuredFactor::identity(s);
    for (double& v : k.coeffs()) v += 0.01 * rng.gaussian();
    singd::StructuredFactor m = singd::StructuredFactor::zero(s);
    for (double& v : m.coeffs()) v = rng.gaussian();
    const singd::Matrix u = singd::symmetrize(rng.gaussian_matrix(d, d));

    const double congruence_us = time_us([&] { (void)singd::congruence(k, u); });
    const double update_us = time_us([&] { (void)singd::right_update(k, m, 0.01); });

    std::cout << "structure=" << spec.name() << " d=" << d
              << " congruence_us=" << congruence_us << " right_update_us=" << update_us;
    if (prev > 0.0) std::cout << " congruence_ratio=" << congruence_us / prev;
    std::cout << "\n";
    prev = congruence_us;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"singd: structured inverse-free Kronecker-factored optimizers"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite, structure;
  std::vector<std::size_t> dims{64, 128, 256};

  CLI::App* train = app.add_subcommand("train", "Run a seeded training loop, emit CSV metrics");
  train->add_option("--config", config_path, "Run configuration file")->required();
  train->add_option("--out", out_dir, "Directory for run.csv");

  CLI::App* verify = app.add_subcommand("verify", "Run a named verification suite");
  verify->add_option("--suite", suite, "theorem1|invariance|projections|closure|precision|quadratic")
      ->required();

  CLI::App* bench = app.add_subcommand("bench", "Time structured-factor operations");
  bench->add_option("--structure", structure, "Structure name, e.g. block_diagonal(k=8)")
      ->required();
  bench->add_option("--dims", dims, "Dimensions to time")->delimiter(',');

  CLI::App* report = app.add_subcommand("report-memory", "Itemized optimizer storage counts");
  report->add_option("--config", config_path, "Run configuration file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (verify->parsed()) return cmd_verify(suite);
    if (bench->parsed()) return cmd_bench(structure, dims);
    if (report->parsed()) return cmd_report_memory(config_path);
  } catch (const singd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
