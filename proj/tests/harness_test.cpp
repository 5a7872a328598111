#include "singd/harness.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "singd/verify.hpp"

namespace singd {
namespace {

const char* kBlobsConfig =
    "# demo run\n"
    "task.kind = gaussian_blobs\n"
    "task.classes = 3\n"
    "task.dim = 4\n"
    "task.train_size = 64\n"
    "task.test_size = 32\n"
    "task.noise = 0.2\n"
    "model.hidden = 8\n"
    "model.activation = tanh\n"
    "model.loss = softmax_cross_entropy\n"
    "optimizer.name = singd\n"
    "optimizer.structure_K = diagonal\n"
    "optimizer.structure_C = diagonal\n"
    "optimizer.beta1 = 0.05\n"
    "optimizer.beta2 = 0.1\n"
    "optimizer.alpha2 = 0.6\n"
    "optimizer.lambda = 0.001\n"
    "optimizer.T = 2\n"
    "train.steps = 30\n"
    "train.batch_size = 16\n"
    "train.eval_every = 10\n"
    "train.seed = 9\n";

TEST(Config, ParsesFullFile) {
  const RunConfig cfg = RunConfig::from_string(kBlobsConfig, "test");
  EXPECT_EQ(cfg.task.kind, TaskKind::GaussianBlobs);
  EXPECT_EQ(cfg.task.blobs.classes, 3u);
  EXPECT_EQ(cfg.model.hidden, std::vector<std::size_t>{8});
  EXPECT_EQ(cfg.opt.kind, OptimizerKind::Singd);
  EXPECT_EQ(cfg.opt.structure_K.kind, StructureKind::Diagonal);
  EXPECT_DOUBLE_EQ(cfg.opt.alpha2, 0.6);
  EXPECT_EQ(cfg.opt.interval, 2u);
  EXPECT_EQ(cfg.steps, 30u);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.schedule.kind, ScheduleKind::Constant);
}

TEST(Config, DiagnosticsCarryFileAndLine) {
  try {
    RunConfig::from_string("task.kind = gaussian_blobs\nbogus.key = 1\n", "my.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("my.cfg:2"), std::string::npos) << what;
    EXPECT_NE(what.find("bogus.key"), std::string::npos) << what;
  }
  try {
    RunConfig::from_string("optimizer.beta1 = fast\n", "my.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("optimizer.beta1"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::from_string("train.steps = 5\ntrain.steps = 6\n", "x"), ConfigError);
  EXPECT_THROW(RunConfig::from_string("no equals sign here\n", "x"), ConfigError);
  EXPECT_THROW(RunConfig::from_string("optimizer.name = adamax\n", "x"), ConfigError);
  EXPECT_THROW(RunConfig::from_string("precision.storage = fp64\nprecision.accumulation = bf16\n", "x"),
               ConfigError);
}

TEST(Config, PrecisionDefaultsAndPoints) {
  const RunConfig bf16 = RunConfig::from_string(
      "precision.storage = bf16\nprecision.accumulation = fp32\n", "x");
  EXPECT_EQ(bf16.opt.precision.points, kQuantizeAll);  // defaulted on for narrow storage
  const RunConfig partial = RunConfig::from_string(
      "precision.storage = bf16\nprecision.accumulation = fp32\n"
      "precision.quantize_points = gradients,parameters\n",
      "x");
  EXPECT_TRUE(partial.opt.precision.quantizes(kQuantizeGradients));
  EXPECT_FALSE(partial.opt.precision.quantizes(kQuantizeFactorState));
}

TEST(Schedule, CosineAndStep) {
  Schedule cosine{ScheduleKind::Cosine, 0, 0.0};
  EXPECT_DOUBLE_EQ(cosine.value(0.4, 0, 100), 0.4);
  EXPECT_NEAR(cosine.value(0.4, 50, 100), 0.2, 1e-12);
  EXPECT_NEAR(cosine.value(0.4, 100, 100), 0.0, 1e-12);

  Schedule step{ScheduleKind::Step, 40, 0.5};
  EXPECT_DOUBLE_EQ(step.value(0.4, 39, 1000), 0.4);
  EXPECT_DOUBLE_EQ(step.value(0.4, 40, 1000), 0.2);
  EXPECT_DOUBLE_EQ(step.value(0.4, 80, 1000), 0.1);
}

TEST(RunTraining, DeterministicCsvForSameSeed) {
  RunConfig cfg = RunConfig::from_string(kBlobsConfig, "test");
  const std::string a = testing::TempDir() + "/singd_run_a.csv";
  const std::string b = testing::TempDir() + "/singd_run_b.csv";
  cfg.out_path = a;
  run_training(cfg);
  cfg.out_path = b;
  run_training(cfg);
  std::ifstream fa(a), fb(b);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  EXPECT_FALSE(sa.str().empty());
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(sa.str().find("# singd-kit v1\n"), std::string::npos);
  EXPECT_NE(sa.str().find("step,train_loss,test_error,grad_norm,factor_norm_K,"
                          "factor_norm_C,nonfinite_flag,wall_ms"),
            std::string::npos);
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST(RunTraining, SeedEnvOverrideChangesRun) {
  RunConfig cfg = RunConfig::from_string(kBlobsConfig, "test");
  const RunSummary base = run_training(cfg);
  setenv("SINGD_SEED", "12345", 1);
  const RunSummary overridden = run_training(cfg);
  unsetenv("SINGD_SEED");
  EXPECT_NE(base.final_loss, overridden.final_loss);
  setenv("SINGD_SEED", "not-a-number", 1);
  EXPECT_THROW(run_training(cfg), ConfigError);
  unsetenv("SINGD_SEED");
}

TEST(RunTraining, LossDecreasesOnBlobs) {
  const RunConfig cfg = RunConfig::from_string(kBlobsConfig, "test");
  const RunSummary summary = run_training(cfg);
  EXPECT_FALSE(summary.diverged);
  EXPECT_LT(summary.final_loss, summary.initial_loss);
  ASSERT_FALSE(summary.records.empty());
  EXPECT_EQ(summary.records.front().step, 0u);
  EXPECT_EQ(summary.records.back().step, 29u);
  for (const TrainRecord& r : summary.records) {
    EXPECT_GE(r.test_error, 0.0);
    EXPECT_LE(r.test_error, 1.0);
    EXPECT_EQ(r.wall_ms, 0.0);  // wall clock off by default, CSV reproducible
  }
}

TEST(RunTraining, QuadraticConvergesWithExactCurvature) {
  const RunConfig cfg = RunConfig::from_string(
      "task.kind = kronecker_quadratic\n"
      "task.d_i = 4\ntask.d_o = 4\ntask.cond = 1000\n"
      "optimizer.name = singd\n"
      "optimizer.beta1 = 0.5\noptimizer.beta2 = 0.5\noptimizer.lambda = 1e-8\n"
      "train.steps = 200\ntrain.seed = 4\ntrain.eval_every = 50\n",
      "test");
  const RunSummary summary = run_training(cfg);
  EXPECT_FALSE(summary.diverged);
  EXPECT_LT(summary.records.back().grad_norm, 1e-6);
}

TEST(RunTraining, AdamwAndSgdBaselinesRun) {
  for (const char* name : {"adamw", "sgd"}) {
    std::string text = kBlobsConfig;
    text.replace(text.find("optimizer.name = singd"), 22, std::string("optimizer.name = ") + name);
    RunConfig cfg = RunConfig::from_string(text, "test");
    cfg.opt.lambda = 1e-8;
    const RunSummary summary = run_training(cfg);
    EXPECT_FALSE(summary.diverged);
    EXPECT_LT(summary.final_loss, summary.initial_loss) << name;
    EXPECT_TRUE(std::isnan(summary.records.back().factor_norm_K)) << name;
  }
}

TEST(MemoryReport, ItemizedCounts) {
  OptimizerConfig adamw;
  adamw.kind = OptimizerKind::Adamw;
  const MemoryReport ar = memory_report({{10, 10}}, adamw);
  ASSERT_EQ(ar.layers.size(), 1u);
  EXPECT_EQ(ar.layers[0].items[0].name, "m_s");
  EXPECT_EQ(ar.layers[0].items[0].count, 100u);
  EXPECT_EQ(ar.layers[0].items[1].name, "m_mu");
  EXPECT_EQ(ar.layers[0].items[1].count, 100u);
  EXPECT_EQ(ar.total(), 200u);

  OptimizerConfig singd;
  singd.kind = OptimizerKind::Singd;
  singd.structure_K = StructureSpec::parse("diagonal");
  singd.structure_C = StructureSpec::parse("diagonal");
  const MemoryReport sr = memory_report({{10, 10}}, singd);
  EXPECT_EQ(sr.layers[0].items[0].count, 10u);   // K
  EXPECT_EQ(sr.layers[0].items[1].count, 10u);   // C
  EXPECT_EQ(sr.layers[0].items[2].count, 10u);   // m_K
  EXPECT_EQ(sr.layers[0].items[3].count, 10u);   // m_C
  EXPECT_EQ(sr.layers[0].items[4].count, 100u);  // m_mu
  EXPECT_EQ(sr.total(), 140u);

  OptimizerConfig dense = singd;
  dense.structure_K = StructureSpec::parse("dense");
  dense.structure_C = StructureSpec::parse("dense");
  const MemoryReport dr = memory_report({{10, 10}}, dense);
  EXPECT_EQ(dr.layers[0].items[0].count, 100u);  // unstructured factors

  OptimizerConfig kfac;
  kfac.kind = OptimizerKind::Kfac;
  const MemoryReport kr = memory_report({{4, 6}}, kfac);
  EXPECT_EQ(kr.layers[0].total(), 36u + 16u + 36u + 16u + 24u);
}

TEST(MemoryReport, LayerDimsFromConfig) {
  const RunConfig cfg = RunConfig::from_string(kBlobsConfig, "test");
  const auto dims = layer_dims(cfg);
  ASSERT_EQ(dims.size(), 2u);
  EXPECT_EQ(dims[0], (std::pair<std::size_t, std::size_t>{8, 5}));  // 4 features + bias
  EXPECT_EQ(dims[1], (std::pair<std::size_t, std::size_t>{3, 9}));  // 8 hidden + bias
}

TEST(Verify, UnknownSuiteThrows) {
  EXPECT_THROW(run_verify_suite("nonsense"), ConfigError);
  EXPECT_EQ(verify_suite_names().size(), 6u);
}

TEST(WriteCsv, FormatsRecords) {
  TrainRecord rec;
  rec.step = 5;
  rec.train_loss = 0.5;
  rec.test_error = 0.25;
  rec.grad_norm = 1.0;
  rec.factor_norm_K = 2.0;
  rec.factor_norm_C = 3.0;
  rec.nonfinite_flag = 1;
  rec.wall_ms = 0.0;
  std::ostringstream os;
  write_csv({rec}, os);
  EXPECT_EQ(os.str(),
            "# singd-kit v1\n"
            "step,train_loss,test_error,grad_norm,factor_norm_K,factor_norm_C,"
            "nonfinite_flag,wall_ms\n"
            "5,0.5,0.25,1,2,3,1,0\n");
}

}  // namespace
}  // namespace singd
