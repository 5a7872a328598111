#include "singd/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "singd/errors.hpp"

namespace singd {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

struct Entry {
  std::string value;
  std::size_t line;
  mutable bool used = false;
};

class KeyValues {
 public:
  KeyValues(const std::string& text, std::string origin) : origin_(std::move(origin)) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) {
        line = line.substr(0, hash);
      }
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        fail(line_no, "expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) fail(line_no, "empty key");
      if (entries_.count(key)) fail(line_no, "duplicate key '" + key + "'");
      entries_.emplace(key, Entry{value, line_no});
    }
  }

  [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  [[noreturn]] void fail_key(const Entry& e, const std::string& key,
                             const std::string& msg) const {
    fail(e.line, "key '" + key + "': " + msg);
  }

  const Entry* find(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(e->value, &pos);
      if (pos != e->value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail_key(*e, key, "expected a number, got '" + e->value + "'");
    }
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(e->value, &pos);
      if (pos != e->value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail_key(*e, key, "expected a non-negative integer, got '" + e->value + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    fail_key(*e, key, "expected true/false");
  }

  template <typename Fn>
  auto get_parsed(const std::string& key, Fn&& parse, const char* what) const
      -> decltype(parse(std::string{})) {
    const Entry* e = find(key);
    if (!e) fail(0, "internal: get_parsed without default");
    try {
      return parse(e->value);
    } catch (const std::exception& ex) {
      fail_key(*e, key, std::string("bad ") + what + ": " + ex.what());
    }
  }

  std::vector<std::size_t> get_size_list(const std::string& key,
                                         std::vector<std::size_t> fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    std::vector<std::size_t> out;
    std::istringstream ss(e->value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      try {
        out.push_back(std::stoul(item));
      } catch (const std::exception&) {
        fail_key(*e, key, "expected a comma-separated integer list");
      }
    }
    return out;
  }

  void check_all_used() const {
    for (const auto& [key, entry] : entries_) {
      if (!entry.used) {
        fail(entry.line, "unknown key '" + key + "'");
      }
    }
  }

 private:
  std::string origin_;
  std::map<std::string, Entry> entries_;
};

std::uint8_t parse_quantize_points(const std::string& text, const KeyValues& kv,
                                   const Entry& entry) {
  std::uint8_t points = 0;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "factor_state") points |= kQuantizeFactorState;
    else if (item == "gradients") points |= kQuantizeGradients;
    else if (item == "curvature") points |= kQuantizeCurvature;
    else if (item == "parameters") points |= kQuantizeParameters;
    else if (item == "none") { /* explicit empty set */ }
    else kv.fail_key(entry, "precision.quantize_points", "unknown point '" + item + "'");
  }
  return points;
}

}  // namespace

double Schedule::value(double base, std::uint64_t step, std::size_t total_steps) const {
  switch (kind) {
    case ScheduleKind::Constant:
      return base;
    case ScheduleKind::Cosine: {
      const double t = total_steps == 0
                           ? 0.0
                           : static_cast<double>(step) / static_cast<double>(total_steps);
      return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    }
    case ScheduleKind::Step: {
      const auto drops = interval == 0 ? 0 : step / interval;
      return base * std::pow(factor, static_cast<double>(drops));
    }
  }
  return base;
}

void RunConfig::validate() const {
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  opt.validate();
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return from_string(text.str(), path);
}

RunConfig RunConfig::from_string(const std::string& text, const std::string& origin) {
  const KeyValues kv(text, origin);
  RunConfig cfg;

  // task.*
  const std::string task_kind = kv.get_string("task.kind", "gaussian_blobs");
  if (task_kind == "gaussian_blobs") cfg.task.kind = TaskKind::GaussianBlobs;
  else if (task_kind == "kronecker_quadratic") cfg.task.kind = TaskKind::KroneckerQuadratic;
  else if (task_kind == "csv") cfg.task.kind = TaskKind::Csv;
  else kv.fail_key(*kv.find("task.kind"), "task.kind", "unknown task '" + task_kind + "'");
  cfg.task.blobs.classes = kv.get_uint("task.classes", cfg.task.blobs.classes);
  cfg.task.blobs.dim = kv.get_uint("task.dim", cfg.task.blobs.dim);
  cfg.task.blobs.train_size = kv.get_uint("task.train_size", cfg.task.blobs.train_size);
  cfg.task.blobs.test_size = kv.get_uint("task.test_size", cfg.task.blobs.test_size);
  cfg.task.blobs.noise = kv.get_double("task.noise", cfg.task.blobs.noise);
  cfg.task.d_i = kv.get_uint("task.d_i", cfg.task.d_i);
  cfg.task.d_o = kv.get_uint("task.d_o", cfg.task.d_o);
  cfg.task.cond = kv.get_double("task.cond", cfg.task.cond);
  cfg.task.cond_split = kv.get_double("task.cond_split", cfg.task.cond_split);
  cfg.task.csv_path = kv.get_string("task.csv_path", "");
  cfg.task.csv_test_fraction = kv.get_double("task.csv_test_fraction", 0.25);

  // model.*
  cfg.model.hidden = kv.get_size_list("model.hidden", {16});
  if (kv.find("model.activation")) {
    cfg.model.activation = kv.get_parsed(
        "model.activation", [](const std::string& v) { return parse_activation(v); },
        "activation");
  }
  if (kv.find("model.loss")) {
    cfg.model.loss = kv.get_parsed(
        "model.loss", [](const std::string& v) { return parse_loss(v); }, "loss");
  }

  // optimizer.*
  if (kv.find("optimizer.name")) {
    cfg.opt.kind = kv.get_parsed(
        "optimizer.name", [](const std::string& v) { return parse_optimizer_name(v); },
        "optimizer");
  }
  cfg.opt.beta1 = kv.get_double("optimizer.beta1", cfg.opt.beta1);
  cfg.opt.beta2 = kv.get_double("optimizer.beta2", cfg.opt.beta2);
  cfg.opt.alpha1 = kv.get_double("optimizer.alpha1", cfg.opt.alpha1);
  cfg.opt.alpha2 = kv.get_double("optimizer.alpha2", cfg.opt.alpha2);
  cfg.opt.lambda = kv.get_double("optimizer.lambda", cfg.opt.lambda);
  cfg.opt.gamma = kv.get_double("optimizer.gamma", cfg.opt.gamma);
  cfg.opt.interval = kv.get_uint("optimizer.T", cfg.opt.interval);
  if (kv.find("optimizer.structure_K")) {
    cfg.opt.structure_K = kv.get_parsed(
        "optimizer.structure_K", [](const std::string& v) { return StructureSpec::parse(v); },
        "structure");
  }
  if (kv.find("optimizer.structure_C")) {
    cfg.opt.structure_C = kv.get_parsed(
        "optimizer.structure_C", [](const std::string& v) { return StructureSpec::parse(v); },
        "structure");
  }
  cfg.opt.truncation_order =
      static_cast<int>(kv.get_uint("optimizer.truncation_order", 1));
  const std::string decay_sign = kv.get_string("optimizer.adamw_decay_sign", "paper");
  if (decay_sign == "paper") cfg.opt.adamw_decay_sign = AdamwDecaySign::Paper;
  else if (decay_sign == "decoupled") cfg.opt.adamw_decay_sign = AdamwDecaySign::Decoupled;
  else kv.fail_key(*kv.find("optimizer.adamw_decay_sign"), "optimizer.adamw_decay_sign",
                   "expected paper|decoupled");

  // precision.*
  if (kv.find("precision.storage")) {
    cfg.opt.precision.storage = kv.get_parsed(
        "precision.storage", [](const std::string& v) { return parse_format(v); }, "format");
  }
  if (kv.find("precision.accumulation")) {
    cfg.opt.precision.accumulation = kv.get_parsed(
        "precision.accumulation", [](const std::string& v) { return parse_format(v); },
        "format");
  }
  if (const Entry* e = kv.find("precision.quantize_points")) {
    cfg.opt.precision.points = parse_quantize_points(e->value, kv, *e);
  } else if (cfg.opt.precision.storage != Format::FP64) {
    cfg.opt.precision.points = kQuantizeAll;
  }

  // train.*
  cfg.steps = kv.get_uint("train.steps", cfg.steps);
  cfg.batch_size = kv.get_uint("train.batch_size", cfg.batch_size);
  cfg.eval_every = kv.get_uint("train.eval_every", cfg.eval_every);
  cfg.seed = kv.get_uint("train.seed", cfg.seed);
  cfg.record_wall_time = kv.get_bool("train.record_wall_time", false);
  cfg.out_path = kv.get_string("train.out", "");
  const std::string schedule = kv.get_string("train.lr_schedule", "constant");
  if (schedule == "constant") cfg.schedule.kind = ScheduleKind::Constant;
  else if (schedule == "cosine") cfg.schedule.kind = ScheduleKind::Cosine;
  else if (schedule == "step") cfg.schedule.kind = ScheduleKind::Step;
  else kv.fail_key(*kv.find("train.lr_schedule"), "train.lr_schedule",
                   "expected constant|cosine|step");
  cfg.schedule.interval = kv.get_uint("train.lr_step_interval", cfg.schedule.interval);
  cfg.schedule.factor = kv.get_double("train.lr_step_factor", cfg.schedule.factor);

  kv.check_all_used();
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

}  // namespace singd
