// config.hpp -- trainer configuration: flat key=value files, defaults,
// validation.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "selfpu/distill.hpp"
#include "selfpu/errors.hpp"
#include "selfpu/kv.hpp"
#include "selfpu/losses.hpp"
#include "selfpu/reweight.hpp"
#include "selfpu/selfpaced.hpp"

namespace selfpu {

struct TrainerConfig {
  // data
  std::string dataset = "mnist";  // "mnist" | "synth"
  std::string data_dir;           // mnist: IDX directory; synth: optional
  std::int64_t n_p = 1000;
  double pi_p = 0.49;
  std::int64_t holdout_per_class = 250;
  bool u_includes_positives = false;
  std::vector<std::size_t> layer_dims;  // empty: per-dataset default

  // synthetic generation (dataset == "synth" without data_dir)
  std::int64_t synth_n = 10000;
  std::int64_t synth_test_n = 10000;
  std::size_t synth_d = 2;
  double synth_mu = 1.5;

  // schedule
  std::size_t batch_size = 256;
  int total_epochs = 200;
  int warmup_end = 10;
  int selfpaced_end = 50;
  double pace1 = 0.20;
  double pace2 = 0.30;
  std::string selection_mode = "in_and_out";  // | "fixed_size" | "no_replacement"

  // losses
  double alpha = 10.0;
  double beta = 0.3;
  double gamma = 1.0 / 16.0;
  double delta = 0.0;  // 0: follow the current learning rate
  std::string clamp_policy = "flip";  // | "zero"
  bool distill_students = true;
  bool distill_teachers = true;

  // optimizer
  double lr_max = 1e-4;
  double lr_min = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // modes
  std::string teacher_mode = "literal";      // | "ema"
  std::string teacher_cadence = "per_epoch"; // | "per_step"
  std::string meta_mode = "oracle_holdout";  // | "trusted_bootstrap"

  // run control
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int halt_after = 0;  // stop after this many epochs; 0 = run to the end
  bool parallel_students = false;
  bool audit_trusted = false;
  bool audit_weights = false;
  bool checkpoint_final = true;

  SelectionMode selection_mode_enum() const {
    if (selection_mode == "in_and_out") return SelectionMode::in_and_out;
    if (selection_mode == "fixed_size") return SelectionMode::fixed_size;
    if (selection_mode == "no_replacement")
      return SelectionMode::no_replacement;
    throw ConfigError("unknown selection_mode '" + selection_mode + "'");
  }

  ClampPolicy clamp_policy_enum() const {
    if (clamp_policy == "flip") return ClampPolicy::flip;
    if (clamp_policy == "zero") return ClampPolicy::zero;
    throw ConfigError("unknown clamp_policy '" + clamp_policy + "'");
  }

  TeacherMode teacher_mode_enum() const {
    if (teacher_mode == "literal") return TeacherMode::two_step_literal;
    if (teacher_mode == "ema") return TeacherMode::ema_recursive;
    throw ConfigError("unknown teacher_mode '" + teacher_mode + "'");
  }

  MetaSource meta_mode_enum() const {
    if (meta_mode == "oracle_holdout") return MetaSource::oracle_holdout;
    if (meta_mode == "trusted_bootstrap")
      return MetaSource::trusted_bootstrap;
    throw ConfigError("unknown meta_mode '" + meta_mode + "'");
  }

  std::vector<std::size_t> resolved_layer_dims() const {
    if (!layer_dims.empty()) return layer_dims;
    if (dataset == "mnist")
      return {784, 300, 300, 300, 300, 1};
    return {synth_d, 64, 64, 1};
  }

  void validate() const {
    if (dataset != "mnist" && dataset != "synth")
      throw ConfigError("dataset must be 'mnist' or 'synth'");
    if (dataset == "mnist" && data_dir.empty())
      throw ConfigError("mnist dataset requires data_dir");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
    if (!(warmup_end > 0 && selfpaced_end > warmup_end))
      throw ConfigError("need 0 < warmup_end < selfpaced_end");
    if (!(pace1 > 0.0 && pace1 <= 1.0 && pace2 > 0.0 && pace2 <= 1.0))
      throw ConfigError("paces must lie in (0,1]");
    if (!(pi_p > 0.0 && pi_p < 1.0)) throw ConfigError("pi_p must be in (0,1)");
    if (n_p < 1) throw ConfigError("n_p must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must be in [0,1)");
    if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
    if (delta < 0.0) throw ConfigError("delta must be >= 0");
    if (!(lr_max > 0.0) || lr_min < 0.0 || lr_min > lr_max)
      throw ConfigError("need 0 <= lr_min <= lr_max and lr_max > 0");
    if (holdout_per_class < 0)
      throw ConfigError("holdout_per_class must be >= 0");
    if (halt_after < 0) throw ConfigError("halt_after must be >= 0");
    selection_mode_enum();
    clamp_policy_enum();
    teacher_mode_enum();
    meta_mode_enum();
    const auto dims = resolved_layer_dims();
    if (dims.size() < 2 || dims.back() != 1)
      throw ConfigError("layer_dims must end in 1 and name >= 2 widths");
  }
};

namespace detail {
inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(key + ": expected boolean 0/1, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::int64_t i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected integer, got '" + v + "'");
  }
}

inline std::vector<std::size_t> parse_dims(const std::string& key,
                                           const std::string& v) {
  std::vector<std::size_t> dims;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::int64_t d = parse_int(key, kv_trim(item));
    if (d <= 0) throw ConfigError(key + ": widths must be positive");
    dims.push_back(static_cast<std::size_t>(d));
  }
  return dims;
}
}  // namespace detail

inline TrainerConfig config_from_kv(const KvMap& kv) {
  TrainerConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "dataset") c.dataset = value;
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "n_p") c.n_p = detail::parse_int(key, value);
    else if (key == "pi_p") c.pi_p = detail::parse_double(key, value);
    else if (key == "holdout_per_class")
      c.holdout_per_class = detail::parse_int(key, value);
    else if (key == "u_includes_positives")
      c.u_includes_positives = detail::parse_bool(key, value);
    else if (key == "layer_dims") c.layer_dims = detail::parse_dims(key, value);
    else if (key == "synth_n") c.synth_n = detail::parse_int(key, value);
    else if (key == "synth_test_n")
      c.synth_test_n = detail::parse_int(key, value);
    else if (key == "synth_d")
      c.synth_d = static_cast<std::size_t>(detail::parse_int(key, value));
    else if (key == "synth_mu") c.synth_mu = detail::parse_double(key, value);
    else if (key == "batch_size")
      c.batch_size = static_cast<std::size_t>(detail::parse_int(key, value));
    else if (key == "total_epochs")
      c.total_epochs = static_cast<int>(detail::parse_int(key, value));
    else if (key == "warmup_end")
      c.warmup_end = static_cast<int>(detail::parse_int(key, value));
    else if (key == "selfpaced_end")
      c.selfpaced_end = static_cast<int>(detail::parse_int(key, value));
    else if (key == "pace1") c.pace1 = detail::parse_double(key, value);
    else if (key == "pace2") c.pace2 = detail::parse_double(key, value);
    else if (key == "selection_mode") c.selection_mode = value;
    else if (key == "alpha") c.alpha = detail::parse_double(key, value);
    else if (key == "beta") c.beta = detail::parse_double(key, value);
    else if (key == "gamma") c.gamma = detail::parse_double(key, value);
    else if (key == "delta") c.delta = detail::parse_double(key, value);
    else if (key == "clamp_policy") c.clamp_policy = value;
    else if (key == "distill_students")
      c.distill_students = detail::parse_bool(key, value);
    else if (key == "distill_teachers")
      c.distill_teachers = detail::parse_bool(key, value);
    else if (key == "lr_max") c.lr_max = detail::parse_double(key, value);
    else if (key == "lr_min") c.lr_min = detail::parse_double(key, value);
    else if (key == "adam_beta1")
      c.adam_beta1 = detail::parse_double(key, value);
    else if (key == "adam_beta2")
      c.adam_beta2 = detail::parse_double(key, value);
    else if (key == "adam_eps") c.adam_eps = detail::parse_double(key, value);
    else if (key == "teacher_mode") c.teacher_mode = value;
    else if (key == "teacher_cadence") c.teacher_cadence = value;
    else if (key == "meta_mode") c.meta_mode = value;
    else if (key == "seed")
      c.seed = static_cast<std::uint64_t>(detail::parse_int(key, value));
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "halt_after")
      c.halt_after = static_cast<int>(detail::parse_int(key, value));
    else if (key == "parallel_students")
      c.parallel_students = detail::parse_bool(key, value);
    else if (key == "audit_trusted")
      c.audit_trusted = detail::parse_bool(key, value);
    else if (key == "audit_weights")
      c.audit_weights = detail::parse_bool(key, value);
    else if (key == "checkpoint_final")
      c.checkpoint_final = detail::parse_bool(key, value);
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
  if (c.teacher_cadence != "per_epoch" && c.teacher_cadence != "per_step")
    throw ConfigError("unknown teacher_cadence '" + c.teacher_cadence + "'");
  return c;
}

inline TrainerConfig load_config(const std::string& path) {
  TrainerConfig c = config_from_kv(load_kv_file(path));
  if (const char* env = std::getenv("SELFPU_OUT"); env && *env)
    c.out_dir = env;
  return c;
}

}  // namespace selfpu
