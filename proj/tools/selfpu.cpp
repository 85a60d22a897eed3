// selfpu -- command line trainer and utilities.
//
//   selfpu train --config cfg.txt [--seed N] [--out DIR]
//   selfpu eval  --checkpoint run/final.ckpt --dataset synth:DIR|mnist:DIR
//   selfpu synth --n 10000 --mu 1.5 --pi-p 0.5 --out DIR
//   selfpu sweep --config cfg.txt --seeds 5 [--out DIR]

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "selfpu/checkpoint.hpp"
#include "selfpu/config.hpp"
#include "selfpu/data.hpp"
#include "selfpu/trainer.hpp"

namespace {

selfpu::LabeledSet<selfpu::Real> load_eval_set(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw selfpu::ConfigError(
        "dataset must be 'synth:<dir>' or 'mnist:<dir>', got '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const std::string dir = spec.substr(colon + 1);
  if (kind == "synth") return selfpu::load_labeled_set<selfpu::Real>(dir + "/test.bin");
  if (kind == "mnist") {
    auto raw = selfpu::load_mnist_idx<selfpu::Real>(
        dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
    selfpu::LabeledSet<selfpu::Real> set;
    set.x = std::move(raw.features);
    set.labels.resize(raw.labels.size());
    for (std::size_t i = 0; i < raw.labels.size(); ++i)
      set.labels[i] = static_cast<std::int8_t>(
          selfpu::apply_positive_rule("odd_even", raw.labels[i]));
    return set;
  }
  throw selfpu::ConfigError("unknown dataset kind '" + kind + "'");
}

int cmd_train(const std::string& config_path, std::int64_t seed,
              const std::string& out_dir) {
  selfpu::TrainerConfig cfg = selfpu::load_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  selfpu::Trainer trainer(cfg);
  selfpu::TrainResult r = trainer.run();
  std::printf("final_model=%s test_accuracy=%.6f epochs=%d\n",
              r.final_model.c_str(), r.test_accuracy, r.epochs_run);
  std::printf("metrics=%s\n", r.metrics_path.c_str());
  if (!r.checkpoint_path.empty())
    std::printf("checkpoint=%s\n", r.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset) {
  const selfpu::Checkpoint c = selfpu::load_checkpoint(ckpt_path);
  const auto set = load_eval_set(dataset);
  std::printf("student1 %.6f\n", selfpu::evaluate(c.student1, set));
  std::printf("student2 %.6f\n", selfpu::evaluate(c.student2, set));
  if (c.teacher1.initialized)
    std::printf("teacher1 %.6f\n", selfpu::evaluate(c.teacher1.theta_bar, set));
  if (c.teacher2.initialized)
    std::printf("teacher2 %.6f\n", selfpu::evaluate(c.teacher2.theta_bar, set));
  return 0;
}

int cmd_synth(std::int64_t n, std::int64_t test_n, std::size_t d, double mu,
              double pi_p, std::uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto raw_train =
      selfpu::gen_two_gaussians<selfpu::Real>(n, d, mu, pi_p, seed,
                                              "gauss_train");
  auto raw_test =
      selfpu::gen_two_gaussians<selfpu::Real>(test_n, d, mu, pi_p, seed,
                                              "gauss_test");
  auto to_set = [](selfpu::RawDataset<selfpu::Real>&& raw) {
    selfpu::LabeledSet<selfpu::Real> set;
    set.x = std::move(raw.features);
    set.labels.assign(raw.labels.begin(), raw.labels.end());
    return set;
  };
  selfpu::save_labeled_set(to_set(std::move(raw_train)), out_dir + "/train.bin");
  selfpu::save_labeled_set(to_set(std::move(raw_test)), out_dir + "/test.bin");
  selfpu::save_kv_file(out_dir + "/synth_manifest.txt",
                       {{"n", std::to_string(n)},
                        {"test_n", std::to_string(test_n)},
                        {"d", std::to_string(d)},
                        {"mu", selfpu::kv_format_double(mu)},
                        {"pi_p", selfpu::kv_format_double(pi_p)},
                        {"seed", std::to_string(seed)}});
  std::printf("wrote %s/train.bin (%lld examples) and test.bin (%lld)\n",
              out_dir.c_str(), static_cast<long long>(n),
              static_cast<long long>(test_n));
  return 0;
}

int cmd_sweep(const std::string& config_path, int seeds,
              const std::string& out_dir) {
  selfpu::TrainerConfig cfg = selfpu::load_config(config_path);
  const std::string root = out_dir.empty() ? cfg.out_dir : out_dir;
  selfpu::SweepResult res = selfpu::run_sweep(cfg, seeds, root);
  std::filesystem::create_directories(root);
  std::ofstream out(root + "/sweep_summary.csv");
  out << "seed,test_accuracy\n";
  for (std::size_t k = 0; k < res.accuracies.size(); ++k)
    out << (cfg.seed + k) << ',' << selfpu::detail::fmt_acc(res.accuracies[k])
        << "\n";
  out << "# mean=" << selfpu::detail::fmt_acc(res.mean)
      << " std=" << selfpu::detail::fmt_acc(res.stddev) << "\n";
  std::printf("%zu runs: mean %.4f (%.4f)\n", res.accuracies.size(), res.mean,
              res.stddev);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-boosted positive-unlabeled trainer"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt_path, dataset;
  std::int64_t seed_flag = -1;
  auto* train = app.add_subcommand("train", "run the training pipeline");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed_flag, "seed override");
  train->add_option("--out", out_dir, "output directory override");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--dataset", dataset, "synth:<dir> or mnist:<dir>")
      ->required();

  std::int64_t synth_n = 10000, synth_test_n = 10000;
  std::size_t synth_d = 2;
  double synth_mu = 1.5, synth_pi = 0.5;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a two-Gaussian dataset");
  synth->add_option("--n", synth_n, "training examples")->required();
  synth->add_option("--mu", synth_mu, "class mean offset")->required();
  synth->add_option("--pi-p", synth_pi, "positive class prior")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--test-n", synth_test_n, "test examples");
  synth->add_option("--d", synth_d, "feature dimension");
  synth->add_option("--seed", synth_seed, "generator seed");

  int sweep_seeds = 5;
  auto* sweep = app.add_subcommand("sweep", "train across consecutive seeds");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--seeds", sweep_seeds, "number of seeds")->required();
  sweep->add_option("--out", out_dir, "output root override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, seed_flag, out_dir);
    if (eval->parsed()) return cmd_eval(ckpt_path, dataset);
    if (synth->parsed())
      return cmd_synth(synth_n, synth_test_n, synth_d, synth_mu, synth_pi,
                       synth_seed, synth_out);
    if (sweep->parsed()) return cmd_sweep(config_path, sweep_seeds, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
