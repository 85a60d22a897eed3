// acceptance_main.cpp -- end-to-end acceptance suite. Runs every criterion
// at its stated tolerance and prints one PASS/FAIL line per criterion.
// Criteria 7 and 8 need the real MNIST IDX files and hours of CPU; they are
// opt-in via --extended --mnist-dir=PATH (and --extended-ablation for the
// selection-mode ablation) and print SKIP otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracle_helpers.hpp"
#include "selfpu/config.hpp"
#include "selfpu/data.hpp"
#include "selfpu/distill.hpp"
#include "selfpu/losses.hpp"
#include "selfpu/mlp.hpp"
#include "selfpu/reweight.hpp"
#include "selfpu/selfpaced.hpp"
#include "selfpu/trainer.hpp"

using namespace selfpu;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

Outcome pass_with(std::string detail) { return {true, false, std::move(detail)}; }
Outcome fail_with(std::string detail) { return {false, false, std::move(detail)}; }
Outcome skip_with(std::string detail) { return {false, true, std::move(detail)}; }

std::string fmt(double v, const char* format = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// criterion 1: gradient oracle suite, six loss families, rel err < 1e-4

struct GradFamilyResult {
  int cases = 0;
  double worst = 0.0;
};

template <class LossValue, class LossGrads>
void run_grad_case(Mlp<double>& model, LossValue value_of, LossGrads grads_of,
                   GradFamilyResult& fam) {
  const Gradients<double> analytic = grads_of(model);
  const Gradients<double> fd = oracle::fd_model_grad(model, value_of);
  fam.worst = std::max(fam.worst, oracle::max_rel_error(analytic, fd));
  fam.cases += 1;
}

// positives scored at one extreme and unlabeled at the other force the
// bracket's sign; returns (model, p_x, u_x) with a safe margin from zero
struct RiskInstance {
  Mlp<double> model{std::vector<std::size_t>{3, 8, 1}};
  Matrix<double> p_x, u_x;
};

RiskInstance make_risk_instance(Rng& rng, bool want_clamped,
                                const ClassPrior& prior) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    RiskInstance inst;
    inst.model = oracle::random_model(rng, {3, 8, 1});
    auto pool = oracle::random_inputs(rng, 40, 3, 1.5);
    ForwardCache<double> cache;
    std::vector<double> scores;
    forward_batch(inst.model, pool, cache, scores);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const std::size_t k = 5;
    inst.p_x.resize(k, 3);
    inst.u_x.resize(k, 3);
    for (std::size_t i = 0; i < k; ++i) {
      // clamped wants high-scoring positives and low-scoring unlabeled
      const std::size_t pi = want_clamped ? order[i] : order[order.size() - 1 - i];
      const std::size_t ui = want_clamped ? order[order.size() - 1 - i] : order[i];
      for (std::size_t c = 0; c < 3; ++c) {
        inst.p_x(i, c) = pool(pi, c);
        inst.u_x(i, c) = pool(ui, c);
      }
    }
    std::vector<double> zp, zu;
    forward_batch(inst.model, inst.p_x, cache, zp);
    forward_batch(inst.model, inst.u_x, cache, zu);
    const auto risk = nnpu_risk<double>(zp, zu, prior);
    const double bracket = risk.unlabeled_term - risk.correction_term;
    if (risk.clamped == want_clamped && std::abs(bracket) > 5e-3) return inst;
  }
  throw std::runtime_error("could not build a risk instance");
}

Gradients<double> nnpu_model_grads(const Mlp<double>& model,
                                   const Matrix<double>& p_x,
                                   const Matrix<double>& u_x,
                                   const ClassPrior& prior) {
  ForwardCache<double> cp, cu;
  std::vector<double> zp, zu;
  forward_batch(model, p_x, cp, zp);
  forward_batch(model, u_x, cu, zu);
  const auto g = nnpu_grad<double>(zp, zu, prior, ClampPolicy::flip);
  Gradients<double> grads(model);
  backward_batch(model, cp, std::span<const double>(g.d_p_scores), grads);
  backward_batch(model, cu, std::span<const double>(g.d_u_scores), grads);
  return grads;
}

double nnpu_objective(const Mlp<double>& model, const Matrix<double>& p_x,
                      const Matrix<double>& u_x, const ClassPrior& prior,
                      bool clamped) {
  ForwardCache<double> c;
  std::vector<double> zp, zu;
  forward_batch(model, p_x, c, zp);
  forward_batch(model, u_x, c, zu);
  const auto r = nnpu_risk<double>(zp, zu, prior);
  const double bracket = r.unlabeled_term - r.correction_term;
  return r.positive_term + (clamped ? -bracket : bracket);
}

Outcome criterion1() {
  Rng rng(1001, "acc1");
  const ClassPrior prior(0.45);
  GradFamilyResult sig, ce, unclamped, clamped, students, teachers;

  for (int t = 0; t < 20; ++t) {
    // sigmoid loss family
    {
      auto model = oracle::random_model(rng, {3, 8, 1});
      auto x = oracle::random_inputs(rng, 6, 3);
      std::vector<int> y(6);
      for (auto& v : y) v = rng.uniform01() < 0.5 ? -1 : +1;
      auto value = [&](Mlp<double>& m) {
        ForwardCache<double> c;
        std::vector<double> z;
        forward_batch(m, x, c, z);
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
          s += sigmoid_loss(z[i], y[i]);
        return s;
      };
      auto grads = [&](const Mlp<double>& m) {
        ForwardCache<double> c;
        std::vector<double> z;
        forward_batch(m, x, c, z);
        std::vector<double> dz(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
          dz[i] = sigmoid_loss_dz(z[i], y[i]);
        Gradients<double> g(m);
        backward_batch(m, c, std::span<const double>(dz), g);
        return g;
      };
      run_grad_case(model, value, grads, sig);
    }
    // soft cross entropy family
    {
      auto model = oracle::random_model(rng, {3, 8, 1});
      auto x = oracle::random_inputs(rng, 6, 3);
      std::vector<double> q(6);
      for (auto& v : q) v = 0.05 + 0.9 * rng.uniform01();
      auto value = [&](Mlp<double>& m) {
        ForwardCache<double> c;
        std::vector<double> z;
        forward_batch(m, x, c, z);
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
          s += cross_entropy(z[i], q[i]);
        return s;
      };
      auto grads = [&](const Mlp<double>& m) {
        ForwardCache<double> c;
        std::vector<double> z;
        forward_batch(m, x, c, z);
        std::vector<double> dz(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
          dz[i] = cross_entropy_dz(z[i], q[i]);
        Gradients<double> g(m);
        backward_batch(m, c, std::span<const double>(dz), g);
        return g;
      };
      run_grad_case(model, value, grads, ce);
    }
    // nnPU risk, unclamped and clamped/flipped
    for (bool want_clamped : {false, true}) {
      auto inst = make_risk_instance(rng, want_clamped, prior);
      auto value = [&](Mlp<double>& m) {
        return nnpu_objective(m, inst.p_x, inst.u_x, prior, want_clamped);
      };
      auto grads = [&](const Mlp<double>& m) {
        return nnpu_model_grads(m, inst.p_x, inst.u_x, prior);
      };
      run_grad_case(inst.model, value, grads,
                    want_clamped ? clamped : unclamped);
    }
    // student MSE family (gates all-in via a tiny alpha)
    {
      auto a = oracle::random_model(rng, {3, 6, 1});
      auto b = oracle::random_model(rng, {3, 6, 1});
      auto x = oracle::random_inputs(rng, 5, 3);
      std::vector<std::uint8_t> none(5, 0);
      MiningConfig mining;
      mining.alpha = 1e-9;
      auto value1 = [&](Mlp<double>& m) {
        return student_consistency(m, b, x, none, none, mining, prior).value;
      };
      auto grads1 = [&](const Mlp<double>& m) {
        return student_consistency(m, b, x, none, none, mining, prior).grads1;
      };
      run_grad_case(a, value1, grads1, students);
      auto value2 = [&](Mlp<double>& m) {
        return student_consistency(a, m, x, none, none, mining, prior).value;
      };
      auto grads2 = [&](const Mlp<double>& m) {
        return student_consistency(a, m, x, none, none, mining, prior).grads2;
      };
      run_grad_case(b, value2, grads2, students);
    }
    // teacher MSE family
    {
      auto g = oracle::random_model(rng, {3, 6, 1});
      auto tm = oracle::random_model(rng, {3, 6, 1});
      auto x = oracle::random_inputs(rng, 5, 3);
      auto value = [&](Mlp<double>& m) {
        return teacher_consistency(tm, m, x).value;
      };
      auto grads = [&](const Mlp<double>& m) {
        return teacher_consistency(tm, m, x).student_grads;
      };
      run_grad_case(g, value, grads, teachers);
    }
  }

  const GradFamilyResult* fams[] = {&sig, &ce, &unclamped, &clamped,
                                    &students, &teachers};
  double worst = 0.0;
  for (const auto* f : fams) {
    if (f->cases < 20) return fail_with("family with fewer than 20 cases");
    worst = std::max(worst, f->worst);
  }
  if (worst >= 1e-4)
    return fail_with("worst relative error " + fmt(worst, "%.3e"));
  return pass_with("6 families x >=20 cases, worst rel err " +
                   fmt(worst, "%.3e"));
}

// ---------------------------------------------------------------------------
// criterion 2: risk-estimator properties over 1e4 random batches

Outcome criterion2() {
  Rng rng(1002, "acc2");
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t np = 1 + rng.below(10);
    const std::size_t nu = 1 + rng.below(30);
    std::vector<double> zp(np), zu(nu);
    for (auto& z : zp) z = rng.uniform(-9.0, 9.0);
    for (auto& z : zu) z = rng.uniform(-9.0, 9.0);
    const ClassPrior prior(0.02 + 0.96 * rng.uniform01());
    const auto u = upu_risk<double>(zp, zu, prior);
    const auto n = nnpu_risk<double>(zp, zu, prior);
    if (!(n.total >= 0.0)) return fail_with("nnPU went negative");
    if (!(n.total >= u.total)) return fail_with("nnPU below uPU");
    if (!n.clamped && n.total != u.total)
      return fail_with("unclamped estimators disagree");
    if (n.clamped && !(n.total > u.total))
      return fail_with("clamped nnPU failed to exceed uPU");
  }
  const ClassPrior half(0.5);
  const std::vector<double> zp{10.0}, zu{-10.0};
  const auto u = upu_risk<double>(zp, zu, half);
  const auto n = nnpu_risk<double>(zp, zu, half);
  if (std::abs(u.total - (-0.4999)) > 1e-4)
    return fail_with("uPU worked example: " + fmt(u.total, "%.6f"));
  if (std::abs(n.total - 2.27e-5) > 1e-4)
    return fail_with("nnPU worked example: " + fmt(n.total, "%.6e"));
  return pass_with("1e4 batches; uPU " + fmt(u.total, "%.5f") + ", nnPU " +
                   fmt(n.total, "%.3e"));
}

// ---------------------------------------------------------------------------
// criterion 3: uPU unbiasedness on two-Gaussian data

Outcome criterion3() {
  Rng rng(1003, "acc3");
  auto model = oracle::random_model(rng, {2, 16, 1});
  const double mu = 1.5;
  const ClassPrior prior(0.5);

  auto sample_point = [&](bool positive, std::vector<double>& out) {
    out[0] = (positive ? mu : -mu) + rng.normal();
    out[1] = rng.normal();
  };
  auto score_of = [&](const std::vector<double>& x) {
    return forward(model, std::span<const double>(x));
  };

  // oracle-labeled supervised risk via Monte Carlo
  const int n_mc = 200000;
  double pos_loss = 0.0, neg_loss = 0.0;
  std::vector<double> x(2);
  for (int i = 0; i < n_mc; ++i) {
    sample_point(true, x);
    pos_loss += sigmoid_loss(score_of(x), +1);
    sample_point(false, x);
    neg_loss += sigmoid_loss(score_of(x), -1);
  }
  const double supervised =
      prior.pi_p * pos_loss / n_mc + prior.pi_n() * neg_loss / n_mc;

  // i.i.d. PU batches
  const int n_batches = 2000, np = 20, nu = 100;
  std::vector<double> totals;
  totals.reserve(n_batches);
  std::vector<double> zp(np), zu(nu);
  for (int b = 0; b < n_batches; ++b) {
    for (int i = 0; i < np; ++i) {
      sample_point(true, x);
      zp[static_cast<std::size_t>(i)] = score_of(x);
    }
    for (int i = 0; i < nu; ++i) {
      sample_point(rng.uniform01() < prior.pi_p, x);
      zu[static_cast<std::size_t>(i)] = score_of(x);
    }
    totals.push_back(upu_risk<double>(zp, zu, prior).total);
  }
  const double m = mean_of(totals);
  const double se = stddev_of(totals) / std::sqrt(double(n_batches));
  const double z = std::abs(m - supervised) / se;
  if (z >= 3.0)
    return fail_with("z-score " + fmt(z, "%.2f") + " (mean " +
                     fmt(m, "%.5f") + " vs supervised " +
                     fmt(supervised, "%.5f") + ")");
  return pass_with("mean " + fmt(m, "%.5f") + " vs supervised " +
                   fmt(supervised, "%.5f") + ", z=" + fmt(z, "%.2f"));
}

// ---------------------------------------------------------------------------
// criterion 4: meta-reweighting lookahead equals finite differences

Outcome criterion4() {
  int checked = 0;
  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(2000 + static_cast<std::uint64_t>(seed), "acc4");
    auto model = oracle::random_model(rng, {2, 4, 1});
    auto bu = oracle::random_inputs(rng, 8, 2);
    MetaValidationSet<double> val;
    val.x = oracle::random_inputs(rng, 8, 2);
    val.labels.resize(8);
    for (auto& l : val.labels) l = rng.uniform01() < 0.5 ? -1 : +1;
    ReweightConfig cfg;
    cfg.delta = 0.25;
    cfg.m = 8;
    const auto u = lookahead_weight_grad(model, bu, val, cfg);

    auto val_loss_with = [&](std::size_t i, std::size_t k, double w) {
      std::vector<double> xi(bu.row(i).begin(), bu.row(i).end());
      const double z = forward(model, std::span<const double>(xi));
      const double dz = k == 0 ? self_cross_entropy_dz(z)
                               : per_example_unlabeled_risk_dz(z,
                                                               ClassPrior(0.5));
      Gradients<double> g =
          backward(model, std::span<const double>(xi), dz);
      Mlp<double> stepped = model;
      for (std::size_t l = 0; l < stepped.layer_count(); ++l) {
        for (std::size_t j = 0; j < stepped.weights[l].data.size(); ++j)
          stepped.weights[l].data[j] -= cfg.delta * w * g.weights[l].data[j];
        for (std::size_t j = 0; j < stepped.biases[l].size(); ++j)
          stepped.biases[l][j] -= cfg.delta * w * g.biases[l][j];
      }
      double loss = 0.0;
      for (std::size_t j = 0; j < val.size(); ++j) {
        std::vector<double> xv(val.x.row(j).begin(), val.x.row(j).end());
        loss += cross_entropy(forward(stepped, std::span<const double>(xv)),
                              val.labels[j] > 0 ? 1.0 : 0.0);
      }
      return loss / static_cast<double>(val.size());
    };

    const double h = 1e-5;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t k = 0; k < 2; ++k) {
        const double fd =
            -(val_loss_with(i, k, +h) - val_loss_with(i, k, -h)) / (2 * h);
        const double rel =
            std::abs(u(i, k) - fd) / std::max(std::abs(fd), 1e-10);
        worst = std::max(worst, rel);
        ++checked;
      }
  }
  if (worst >= 1e-3)
    return fail_with("worst rel err " + fmt(worst, "%.3e"));
  return pass_with(std::to_string(checked) + " entries over 10 seeds, worst rel err " +
                   fmt(worst, "%.3e"));
}

// ---------------------------------------------------------------------------
// criterion 5: schedule/selection invariants as property tests

// independent re-implementation of one selection round: filter by the 0.5
// boundary, rank by probability with id tie-breaks, truncate to the smaller
// side. Ignores any previous set by construction.
struct OracleEntry {
  double prob;
  Polarity polarity;
};

std::map<std::int64_t, OracleEntry> oracle_select(
    const std::vector<std::int64_t>& ids, const std::vector<double>& probs,
    std::int64_t target) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < ids.size(); ++i)
    (probs[i] >= 0.5 ? pos : neg).push_back(i);
  std::sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return ids[a] < ids[b];
  });
  std::sort(neg.begin(), neg.end(), [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] < probs[b];
    return ids[a] < ids[b];
  });
  const std::size_t take =
      std::min({static_cast<std::size_t>(target / 2), pos.size(), neg.size()});
  std::map<std::int64_t, OracleEntry> out;
  for (std::size_t k = 0; k < take; ++k) {
    out[ids[pos[k]]] = {probs[pos[k]], Polarity::pos};
    out[ids[neg[k]]] = {probs[neg[k]], Polarity::neg};
  }
  return out;
}

Outcome criterion5(const std::string& workdir) {
  Rng rng(1005, "acc5");
  // balanced polarity, exact target, polarity boundary, frozen labels,
  // in-and-out re-selection: compare whole rounds against the oracle
  TrustedSet<double> previous;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 40 + static_cast<int>(rng.below(400));
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    std::vector<double> probs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
    for (auto& p : probs) p = rng.uniform01();
    PaceSchedule sched;
    sched.r_final = 0.05 + 0.4 * rng.uniform01();
    sched.epoch_start = 4;
    sched.epoch_end = 24;
    sched.warmup_epochs = 4;
    const int epoch = 4 + static_cast<int>(rng.below(21));
    // the previous trial's set is passed in and must be irrelevant
    auto sel = select_trusted<double>(ids, probs, sched, epoch,
                                      SelectionMode::in_and_out, &previous);
    if (sel.set.count(Polarity::pos) != sel.set.count(Polarity::neg))
      return fail_with("unbalanced polarity counts");
    if (!sel.capped &&
        static_cast<std::int64_t>(sel.set.size()) !=
            target_size(sched, epoch, n))
      return fail_with("trusted size != target size");
    const auto expected =
        oracle_select(ids, probs, target_size(sched, epoch, n));
    if (expected.size() != sel.set.size())
      return fail_with("selection differs from the oracle in size");
    for (const auto& [id, oe] : expected) {
      if (!sel.set.contains(id))
        return fail_with("oracle member " + std::to_string(id) + " missing");
      const auto& e = sel.set.entries.at(id);
      if (e.polarity != oe.polarity || e.soft_label_pos != oe.prob ||
          e.selected_at_epoch != epoch)
        return fail_with("entry mismatch against the oracle");
    }
    previous = sel.set;
  }

  // phase-boundary exactness through a short run's component metrics
  TrainerConfig cfg;
  cfg.dataset = "synth";
  cfg.synth_n = 600;
  cfg.synth_test_n = 200;
  cfg.synth_d = 2;
  cfg.synth_mu = 1.5;
  cfg.n_p = 30;
  cfg.pi_p = 0.5;
  cfg.holdout_per_class = 10;
  cfg.layer_dims = {2, 8, 1};
  cfg.batch_size = 32;
  cfg.total_epochs = 10;
  cfg.warmup_end = 3;
  cfg.selfpaced_end = 8;
  cfg.lr_max = 1e-2;
  cfg.seed = 17;
  cfg.out_dir = workdir + "/crit5";
  Trainer trainer(cfg);
  trainer.run();
  const auto lines = read_lines(cfg.out_dir + "/metrics.csv");
  if (lines.size() != 11) return fail_with("unexpected metrics row count");
  const std::int64_t n_u = 600 - 20 - 30;
  PaceSchedule pace1;
  pace1.r_final = cfg.pace1;
  pace1.epoch_start = 3;
  pace1.epoch_end = 8;
  pace1.warmup_epochs = 3;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    const int epoch = std::stoi(cells[0]);
    const double students = std::stod(cells[4]);
    const double teachers = std::stod(cells[5]);
    const long trusted1 = std::stol(cells[10]);
    if (epoch < 8 && (students != 0.0 || teachers != 0.0))
      return fail_with("consistency loss nonzero before the distill phase");
    if (epoch < 3 && trusted1 != 0)
      return fail_with("selection happened during warm-up");
    if (epoch >= 3 && epoch < 8) {
      const auto want = target_size(pace1, epoch, n_u);
      if (trusted1 != want)
        return fail_with("round at epoch " + std::to_string(epoch) +
                         " produced " + std::to_string(trusted1) +
                         " trusted, target " + std::to_string(want));
    }
  }
  return pass_with("300 oracle-checked rounds + phase boundaries exact");
}

// ---------------------------------------------------------------------------
// criteria 6 and 9: synthetic end-to-end and byte determinism

TrainerConfig synth_config(const std::string& out_dir, std::uint64_t seed) {
  TrainerConfig cfg;
  cfg.dataset = "synth";
  cfg.synth_n = 10000;
  cfg.synth_test_n = 10000;
  cfg.synth_d = 2;
  cfg.synth_mu = 1.5;
  cfg.n_p = 500;
  cfg.pi_p = 0.5;
  cfg.holdout_per_class = 250;
  cfg.layer_dims = {2, 32, 1};
  cfg.batch_size = 256;
  cfg.total_epochs = 60;
  cfg.warmup_end = 3;
  cfg.selfpaced_end = 15;
  cfg.lr_max = 1e-3;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.checkpoint_final = false;
  return cfg;
}

struct SynthResult {
  std::vector<double> nnpu, selfpu;
};

Outcome criterion6(const std::string& workdir, SynthResult& out) {
  const std::uint64_t base_seed = 101;
  for (int k = 0; k < 5; ++k) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(k);
    auto base = synth_config(workdir + "/c6_nnpu_" + std::to_string(seed), seed);
    base.warmup_end = 60;  // the whole run stays in the nnPU-only phase
    base.selfpaced_end = 61;
    out.nnpu.push_back(Trainer(base).run().test_accuracy);

    auto full = synth_config(workdir + "/c6_selfpu_" + std::to_string(seed), seed);
    out.selfpu.push_back(Trainer(full).run().test_accuracy);
  }
  const double nnpu_mean = mean_of(out.nnpu);
  const double nnpu_std = stddev_of(out.nnpu);
  const double selfpu_mean = mean_of(out.selfpu);
  const double selfpu_std = stddev_of(out.selfpu);
  const std::string detail =
      "nnPU " + fmt(nnpu_mean) + " (" + fmt(nnpu_std, "%.4f") + "), full pipeline " +
      fmt(selfpu_mean) + " (" + fmt(selfpu_std, "%.4f") + ")";
  if (nnpu_mean < 0.913)
    return fail_with(detail + "; nnPU baseline below 0.913");
  if (selfpu_mean < nnpu_mean - 0.005)
    return fail_with(detail + "; pipeline mean more than 0.005 below nnPU");
  if (selfpu_std > 1.5 * nnpu_std)
    return fail_with(detail + "; pipeline std above 1.5x the baseline");
  return pass_with(detail);
}

Outcome criterion9(const std::string& workdir) {
  const std::uint64_t seed = 101;
  auto rerun = synth_config(workdir + "/c9_rerun", seed);
  Trainer(rerun).run();
  const std::string a =
      read_bytes(workdir + "/c6_selfpu_" + std::to_string(seed) +
                 "/metrics.csv");
  const std::string b = read_bytes(workdir + "/c9_rerun/metrics.csv");
  if (a.empty() || a != b)
    return fail_with("metrics.csv bytes differ between identical runs");
  return pass_with("metrics.csv byte-identical across reruns (" +
                   std::to_string(a.size()) + " bytes)");
}

// ---------------------------------------------------------------------------
// criteria 7 and 8: MNIST reproduction and trusted-set quality (opt-in)

struct ExtendedOptions {
  bool enabled = false;
  bool ablation = false;
  std::string mnist_dir;
  std::string workdir;
  int seeds = 3;
  int epochs = 200;
};

TrainerConfig mnist_config(const ExtendedOptions& opt,
                           const std::string& out_dir, std::uint64_t seed) {
  TrainerConfig cfg;
  cfg.dataset = "mnist";
  cfg.data_dir = opt.mnist_dir;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.total_epochs = opt.epochs;
  cfg.checkpoint_final = false;
  cfg.parallel_students = true;
  return cfg;
}

double mean_trusted_accuracy(const std::string& metrics_path) {
  const auto lines = read_lines(metrics_path);
  double sum = 0.0;
  int rounds = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    if (std::stol(cells[10]) == 0) continue;
    const double a1 = std::stod(cells[12]);
    const double a2 = std::stod(cells[13]);
    if (std::isnan(a1) || std::isnan(a2)) continue;
    sum += 0.5 * (a1 + a2);
    ++rounds;
  }
  return rounds ? sum / rounds : 0.0;
}

Outcome criterion7(const ExtendedOptions& opt, std::vector<std::string>&
                   selfpu_dirs) {
  if (!opt.enabled)
    return skip_with("extended MNIST run; enable with --extended --mnist-dir=PATH");
  std::vector<double> nnpu, selfpu;
  for (int k = 0; k < opt.seeds; ++k) {
    const std::uint64_t seed = 301 + static_cast<std::uint64_t>(k);
    auto base = mnist_config(opt, opt.workdir + "/c7_nnpu_" +
                             std::to_string(seed), seed);
    base.warmup_end = opt.epochs;
    base.selfpaced_end = opt.epochs + 1;
    nnpu.push_back(Trainer(base).run().test_accuracy);
    std::printf("  [extended] nnPU seed %llu: %.4f\n",
                static_cast<unsigned long long>(seed), nnpu.back());

    auto full = mnist_config(opt, opt.workdir + "/c7_selfpu_" +
                             std::to_string(seed), seed);
    full.audit_trusted = true;
    selfpu.push_back(Trainer(full).run().test_accuracy);
    selfpu_dirs.push_back(full.out_dir);
    std::printf("  [extended] pipeline seed %llu: %.4f\n",
                static_cast<unsigned long long>(seed), selfpu.back());
  }
  const double nnpu_mean = mean_of(nnpu);
  const double selfpu_mean = mean_of(selfpu);
  const std::string detail =
      "nnPU " + fmt(nnpu_mean) + " (" + fmt(stddev_of(nnpu), "%.4f") +
      "), full pipeline " + fmt(selfpu_mean) + " (" + fmt(stddev_of(selfpu), "%.4f") +
      ")";
  if (nnpu_mean < 0.925) return fail_with(detail + "; nnPU below 0.925");
  if (selfpu_mean <= nnpu_mean)
    return fail_with(detail + "; pipeline did not beat the nnPU baseline");
  if (selfpu_mean < 0.935) return fail_with(detail + "; pipeline below 0.935");
  return pass_with(detail);
}

Outcome criterion8(const ExtendedOptions& opt,
                   const std::vector<std::string>& selfpu_dirs) {
  if (!opt.enabled)
    return skip_with("extended MNIST run; enable with --extended --mnist-dir=PATH");

  // trusted-set accuracy must beat the model's D_U accuracy at every round
  // after epoch 15
  for (const auto& dir : selfpu_dirs) {
    const auto metrics = read_lines(dir + "/metrics.csv");
    for (int which = 1; which <= 2; ++which) {
      const auto u_rows = read_lines(dir + "/u_audit" + std::to_string(which) +
                                     ".csv");
      for (std::size_t i = 1; i < u_rows.size(); ++i) {
        const auto ucells = split_csv(u_rows[i]);
        const int epoch = std::stoi(ucells[0]);
        if (epoch <= 15) continue;
        const double u_acc = std::stod(ucells[1]);
        const auto mcells = split_csv(metrics[static_cast<std::size_t>(epoch) + 1]);
        const double t_acc = std::stod(mcells[which == 1 ? 12 : 13]);
        if (!(t_acc > u_acc))
          return fail_with(dir + ": trusted accuracy " + fmt(t_acc) +
                           " <= pool accuracy " + fmt(u_acc) + " at epoch " +
                           std::to_string(epoch));
      }
    }
  }
  if (!opt.ablation)
    return pass_with("trusted-set accuracy beats the pool at every round "
                     "(ablation modes skipped; pass --extended-ablation)");

  double default_mean = 0.0;
  for (const auto& dir : selfpu_dirs)
    default_mean += mean_trusted_accuracy(dir + "/metrics.csv");
  default_mean /= static_cast<double>(selfpu_dirs.size());

  for (const std::string mode : {"fixed_size", "no_replacement"}) {
    double mode_mean = 0.0;
    for (int k = 0; k < opt.seeds; ++k) {
      const std::uint64_t seed = 301 + static_cast<std::uint64_t>(k);
      auto cfg = mnist_config(opt, opt.workdir + "/c8_" + mode + "_" +
                              std::to_string(seed), seed);
      cfg.selection_mode = mode;
      cfg.audit_trusted = true;
      Trainer(cfg).run();
      mode_mean += mean_trusted_accuracy(cfg.out_dir + "/metrics.csv");
    }
    mode_mean /= static_cast<double>(opt.seeds);
    if (!(mode_mean < default_mean))
      return fail_with(mode + " mean trusted accuracy " + fmt(mode_mean) +
                       " not below default " + fmt(default_mean));
  }
  return pass_with("quality ordering holds; both ablation modes are lower");
}

}  // namespace

int main(int argc, char** argv) {
  ExtendedOptions ext;
  std::string workdir =
      (fs::temp_directory_path() /
       ("selfpu_acceptance_" + std::to_string(::getpid()))).string();
  bool keep = false;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--extended") ext.enabled = true;
    else if (arg == "--extended-ablation") ext.ablation = true;
    else if (arg.rfind("--mnist-dir=", 0) == 0) ext.mnist_dir = arg.substr(12);
    else if (arg.rfind("--workdir=", 0) == 0) workdir = arg.substr(10);
    else if (arg.rfind("--extended-epochs=", 0) == 0)
      ext.epochs = std::stoi(arg.substr(18));
    else if (arg.rfind("--extended-seeds=", 0) == 0)
      ext.seeds = std::stoi(arg.substr(17));
    else if (arg == "--keep") keep = true;
    else {
      std::fprintf(stderr, "unknown argument: %s\n", arg.c_str());
      return 2;
    }
  }
  if (ext.enabled && ext.mnist_dir.empty()) {
    std::fprintf(stderr, "--extended requires --mnist-dir=PATH\n");
    return 2;
  }
  ext.workdir = workdir;
  fs::create_directories(workdir);

  int failures = 0;
  SynthResult synth;
  std::vector<std::string> selfpu_dirs;
  const struct {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  } criteria[] = {
      {1, "gradient oracle suite", [&] { return criterion1(); }},
      {2, "risk-estimator properties", [&] { return criterion2(); }},
      {3, "uPU unbiasedness", [&] { return criterion3(); }},
      {4, "meta-reweighting equivalence", [&] { return criterion4(); }},
      {5, "schedule/selection invariants",
       [&] { return criterion5(workdir); }},
      {6, "synthetic end-to-end", [&] { return criterion6(workdir, synth); }},
      {7, "MNIST reproduction (extended)",
       [&] { return criterion7(ext, selfpu_dirs); }},
      {8, "trusted-set quality (extended)",
       [&] { return criterion8(ext, selfpu_dirs); }},
      {9, "determinism", [&] { return criterion9(workdir); }},
  };

  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = fail_with(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    const char* verdict = out.skipped ? "SKIP" : (out.pass ? "PASS" : "FAIL");
    std::printf("%s criterion %d: %s [%s] (%.1fs)\n", verdict, c.id, c.name,
                out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass && !out.skipped) ++failures;
  }

  if (!keep) {
    std::error_code ec;
    fs::remove_all(workdir, ec);
  }
  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all runnable criteria passed\n");
  return 0;
}
