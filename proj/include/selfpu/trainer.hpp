// trainer.hpp -- the training harness: phase scheduling (warm-up ->
// self-paced+reweight -> distillation), deterministic batching, metrics,
// checkpoints, and evaluation. Reference mode is single-threaded and byte
// deterministic; the optional parallel mode evaluates the two students on
// separate threads between barriers without changing any result.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "selfpu/checkpoint.hpp"
#include "selfpu/config.hpp"
#include "selfpu/data.hpp"
#include "selfpu/distill.hpp"
#include "selfpu/errors.hpp"
#include "selfpu/losses.hpp"
#include "selfpu/mlp.hpp"
#include "selfpu/reweight.hpp"
#include "selfpu/rng.hpp"
#include "selfpu/selfpaced.hpp"

namespace selfpu {

using Real = float;

// fraction of test examples whose score sign matches the label
template <class T>
double evaluate(const Mlp<T>& model, const LabeledSet<T>& test_set) {
  if (test_set.size() == 0)
    throw BatchCompositionError("evaluate: test set has no labels");
  return binary_accuracy(model, test_set.x,
                         std::span<const std::int8_t>(test_set.labels));
}

struct TrainResult {
  std::string final_model;  // student1|student2|teacher1|teacher2
  double test_accuracy = 0.0;
  double val_accuracy = 0.0;
  int epochs_run = 0;
  std::string metrics_path;
  std::string checkpoint_path;
};

namespace detail {
inline std::string fmt_acc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}
inline std::string fmt_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9e", v);
  return buf;
}
}  // namespace detail

class Trainer {
 public:
  explicit Trainer(TrainerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    setup_data();
    mining_.alpha = cfg_.alpha;
    mining_.validate();
  }

  TrainResult run(const std::string& resume_path = "") {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);

    const auto dims = cfg_.resolved_layer_dims();
    if (dims.front() != train_.features.cols)
      throw ConfigError("layer_dims[0]=" + std::to_string(dims.front()) +
                        " does not match feature width " +
                        std::to_string(train_.features.cols));

    int start_epoch = 0;
    if (resume_path.empty()) {
      pair_.student1 = Mlp<Real>(dims);
      pair_.student2 = Mlp<Real>(dims);
      Rng r1(cfg_.seed, "init_s1"), r2(cfg_.seed, "init_s2");
      init_weights(pair_.student1, r1);
      init_weights(pair_.student2, r2);
      pair_.opt1 = make_adam(pair_.student1);
      pair_.opt2 = make_adam(pair_.student2);
      pair_.trusted1 = {};
      pair_.trusted2 = {};
      teacher1_ = make_teacher();
      teacher2_ = make_teacher();
    } else {
      Checkpoint c = load_checkpoint(resume_path);
      if (c.seed != cfg_.seed)
        throw ConfigError("resume: checkpoint seed " + std::to_string(c.seed) +
                          " does not match config seed " +
                          std::to_string(cfg_.seed));
      if (c.student1.layer_dims != dims)
        throw ConfigError("resume: checkpoint architecture mismatch");
      pair_.student1 = std::move(c.student1);
      pair_.student2 = std::move(c.student2);
      pair_.opt1 = std::move(c.opt1);
      pair_.opt2 = std::move(c.opt2);
      pair_.trusted1 = std::move(c.trusted1);
      pair_.trusted2 = std::move(c.trusted2);
      teacher1_ = std::move(c.teacher1);
      teacher2_ = std::move(c.teacher2);
      start_epoch = c.epochs_completed;
    }
    pair_.pace1 = make_pace(cfg_.pace1);
    pair_.pace2 = make_pace(cfg_.pace2);

    save_manifest(train_.manifest, cfg_.out_dir + "/manifest.txt");

    const std::string metrics_path = cfg_.out_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw IoError("cannot write " + metrics_path);
    metrics << "epoch,phase,loss_total,loss_sp,loss_students,loss_teachers,"
               "val_acc_s1,val_acc_s2,val_acc_t1,val_acc_t2,"
               "trusted1,trusted2,trusted_acc1,trusted_acc2,lr\n";
    std::ofstream timing(cfg_.out_dir + "/timing.csv");
    timing << "epoch,seconds\n";

    std::ofstream audit1, audit2, waudit1, waudit2, uaudit1, uaudit2;
    if (cfg_.audit_trusted) {
      audit1.open(cfg_.out_dir + "/trusted_audit1.csv");
      audit2.open(cfg_.out_dir + "/trusted_audit2.csv");
      audit1 << "epoch,id,polarity,soft_label_pos,oracle_label\n";
      audit2 << "epoch,id,polarity,soft_label_pos,oracle_label\n";
      uaudit1.open(cfg_.out_dir + "/u_audit1.csv");
      uaudit2.open(cfg_.out_dir + "/u_audit2.csv");
      uaudit1 << "epoch,u_accuracy\n";
      uaudit2 << "epoch,u_accuracy\n";
    }
    if (cfg_.audit_weights) {
      waudit1.open(cfg_.out_dir + "/weight_audit1.csv");
      waudit2.open(cfg_.out_dir + "/weight_audit2.csv");
      waudit1 << "epoch,batch,kept_ce,ce_mass\n";
      waudit2 << "epoch,batch,kept_ce,ce_mass\n";
    }

    refresh_bootstrap_val();

    const LrSchedule lr_sched{cfg_.lr_max, cfg_.lr_min, cfg_.total_epochs};
    const int end_epoch =
        cfg_.halt_after > 0 ? std::min(cfg_.total_epochs, cfg_.halt_after)
                            : cfg_.total_epochs;

    BatchIterator u_iter(cfg_.seed, "ubatch",
                         static_cast<std::int64_t>(u_ids_.size()),
                         u_per_batch_);
    CyclingSampler p_iter(cfg_.seed, "ppool", p_ids_);

    int epoch = start_epoch;
    for (; epoch < end_epoch; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      const double lr = cosine_lr(lr_sched, epoch);
      const Phase phase = phase_of(epoch);

      if (phase == Phase::distill && !teacher1_.initialized) {
        teacher_update(teacher1_, pair_.student1);
        teacher_update(teacher2_, pair_.student2);
      }

      u_iter.start_epoch(static_cast<std::uint64_t>(epoch));
      p_iter.start_epoch(static_cast<std::uint64_t>(epoch));

      double sum_total = 0.0, sum_sp = 0.0, sum_students = 0.0,
             sum_teachers = 0.0;
      std::size_t n_batches = 0;
      std::vector<std::int64_t> u_rows, bp_ids, bu_ids;
      while (u_iter.next(u_rows)) {
        bu_ids.clear();
        for (std::int64_t r : u_rows)
          bu_ids.push_back(u_ids_[static_cast<std::size_t>(r)]);
        p_iter.draw(p_per_batch_, bp_ids);
        const std::size_t bi = n_batches;

        StageA a1, a2;
        auto run_student = [&](int which, StageA& a) {
          const Mlp<Real>& model =
              which == 1 ? pair_.student1 : pair_.student2;
          const TrustedSet<Real>& trusted =
              which == 1 ? pair_.trusted1 : pair_.trusted2;
          stage_a(model, trusted, bp_ids, bu_ids, phase, epoch, bi, lr, a);
        };
        if (cfg_.parallel_students) {
          std::thread th1(run_student, 1, std::ref(a1));
          std::thread th2(run_student, 2, std::ref(a2));
          th1.join();
          th2.join();
        } else {
          run_student(1, a1);
          run_student(2, a2);
        }

        double students_v = 0.0, teachers_v = 0.0;
        if (phase == Phase::distill) {
          Matrix<Real> full_x;
          std::vector<std::int64_t> full_ids = bp_ids;
          full_ids.insert(full_ids.end(), bu_ids.begin(), bu_ids.end());
          train_.gather(full_ids, full_x);
          std::vector<std::uint8_t> m1(full_ids.size(), 0),
              m2(full_ids.size(), 0);
          for (std::size_t i = bp_ids.size(); i < full_ids.size(); ++i) {
            m1[i] = pair_.trusted1.contains(full_ids[i]) ? 1 : 0;
            m2[i] = pair_.trusted2.contains(full_ids[i]) ? 1 : 0;
          }
          if (cfg_.distill_students) {
            auto sc = student_consistency(pair_.student1, pair_.student2,
                                          full_x, m1, m2, mining_, prior());
            students_v = sc.value;
            a1.grads.add_scaled(sc.grads1, Real{1});
            a2.grads.add_scaled(sc.grads2, Real{1});
          }
          if (cfg_.distill_teachers) {
            auto tc1 = teacher_consistency(teacher1_.theta_bar,
                                           pair_.student1, full_x);
            auto tc2 = teacher_consistency(teacher2_.theta_bar,
                                           pair_.student2, full_x);
            teachers_v = tc1.value + tc2.value;
            a1.grads.add_scaled(tc1.student_grads, Real{1});
            a2.grads.add_scaled(tc2.student_grads, Real{1});
          }
        }

        const double sp_v = a1.sp_value + a1.rw_value + a2.sp_value +
                            a2.rw_value;
        const double total_v = sp_v + students_v + teachers_v;
        if (!std::isfinite(total_v)) {
          const std::string diag = cfg_.out_dir + "/diagnostic.ckpt";
          save_current_checkpoint(epoch, diag);
          throw NumericError("non-finite loss at epoch " +
                             std::to_string(epoch) + " batch " +
                             std::to_string(bi) +
                             "; diagnostic checkpoint written to " + diag);
        }
        sum_sp += sp_v;
        sum_students += students_v;
        sum_teachers += teachers_v;
        sum_total += total_v;
        ++n_batches;

        adam_step(pair_.student1, a1.grads, pair_.opt1,
                  static_cast<Real>(lr));
        adam_step(pair_.student2, a2.grads, pair_.opt2,
                  static_cast<Real>(lr));

        if (phase == Phase::distill && cfg_.teacher_cadence == "per_step") {
          teacher_update(teacher1_, pair_.student1);
          teacher_update(teacher2_, pair_.student2);
        }

        if (cfg_.audit_weights && phase != Phase::warmup) {
          waudit1 << epoch << ',' << bi << ',' << a1.kept_ce << ','
                  << detail::fmt_loss(a1.ce_mass) << "\n";
          waudit2 << epoch << ',' << bi << ',' << a2.kept_ce << ','
                  << detail::fmt_loss(a2.ce_mass) << "\n";
        }
      }

      if (phase == Phase::selfpaced) {
        run_selection(epoch, pair_.pace1, pair_.trusted1, 1,
                      cfg_.audit_trusted ? &audit1 : nullptr,
                      cfg_.audit_trusted ? &uaudit1 : nullptr);
        run_selection(epoch, pair_.pace2, pair_.trusted2, 2,
                      cfg_.audit_trusted ? &audit2 : nullptr,
                      cfg_.audit_trusted ? &uaudit2 : nullptr);
        if (cfg_.meta_mode == "trusted_bootstrap") refresh_bootstrap_val();
      }

      if (phase == Phase::distill && cfg_.teacher_cadence == "per_epoch") {
        teacher_update(teacher1_, pair_.student1);
        teacher_update(teacher2_, pair_.student2);
      }

      const double inv_b = n_batches ? 1.0 / static_cast<double>(n_batches)
                                     : 0.0;
      metrics << epoch << ',' << phase_name(phase) << ','
              << detail::fmt_loss(sum_total * inv_b) << ','
              << detail::fmt_loss(sum_sp * inv_b) << ','
              << detail::fmt_loss(sum_students * inv_b) << ','
              << detail::fmt_loss(sum_teachers * inv_b) << ','
              << detail::fmt_acc(maybe_val_acc(pair_.student1)) << ','
              << detail::fmt_acc(maybe_val_acc(pair_.student2)) << ','
              << detail::fmt_acc(teacher1_.initialized
                                     ? maybe_val_acc(teacher1_.theta_bar)
                                     : std::numeric_limits<double>::quiet_NaN())
              << ','
              << detail::fmt_acc(teacher2_.initialized
                                     ? maybe_val_acc(teacher2_.theta_bar)
                                     : std::numeric_limits<double>::quiet_NaN())
              << ',' << pair_.trusted1.size() << ',' << pair_.trusted2.size()
              << ',' << detail::fmt_acc(trusted_accuracy(pair_.trusted1))
              << ',' << detail::fmt_acc(trusted_accuracy(pair_.trusted2))
              << ',' << detail::fmt_loss(lr) << "\n";
      metrics.flush();
      const auto t1 = std::chrono::steady_clock::now();
      const double secs =
          std::chrono::duration<double>(t1 - t0).count();
      char tbuf[48];
      std::snprintf(tbuf, sizeof(tbuf), "%d,%.3f\n", epoch, secs);
      timing << tbuf;
      timing.flush();
    }

    TrainResult result;
    result.epochs_run = epoch - start_epoch;
    result.metrics_path = metrics_path;
    if (cfg_.checkpoint_final) {
      result.checkpoint_path = cfg_.out_dir + "/final.ckpt";
      save_current_checkpoint(epoch, result.checkpoint_path);
    }
    pick_final(result);
    write_summary(result, epoch);
    return result;
  }

  // ---- accessors used by evaluation paths and tests ----
  const PuDataset<Real>& train_data() const { return train_; }
  const LabeledSet<Real>& test_data() const { return test_; }
  const LabeledSet<Real>& holdout_data() const { return holdout_; }
  const StudentPair<Real>& students() const { return pair_; }
  const TeacherState<Real>& teacher(int i) const {
    return i == 1 ? teacher1_ : teacher2_;
  }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct StageA {
    Gradients<Real> grads;
    double sp_value = 0.0;
    double rw_value = 0.0;
    RiskBreakdown<Real> risk;
    int kept_ce = 0;
    double ce_mass = 0.0;
  };

  ClassPrior prior() const { return train_.prior; }

  AdamState<Real> make_adam(const Mlp<Real>& m) const {
    return AdamState<Real>(m, static_cast<Real>(cfg_.adam_beta1),
                           static_cast<Real>(cfg_.adam_beta2),
                           static_cast<Real>(cfg_.adam_eps));
  }

  TeacherState<Real> make_teacher() const {
    TeacherState<Real> t;
    t.beta = static_cast<Real>(cfg_.beta);
    t.mode = cfg_.teacher_mode_enum();
    return t;
  }

  PaceSchedule make_pace(double r) const {
    PaceSchedule p;
    p.r_final = r;
    p.epoch_start = cfg_.warmup_end;
    p.epoch_end = cfg_.selfpaced_end;
    p.warmup_epochs = cfg_.warmup_end;
    p.validate();
    return p;
  }

  Phase phase_of(int epoch) const {
    if (epoch < cfg_.warmup_end) return Phase::warmup;
    if (epoch < cfg_.selfpaced_end) return Phase::selfpaced;
    return Phase::distill;
  }

  static const char* phase_name(Phase p) {
    switch (p) {
      case Phase::warmup: return "warmup";
      case Phase::selfpaced: return "selfpaced";
      default: return "distill";
    }
  }

  void setup_data() {
    if (cfg_.dataset == "synth") {
      RawDataset<Real> raw_train, raw_test;
      if (!cfg_.data_dir.empty()) {
        LabeledSet<Real> tr =
            load_labeled_set<Real>(cfg_.data_dir + "/train.bin");
        LabeledSet<Real> te =
            load_labeled_set<Real>(cfg_.data_dir + "/test.bin");
        raw_train.features = std::move(tr.x);
        raw_train.labels.assign(tr.labels.begin(), tr.labels.end());
        raw_test.features = std::move(te.x);
        raw_test.labels.assign(te.labels.begin(), te.labels.end());
      } else {
        raw_train = gen_two_gaussians<Real>(cfg_.synth_n, cfg_.synth_d,
                                            cfg_.synth_mu, cfg_.pi_p,
                                            cfg_.seed, "gauss_train");
        raw_test = gen_two_gaussians<Real>(cfg_.synth_test_n, cfg_.synth_d,
                                           cfg_.synth_mu, cfg_.pi_p,
                                           cfg_.seed, "gauss_test");
      }
      auto split = make_pu_split(raw_train, "identity", cfg_.n_p, cfg_.pi_p,
                                 cfg_.seed, cfg_.holdout_per_class,
                                 cfg_.u_includes_positives);
      train_ = std::move(split.train);
      holdout_ = std::move(split.holdout);
      for (auto& w : split.warnings) warn(w);
      train_.manifest.dataset = "synth";
      test_.x = std::move(raw_test.features);
      test_.labels.resize(raw_test.labels.size());
      for (std::size_t i = 0; i < raw_test.labels.size(); ++i)
        test_.labels[i] = static_cast<std::int8_t>(
            apply_positive_rule("identity", raw_test.labels[i]));
    } else {
      RawDataset<Real> raw_train = load_mnist_idx<Real>(
          cfg_.data_dir + "/train-images-idx3-ubyte",
          cfg_.data_dir + "/train-labels-idx1-ubyte");
      RawDataset<Real> raw_test = load_mnist_idx<Real>(
          cfg_.data_dir + "/t10k-images-idx3-ubyte",
          cfg_.data_dir + "/t10k-labels-idx1-ubyte");
      auto split = make_pu_split(raw_train, "odd_even", cfg_.n_p, cfg_.pi_p,
                                 cfg_.seed, cfg_.holdout_per_class,
                                 cfg_.u_includes_positives);
      train_ = std::move(split.train);
      holdout_ = std::move(split.holdout);
      for (auto& w : split.warnings) warn(w);
      train_.manifest.dataset = "mnist";
      test_.x = std::move(raw_test.features);
      test_.labels.resize(raw_test.labels.size());
      for (std::size_t i = 0; i < raw_test.labels.size(); ++i)
        test_.labels[i] = static_cast<std::int8_t>(
            apply_positive_rule("odd_even", raw_test.labels[i]));
    }

    p_ids_ = train_.ids_of(PuLabel::P);
    u_ids_ = train_.ids_of(PuLabel::U);
    if (p_ids_.empty() || u_ids_.empty())
      throw ConfigError("degenerate PU split: empty P or U pool");

    const double frac = static_cast<double>(p_ids_.size()) /
                        static_cast<double>(p_ids_.size() + u_ids_.size());
    auto p_n = static_cast<std::size_t>(
        std::llround(frac * static_cast<double>(cfg_.batch_size)));
    p_n = std::max<std::size_t>(1, std::min(p_n, cfg_.batch_size - 1));
    p_per_batch_ = p_n;
    u_per_batch_ = cfg_.batch_size - p_n;

    if (cfg_.meta_mode == "oracle_holdout") {
      val_active_ = holdout_;
    }
  }

  void warn(const std::string& msg) {
    warnings_.push_back(msg);
    std::cerr << "[selfpu] warning: " << msg << "\n";
  }

  // probabilities over arbitrary ids, forwarded in fixed-size chunks
  std::vector<Real> pool_probabilities(const Mlp<Real>& model,
                                       const std::vector<std::int64_t>& ids) {
    std::vector<Real> probs(ids.size());
    const std::size_t chunk = 2048;
    Matrix<Real> x;
    ForwardCache<Real> cache;
    std::vector<Real> scores;
    for (std::size_t at = 0; at < ids.size(); at += chunk) {
      const std::size_t take = std::min(chunk, ids.size() - at);
      std::span<const std::int64_t> part(ids.data() + at, take);
      train_.gather(part, x);
      forward_batch(model, x, cache, scores);
      for (std::size_t i = 0; i < take; ++i)
        probs[at + i] = logistic(scores[i]);
    }
    return probs;
  }

  void run_selection(int epoch, const PaceSchedule& pace,
                     TrustedSet<Real>& trusted, int which,
                     std::ofstream* audit, std::ofstream* u_audit = nullptr) {
    const Mlp<Real>& model =
        which == 1 ? pair_.student1 : pair_.student2;
    const std::vector<Real> probs = pool_probabilities(model, u_ids_);
    if (u_audit && train_.has_oracle()) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < u_ids_.size(); ++i) {
        const int pred = probs[i] >= Real{0.5} ? +1 : -1;
        if (pred == train_.oracle[static_cast<std::size_t>(u_ids_[i])]) ++hits;
      }
      *u_audit << epoch << ','
               << detail::fmt_acc(static_cast<double>(hits) /
                                  static_cast<double>(u_ids_.size()))
               << "\n";
      u_audit->flush();
    }
    const SelectionMode mode = cfg_.selection_mode_enum();
    const TrustedSet<Real>* prev =
        mode == SelectionMode::no_replacement ? &trusted : nullptr;
    auto sel = select_trusted<Real>(u_ids_, std::span<const Real>(probs),
                                    pace, epoch, mode, prev);
    if (sel.capped)
      warn("selection round at epoch " + std::to_string(epoch) + " student " +
           std::to_string(which) + " capped below target " +
           std::to_string(sel.requested));
    trusted = std::move(sel.set);
    if (audit) {
      for (const auto& [id, e] : trusted.sorted_entries()) {
        *audit << epoch << ',' << id << ','
               << (e.polarity == Polarity::pos ? "pos" : "neg") << ','
               << detail::fmt_acc(e.soft_label_pos) << ',';
        if (train_.has_oracle())
          *audit << int(train_.oracle[static_cast<std::size_t>(id)]);
        *audit << "\n";
      }
      audit->flush();
    }
  }

  // positives from D_P plus the most confident trusted negatives, used as
  // the clean batch in strict-PU operation
  void refresh_bootstrap_val() {
    if (cfg_.meta_mode != "trusted_bootstrap") return;
    std::vector<std::pair<Real, std::int64_t>> negs;  // (soft_pos, id)
    auto collect = [&](const TrustedSet<Real>& t) {
      for (const auto& [id, e] : t.entries)
        if (e.polarity == Polarity::neg) negs.emplace_back(e.soft_label_pos, id);
    };
    collect(pair_.trusted1);
    collect(pair_.trusted2);
    std::sort(negs.begin(), negs.end());
    negs.erase(std::unique(negs.begin(), negs.end(),
                           [](const auto& a, const auto& b) {
                             return a.second == b.second;
                           }),
               negs.end());
    const std::size_t n_neg =
        std::min(negs.size(), p_ids_.size());
    std::vector<std::int64_t> ids = p_ids_;
    std::vector<std::int8_t> labels(ids.size(), +1);
    for (std::size_t i = 0; i < n_neg; ++i) {
      ids.push_back(negs[i].second);
      labels.push_back(-1);
    }
    train_.gather(ids, val_active_.x);
    val_active_.labels = std::move(labels);
  }

  double maybe_val_acc(const Mlp<Real>& model) {
    if (val_active_.size() == 0)
      return std::numeric_limits<double>::quiet_NaN();
    return binary_accuracy(model, val_active_.x,
                           std::span<const std::int8_t>(val_active_.labels));
  }

  double trusted_accuracy(const TrustedSet<Real>& t) const {
    if (t.size() == 0 || !train_.has_oracle())
      return std::numeric_limits<double>::quiet_NaN();
    std::size_t hits = 0;
    for (const auto& [id, e] : t.entries) {
      const int pred = e.polarity == Polarity::pos ? +1 : -1;
      if (pred == train_.oracle[static_cast<std::size_t>(id)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(t.size());
  }

  // per-student, parallel-safe part of one batch: partition, meta weights,
  // hybrid loss, reweighted loss
  void stage_a(const Mlp<Real>& model, const TrustedSet<Real>& trusted,
               const std::vector<std::int64_t>& bp_ids,
               const std::vector<std::int64_t>& bu_ids, Phase phase, int epoch,
               std::size_t batch_idx, double lr, StageA& out) {
    out.grads = Gradients<Real>(model);

    std::vector<std::int64_t> t_ids, r_ids;
    for (std::int64_t id : bu_ids)
      (trusted.contains(id) ? t_ids : r_ids).push_back(id);

    Matrix<Real> t_x, r_x, p_x;
    train_.gather(t_ids, t_x);
    train_.gather(r_ids, r_x);
    train_.gather(bp_ids, p_x);

    BatchWeights<Real> weights;
    bool have_weights = false;
    if (phase != Phase::warmup && !r_ids.empty()) {
      const double delta = cfg_.delta > 0.0 ? cfg_.delta : lr;
      if (cfg_.gamma > 0.0 && delta > 0.0 && val_active_.size() > 0) {
        ReweightConfig rc;
        rc.delta = delta;
        rc.gamma = cfg_.gamma;
        rc.m = std::min<std::size_t>(cfg_.batch_size, val_active_.size());
        MetaValidationSet<Real> vb = sample_val_batch(rc.m, epoch, batch_idx);
        Matrix<Real> u = lookahead_weight_grad(model, r_x, vb, rc);
        weights = normalize_and_cap(u, rc);
      } else {
        // reweighting disabled: every example keeps the pure surrogate
        weights.w.resize(r_ids.size(), 2);
        weights.capped.assign(r_ids.size(), 1);
        for (std::size_t i = 0; i < r_ids.size(); ++i) weights.w(i, 1) = 1;
      }
      have_weights = true;
      for (std::size_t i = 0; i < r_ids.size(); ++i) {
        if (!weights.capped[i]) ++out.kept_ce;
        out.ce_mass += weights.w(i, 0);
      }
    }

    auto sp = sp_loss(model, trusted, t_ids, t_x, p_x, r_ids, r_x, prior(),
                      cfg_.clamp_policy_enum());
    out.sp_value = sp.value;
    out.risk = sp.risk;
    out.grads.add_scaled(sp.grads, Real{1});

    if (have_weights) {
      auto rw = reweighted_loss(model, r_x, weights, prior());
      out.rw_value = rw.value;
      out.grads.add_scaled(rw.grads, Real{1});
    }
  }

  MetaValidationSet<Real> sample_val_batch(std::size_t m, int epoch,
                                           std::size_t batch_idx) {
    MetaValidationSet<Real> vb;
    vb.source = cfg_.meta_mode_enum();
    const auto order = keyed_permutation(
        cfg_.seed, "metaval", static_cast<std::uint64_t>(epoch),
        static_cast<std::int64_t>(val_active_.size()), batch_idx);
    vb.x.resize(m, val_active_.x.cols);
    vb.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto src = static_cast<std::size_t>(order[i]);
      std::copy(val_active_.x.data.data() + src * val_active_.x.cols,
                val_active_.x.data.data() + (src + 1) * val_active_.x.cols,
                vb.x.data.data() + i * vb.x.cols);
      vb.labels[i] = val_active_.labels[src];
    }
    return vb;
  }

  void save_current_checkpoint(int epochs_completed, const std::string& path) {
    Checkpoint c;
    c.epochs_completed = epochs_completed;
    c.seed = cfg_.seed;
    c.student1 = pair_.student1;
    c.student2 = pair_.student2;
    c.opt1 = pair_.opt1;
    c.opt2 = pair_.opt2;
    c.teacher1 = teacher1_;
    c.teacher2 = teacher2_;
    c.trusted1 = pair_.trusted1;
    c.trusted2 = pair_.trusted2;
    save_checkpoint(c, path);
  }

  void pick_final(TrainResult& result) {
    if (teacher1_.initialized && teacher2_.initialized) {
      if (val_active_.size() > 0) {
        double a1 = 0, a2 = 0;
        const int idx = pick_final_model(
            teacher1_, teacher2_, val_active_.x,
            std::span<const std::int8_t>(val_active_.labels), &a1, &a2);
        result.final_model = idx == 0 ? "teacher1" : "teacher2";
        result.val_accuracy = idx == 0 ? a1 : a2;
        result.test_accuracy =
            evaluate(idx == 0 ? teacher1_.theta_bar : teacher2_.theta_bar,
                     test_);
      } else {
        warn("no validation set available; defaulting to teacher1");
        result.final_model = "teacher1";
        result.test_accuracy = evaluate(teacher1_.theta_bar, test_);
      }
      return;
    }
    if (phase_of(std::max(0, cfg_.total_epochs - 1)) != Phase::warmup &&
        val_active_.size() > 0) {
      const double a1 = maybe_val_acc(pair_.student1);
      const double a2 = maybe_val_acc(pair_.student2);
      const int idx = a2 > a1 ? 2 : 1;
      result.final_model = idx == 1 ? "student1" : "student2";
      result.val_accuracy = idx == 1 ? a1 : a2;
      result.test_accuracy =
          evaluate(idx == 1 ? pair_.student1 : pair_.student2, test_);
      return;
    }
    result.final_model = "student1";
    result.val_accuracy = maybe_val_acc(pair_.student1);
    result.test_accuracy = evaluate(pair_.student1, test_);
  }

  void write_summary(const TrainResult& r, int epochs_completed) {
    save_kv_file(cfg_.out_dir + "/summary.txt",
                 {
                     {"final_model", r.final_model},
                     {"test_accuracy", detail::fmt_acc(r.test_accuracy)},
                     {"val_accuracy", detail::fmt_acc(r.val_accuracy)},
                     {"epochs_completed", std::to_string(epochs_completed)},
                     {"seed", std::to_string(cfg_.seed)},
                     {"model_selection", "meta_validation_set"},
                 });
  }

  TrainerConfig cfg_;
  PuDataset<Real> train_;
  LabeledSet<Real> test_;
  LabeledSet<Real> holdout_;
  LabeledSet<Real> val_active_;
  std::vector<std::int64_t> p_ids_, u_ids_;
  std::size_t p_per_batch_ = 1, u_per_batch_ = 255;
  StudentPair<Real> pair_;
  TeacherState<Real> teacher1_, teacher2_;
  MiningConfig mining_;
  std::vector<std::string> warnings_;
};

// mean/std across seeds, reported per run and aggregated
struct SweepResult {
  std::vector<double> accuracies;
  double mean = 0.0;
  double stddev = 0.0;
};

inline SweepResult run_sweep(const TrainerConfig& base, int seeds,
                             const std::string& out_root) {
  if (seeds < 1) throw ConfigError("run_sweep: seeds must be >= 1");
  SweepResult res;
  for (int k = 0; k < seeds; ++k) {
    TrainerConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(k);
    cfg.out_dir = out_root + "/seed_" + std::to_string(cfg.seed);
    Trainer trainer(cfg);
    TrainResult r = trainer.run();
    res.accuracies.push_back(r.test_accuracy);
  }
  double sum = 0.0;
  for (double a : res.accuracies) sum += a;
  res.mean = sum / static_cast<double>(res.accuracies.size());
  double ss = 0.0;
  for (double a : res.accuracies) ss += (a - res.mean) * (a - res.mean);
  res.stddev = res.accuracies.size() > 1
                   ? std::sqrt(ss / static_cast<double>(res.accuracies.size() -
                                                        1))
                   : 0.0;
  return res;
}

}  // namespace selfpu
