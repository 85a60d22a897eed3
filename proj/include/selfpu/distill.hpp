// distill.hpp -- two-student mutual consistency with hard-sample mining,
// moving-average teachers with a distillation loss, and the combined
// objective used during the distillation phase.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "selfpu/errors.hpp"
#include "selfpu/losses.hpp"
#include "selfpu/matrix.hpp"
#include "selfpu/mlp.hpp"
#include "selfpu/reweight.hpp"
#include "selfpu/selfpaced.hpp"

namespace selfpu {

struct MiningConfig {
  double alpha = 10.0;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("MiningConfig: alpha must be > 0");
  }
};

enum class TeacherMode : std::uint8_t { two_step_literal, ema_recursive };

// Moving-average mirror of a student. two_step_literal blends the previous
// and current student snapshots; ema_recursive blends the previous teacher
// with the current student. One update per scheduled tick.
template <class T>
struct TeacherState {
  Mlp<T> theta_bar;
  T beta = static_cast<T>(0.3);
  TeacherMode mode = TeacherMode::two_step_literal;
  bool initialized = false;
  Mlp<T> prev_student;  // retained snapshot, two_step_literal only
};

namespace detail {
template <class T>
void check_same_shape(const Mlp<T>& a, const Mlp<T>& b, const char* what) {
  if (a.layer_dims != b.layer_dims)
    throw ShapeError(std::string(what) + ": architecture mismatch");
}

template <class T>
void blend_params(Mlp<T>& out, const Mlp<T>& a, const Mlp<T>& b, T beta) {
  for (std::size_t l = 0; l < out.layer_count(); ++l) {
    for (std::size_t i = 0; i < out.weights[l].data.size(); ++i)
      out.weights[l].data[i] =
          beta * a.weights[l].data[i] + (T{1} - beta) * b.weights[l].data[i];
    for (std::size_t i = 0; i < out.biases[l].size(); ++i)
      out.biases[l][i] = beta * a.biases[l][i] + (T{1} - beta) * b.biases[l][i];
  }
}
}  // namespace detail

// One moving-average tick. The first tick has no previous snapshot and falls
// back to copying the student.
template <class T>
void teacher_update(TeacherState<T>& teacher, const Mlp<T>& student) {
  if (!teacher.initialized) {
    teacher.theta_bar = student;
    teacher.prev_student = student;
    teacher.initialized = true;
    return;
  }
  detail::check_same_shape(teacher.theta_bar, student, "teacher_update");
  if (teacher.mode == TeacherMode::two_step_literal) {
    detail::blend_params(teacher.theta_bar, teacher.prev_student, student,
                         teacher.beta);
    teacher.prev_student = student;
  } else {
    Mlp<T> prev = teacher.theta_bar;
    detail::blend_params(teacher.theta_bar, prev, student, teacher.beta);
  }
}

template <class T>
struct ConsistencyResult {
  T value{};
  std::size_t contributing = 0;  // gated-in direction terms
  Gradients<T> grads1;
  Gradients<T> grads2;
};

// Mutual MSE between the students' logistic outputs. Each direction runs
// over the examples outside that student's trusted set and is gated to hard
// examples: the anchor student's per-example unlabeled risk must exceed
// alpha times the MSE. The gate is a discrete mask; the squared difference
// itself is differentiable through both students.
template <class T>
ConsistencyResult<T> student_consistency(
    const Mlp<T>& student1, const Mlp<T>& student2, const Matrix<T>& batch_x,
    std::span<const std::uint8_t> in_trusted1,
    std::span<const std::uint8_t> in_trusted2, const MiningConfig& mining,
    const ClassPrior& prior) {
  detail::check_same_shape(student1, student2, "student_consistency");
  const std::size_t n = batch_x.rows;
  if (in_trusted1.size() != n || in_trusted2.size() != n)
    throw ShapeError("student_consistency: membership mask size mismatch");

  ConsistencyResult<T> out;
  out.grads1 = Gradients<T>(student1);
  out.grads2 = Gradients<T>(student2);
  if (n == 0) return out;

  ForwardCache<T> cache1, cache2;
  std::vector<T> z1, z2;
  forward_batch(student1, batch_x, cache1, z1);
  forward_batch(student2, batch_x, cache2, z2);

  const T alpha = static_cast<T>(mining.alpha);
  std::vector<T> d1(n, T{0}), d2(n, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    const T f1 = logistic(z1[i]);
    const T f2 = logistic(z2[i]);
    const T diff = f1 - f2;
    const T mse = diff * diff;
    std::size_t directions = 0;
    if (!in_trusted1[i] &&
        per_example_unlabeled_risk(z1[i], prior) > alpha * mse)
      ++directions;
    if (!in_trusted2[i] &&
        per_example_unlabeled_risk(z2[i], prior) > alpha * mse)
      ++directions;
    if (directions == 0) continue;
    out.contributing += directions;
    const T scale = static_cast<T>(directions);
    out.value += scale * mse;
    d1[i] += scale * T{2} * diff * f1 * (T{1} - f1);
    d2[i] -= scale * T{2} * diff * f2 * (T{1} - f2);
  }
  backward_batch(student1, cache1, std::span<const T>(d1), out.grads1);
  backward_batch(student2, cache2, std::span<const T>(d2), out.grads2);
  return out;
}

// Squared difference between teacher and student logistic outputs, summed
// over the whole batch. Teacher outputs are constants; gradients reach the
// student only.
template <class T>
struct TeacherConsistencyResult {
  T value{};
  Gradients<T> student_grads;
};

template <class T>
TeacherConsistencyResult<T> teacher_consistency(const Mlp<T>& teacher,
                                                const Mlp<T>& student,
                                                const Matrix<T>& batch_x) {
  detail::check_same_shape(teacher, student, "teacher_consistency");
  TeacherConsistencyResult<T> out;
  out.student_grads = Gradients<T>(student);
  if (batch_x.rows == 0) return out;

  ForwardCache<T> cache_t, cache_s;
  std::vector<T> zt, zs;
  forward_batch(teacher, batch_x, cache_t, zt);
  forward_batch(student, batch_x, cache_s, zs);

  std::vector<T> ds(batch_x.rows);
  for (std::size_t i = 0; i < batch_x.rows; ++i) {
    const T ft = logistic(zt[i]);
    const T fs = logistic(zs[i]);
    const T diff = ft - fs;
    out.value += diff * diff;
    ds[i] = -T{2} * diff * fs * (T{1} - fs);
  }
  backward_batch(student, cache_s, std::span<const T>(ds), out.student_grads);
  return out;
}

template <class T>
double binary_accuracy(const Mlp<T>& model, const Matrix<T>& x,
                       std::span<const std::int8_t> labels) {
  if (x.rows != labels.size())
    throw ShapeError("binary_accuracy: rows/labels mismatch");
  if (labels.empty())
    throw BatchCompositionError("binary_accuracy: empty evaluation set");
  ForwardCache<T> cache;
  std::vector<T> scores;
  forward_batch(model, x, cache, scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] >= T{0} ? +1 : -1;  // score 0 counts positive
    if (pred == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// index (0 or 1) of the teacher with the higher validation accuracy; ties
// go to the first
template <class T>
int pick_final_model(const TeacherState<T>& teacher1,
                     const TeacherState<T>& teacher2, const Matrix<T>& val_x,
                     std::span<const std::int8_t> val_labels,
                     double* acc1 = nullptr, double* acc2 = nullptr) {
  const double a1 = binary_accuracy(teacher1.theta_bar, val_x, val_labels);
  const double a2 = binary_accuracy(teacher2.theta_bar, val_x, val_labels);
  if (acc1) *acc1 = a1;
  if (acc2) *acc2 = a2;
  return a2 > a1 ? 1 : 0;
}

enum class Phase : std::uint8_t { warmup = 0, selfpaced = 1, distill = 2 };

template <class T>
struct StudentPair {
  Mlp<T> student1, student2;
  AdamState<T> opt1, opt2;
  PaceSchedule pace1, pace2;
  TrustedSet<T> trusted1, trusted2;
};

// Per-student slice of a batch: the trusted members, the remaining
// unlabeled examples, and the weights computed for that remainder.
template <class T>
struct StudentBatchSlice {
  std::span<const std::int64_t> trusted_ids;
  const Matrix<T>* trusted_x = nullptr;
  std::span<const std::int64_t> rest_ids;
  const Matrix<T>* rest_x = nullptr;
  const BatchWeights<T>* weights = nullptr;
};

template <class T>
struct TotalLossResult {
  T total{};
  T sp_reweight{};  // both students' hybrid + reweighted parts
  T students{};
  T teachers{};
  Gradients<T> grads1;
  Gradients<T> grads2;
  RiskBreakdown<T> risk1, risk2;
};

// The distillation-phase objective for one batch: each student's hybrid
// loss with its own trusted set plus its reweighted unlabeled term, the
// gated mutual consistency, and the teacher distillation terms.
template <class T>
TotalLossResult<T> total_loss(
    StudentPair<T>& pair, const TeacherState<T>& teacher1,
    const TeacherState<T>& teacher2, const Matrix<T>& batch_p_x,
    const Matrix<T>& full_x, std::span<const std::uint8_t> full_in_t1,
    std::span<const std::uint8_t> full_in_t2,
    const StudentBatchSlice<T>& slice1, const StudentBatchSlice<T>& slice2,
    const ClassPrior& prior, const MiningConfig& mining, ClampPolicy policy,
    Phase phase, bool enable_students = true, bool enable_teachers = true) {
  if (phase != Phase::distill)
    throw SchedulingError("total_loss: called outside the distillation phase");
  if (!teacher1.initialized || !teacher2.initialized)
    throw SchedulingError("total_loss: teachers not initialized");

  TotalLossResult<T> out;
  out.grads1 = Gradients<T>(pair.student1);
  out.grads2 = Gradients<T>(pair.student2);

  auto sp1 = sp_loss(pair.student1, pair.trusted1, slice1.trusted_ids,
                     *slice1.trusted_x, batch_p_x, slice1.rest_ids,
                     *slice1.rest_x, prior, policy);
  auto rw1 = reweighted_loss(pair.student1, *slice1.rest_x, *slice1.weights,
                             prior);
  out.risk1 = sp1.risk;
  out.sp_reweight += sp1.value + rw1.value;
  out.grads1.add_scaled(sp1.grads, T{1});
  out.grads1.add_scaled(rw1.grads, T{1});

  auto sp2 = sp_loss(pair.student2, pair.trusted2, slice2.trusted_ids,
                     *slice2.trusted_x, batch_p_x, slice2.rest_ids,
                     *slice2.rest_x, prior, policy);
  auto rw2 = reweighted_loss(pair.student2, *slice2.rest_x, *slice2.weights,
                             prior);
  out.risk2 = sp2.risk;
  out.sp_reweight += sp2.value + rw2.value;
  out.grads2.add_scaled(sp2.grads, T{1});
  out.grads2.add_scaled(rw2.grads, T{1});

  if (enable_students) {
    auto sc = student_consistency(pair.student1, pair.student2, full_x,
                                  full_in_t1, full_in_t2, mining, prior);
    out.students = sc.value;
    out.grads1.add_scaled(sc.grads1, T{1});
    out.grads2.add_scaled(sc.grads2, T{1});
  }

  if (enable_teachers) {
    auto tc1 = teacher_consistency(teacher1.theta_bar, pair.student1, full_x);
    auto tc2 = teacher_consistency(teacher2.theta_bar, pair.student2, full_x);
    out.teachers = tc1.value + tc2.value;
    out.grads1.add_scaled(tc1.student_grads, T{1});
    out.grads2.add_scaled(tc2.student_grads, T{1});
  }

  out.total = out.sp_reweight + out.students + out.teachers;
  return out;
}

}  // namespace selfpu
