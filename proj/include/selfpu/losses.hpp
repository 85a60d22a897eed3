// losses.hpp -- scalar loss primitives and the uPU/nnPU risk estimators with
// their gradients with respect to model scores.
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "selfpu/errors.hpp"

namespace selfpu {

struct ClassPrior {
  double pi_p = 0.5;

  ClassPrior() = default;
  explicit ClassPrior(double p) : pi_p(p) {
    if (!(p > 0.0 && p < 1.0))
      throw RangeError("ClassPrior: pi_p must lie in (0,1), got " +
                       std::to_string(p));
  }
  double pi_n() const { return 1.0 - pi_p; }
};

template <class T>
T logistic(T x) {
  if (x >= T{0}) {
    return T{1} / (T{1} + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// L(z, y) = logistic(-y z); value in (0,1), decreasing in y*z
template <class T>
T sigmoid_loss(T score, int y) {
  return logistic(static_cast<T>(-y) * score);
}

template <class T>
T sigmoid_loss_dz(T score, int y) {
  const T s = logistic(static_cast<T>(-y) * score);
  return static_cast<T>(-y) * s * (T{1} - s);
}

inline constexpr double kLogClamp = 1e-12;

// -[q log p + (1-q) log(1-p)] with p = logistic(score); log args clamped
template <class T>
T cross_entropy(T score, T soft_label) {
  if (soft_label < T{0} || soft_label > T{1})
    throw RangeError("cross_entropy: soft label outside [0,1]");
  const T p = logistic(score);
  const T lp = std::log(std::max(p, static_cast<T>(kLogClamp)));
  const T lq = std::log(std::max(T{1} - p, static_cast<T>(kLogClamp)));
  return -(soft_label * lp + (T{1} - soft_label) * lq);
}

template <class T>
T cross_entropy_dz(T score, T soft_label) {
  return logistic(score) - soft_label;
}

// cross entropy against the model's own prediction as the soft label, i.e.
// the binary entropy of p = logistic(score); the label tracks the score, so
// the derivative is -z p (1-p) rather than zero
template <class T>
T self_cross_entropy(T score) {
  return cross_entropy(score, logistic(score));
}

template <class T>
T self_cross_entropy_dz(T score) {
  const T p = logistic(score);
  return -score * p * (T{1} - p);
}

// L(score, -1): the integrand of the risk estimators' unlabeled term, used as
// the per-example surrogate wherever a single unlabeled example needs a risk
template <class T>
T per_example_unlabeled_risk(T score, const ClassPrior& /*prior*/) {
  return sigmoid_loss(score, -1);
}

template <class T>
T per_example_unlabeled_risk_dz(T score, const ClassPrior& /*prior*/) {
  return sigmoid_loss_dz(score, -1);
}

template <class T>
struct RiskBreakdown {
  T positive_term{};
  T unlabeled_term{};
  T correction_term{};
  bool clamped = false;
  T total{};
};

namespace detail {
template <class T>
void check_batch(std::span<const T> p_scores, std::span<const T> u_scores) {
  if (p_scores.empty())
    throw BatchCompositionError("risk estimator: empty positive batch");
  if (u_scores.empty())
    throw BatchCompositionError("risk estimator: empty unlabeled batch");
}

template <class T>
RiskBreakdown<T> risk_terms(std::span<const T> p_scores,
                            std::span<const T> u_scores,
                            const ClassPrior& prior) {
  check_batch(p_scores, u_scores);
  const T wp = static_cast<T>(prior.pi_p) / static_cast<T>(p_scores.size());
  RiskBreakdown<T> r;
  for (T z : p_scores) {
    r.positive_term += wp * sigmoid_loss(z, +1);
    r.correction_term += wp * sigmoid_loss(z, -1);
  }
  for (T z : u_scores)
    r.unlabeled_term += sigmoid_loss(z, -1) / static_cast<T>(u_scores.size());
  return r;
}
}  // namespace detail

// unbiased estimator: may go negative once the model overfits the positives
template <class T>
RiskBreakdown<T> upu_risk(std::span<const T> p_scores,
                          std::span<const T> u_scores,
                          const ClassPrior& prior) {
  RiskBreakdown<T> r = detail::risk_terms(p_scores, u_scores, prior);
  r.clamped = false;
  r.total = r.positive_term + (r.unlabeled_term - r.correction_term);
  return r;
}

// non-negative estimator: the corrected negative-risk bracket is clamped at 0
template <class T>
RiskBreakdown<T> nnpu_risk(std::span<const T> p_scores,
                           std::span<const T> u_scores,
                           const ClassPrior& prior) {
  RiskBreakdown<T> r = detail::risk_terms(p_scores, u_scores, prior);
  const T bracket = r.unlabeled_term - r.correction_term;
  r.clamped = bracket < T{0};
  r.total = r.positive_term + std::max(T{0}, bracket);
  return r;
}

// What to descend on when the bracket goes negative: `flip` minimizes the
// negated bracket (the positive term keeps its own gradient), `zero` drops
// the bracket's gradient entirely.
enum class ClampPolicy { flip, zero };

template <class T>
struct NnpuGradients {
  std::vector<T> d_p_scores;
  std::vector<T> d_u_scores;
  RiskBreakdown<T> breakdown;
};

namespace detail {
// nnPU terms and per-score gradients; an empty side contributes zero sums,
// which covers the degenerate batches the hybrid losses can produce
template <class T>
NnpuGradients<T> nnpu_grad_impl(std::span<const T> p_scores,
                                std::span<const T> u_scores,
                                const ClassPrior& prior, ClampPolicy policy) {
  NnpuGradients<T> g;
  const T wp = p_scores.empty()
                   ? T{0}
                   : static_cast<T>(prior.pi_p) /
                         static_cast<T>(p_scores.size());
  const T wu =
      u_scores.empty() ? T{0} : T{1} / static_cast<T>(u_scores.size());
  RiskBreakdown<T>& r = g.breakdown;
  for (T z : p_scores) {
    r.positive_term += wp * sigmoid_loss(z, +1);
    r.correction_term += wp * sigmoid_loss(z, -1);
  }
  for (T z : u_scores)
    r.unlabeled_term += wu * sigmoid_loss(z, -1);
  const T bracket = r.unlabeled_term - r.correction_term;
  r.clamped = bracket < T{0};
  r.total = r.positive_term + std::max(T{0}, bracket);

  const T bracket_sign =
      r.clamped ? (policy == ClampPolicy::flip ? T{-1} : T{0}) : T{1};
  g.d_p_scores.resize(p_scores.size());
  g.d_u_scores.resize(u_scores.size());
  for (std::size_t i = 0; i < p_scores.size(); ++i) {
    const T z = p_scores[i];
    g.d_p_scores[i] = wp * (sigmoid_loss_dz(z, +1) -
                            bracket_sign * sigmoid_loss_dz(z, -1));
  }
  for (std::size_t i = 0; i < u_scores.size(); ++i)
    g.d_u_scores[i] = bracket_sign * wu * sigmoid_loss_dz(u_scores[i], -1);
  return g;
}
}  // namespace detail

template <class T>
NnpuGradients<T> nnpu_grad(std::span<const T> p_scores,
                           std::span<const T> u_scores, const ClassPrior& prior,
                           ClampPolicy policy = ClampPolicy::flip) {
  detail::check_batch(p_scores, u_scores);
  return detail::nnpu_grad_impl(p_scores, u_scores, prior, policy);
}

}  // namespace selfpu
