// reweight.hpp -- self-calibrated loss reweighting. Per-example weights
// mixing the self-labeled cross entropy and the per-example unlabeled
// surrogate are learned by a one-step lookahead against a clean validation
// batch, rectified, column-normalized, and capped by the gamma budget.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "selfpu/errors.hpp"
#include "selfpu/losses.hpp"
#include "selfpu/matrix.hpp"
#include "selfpu/mlp.hpp"

namespace selfpu {

struct ReweightConfig {
  double delta = 1e-4;   // lookahead step size
  double gamma = 0.0625; // cross-entropy budget factor
  std::size_t m = 256;   // validation mini-batch size

  void validate() const {
    if (!(delta >= 0.0)) throw ConfigError("ReweightConfig: delta < 0");
    if (!(gamma >= 0.0)) throw ConfigError("ReweightConfig: gamma < 0");
    if (m == 0) throw ConfigError("ReweightConfig: empty validation batch");
  }
};

enum class MetaSource : std::uint8_t { oracle_holdout, trusted_bootstrap };

template <class T>
struct MetaValidationSet {
  Matrix<T> x;
  std::vector<std::int8_t> labels;  // clean +-1
  MetaSource source = MetaSource::oracle_holdout;

  std::size_t size() const { return labels.size(); }
};

template <class T>
struct BatchWeights {
  Matrix<T> w;                        // n x 2: [CE weight, surrogate weight]
  std::vector<std::uint8_t> capped;   // per row: beyond the budget cut
};

// Raw weight signal: u[i][k] = delta * <grad_theta L_val, grad_theta l_ik>,
// the (negated) derivative of the mean validation cross entropy through a
// lookahead step of size delta taken on l with all weights at zero. Both
// loss columns of one example share the score gradient, so a single
// directional derivative per example suffices.
template <class T>
Matrix<T> lookahead_weight_grad(const Mlp<T>& model, const Matrix<T>& batch_u,
                                const MetaValidationSet<T>& val,
                                const ReweightConfig& cfg) {
  if (val.size() == 0)
    throw ConfigError("lookahead_weight_grad: empty validation batch");
  if (val.x.rows != val.labels.size())
    throw ShapeError("lookahead_weight_grad: validation rows/labels mismatch");

  // validation gradient at the current parameters
  ForwardCache<T> val_cache;
  std::vector<T> val_scores;
  forward_batch(model, val.x, val_cache, val_scores);
  const T inv_m = T{1} / static_cast<T>(val.size());
  std::vector<T> val_dscores(val_scores.size());
  for (std::size_t j = 0; j < val_scores.size(); ++j) {
    const T q = val.labels[j] > 0 ? T{1} : T{0};
    val_dscores[j] = cross_entropy_dz(val_scores[j], q) * inv_m;
  }
  Gradients<T> val_grad(model);
  backward_batch(model, val_cache, std::span<const T>(val_dscores), val_grad);

  // directional derivatives of the batch scores along the validation gradient
  ForwardCache<T> cache;
  std::vector<T> scores;
  forward_batch(model, batch_u, cache, scores);
  std::vector<T> score_dirs;
  jvp_scores(model, val_grad, cache, score_dirs);

  const T delta = static_cast<T>(cfg.delta);
  const ClassPrior unused_prior;
  Matrix<T> u(batch_u.rows, 2);
  for (std::size_t i = 0; i < batch_u.rows; ++i) {
    u(i, 0) = delta * self_cross_entropy_dz(scores[i]) * score_dirs[i];
    u(i, 1) = delta *
              per_example_unlabeled_risk_dz(scores[i], unused_prior) *
              score_dirs[i];
  }
  return u;
}

// Rectify at zero, normalize each column to unit mass, then walk rows in
// descending CE-weight order keeping them while the kept CE mass is still
// under gamma*n; every later row becomes (0, 1). An all-zero CE column puts
// every row beyond the cap.
template <class T>
BatchWeights<T> normalize_and_cap(const Matrix<T>& u,
                                  const ReweightConfig& cfg) {
  if (u.cols != 2) throw ShapeError("normalize_and_cap: expected n x 2");
  const std::size_t n = u.rows;
  if (n == 0) throw ShapeError("normalize_and_cap: empty batch");

  BatchWeights<T> out;
  out.w.resize(n, 2);
  out.capped.assign(n, 0);

  T col_sum[2] = {T{0}, T{0}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 2; ++k) {
      out.w(i, k) = std::max(u(i, k), T{0});
      col_sum[k] += out.w(i, k);
    }
  for (std::size_t k = 0; k < 2; ++k)
    if (col_sum[k] > T{0})
      for (std::size_t i = 0; i < n; ++i) out.w(i, k) /= col_sum[k];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out.w(a, 0) != out.w(b, 0)) return out.w(a, 0) > out.w(b, 0);
    return a < b;
  });

  const T budget = static_cast<T>(cfg.gamma) * static_cast<T>(n);
  T running = T{0};
  const bool ce_dead = col_sum[0] <= T{0};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (ce_dead || running >= budget) {
      out.w(i, 0) = T{0};
      out.w(i, 1) = T{1};
      out.capped[i] = 1;
    } else {
      running += out.w(i, 0);
    }
  }
  return out;
}

template <class T>
struct ReweightedLossResult {
  T value{};
  Gradients<T> grads;
};

// mean over the batch of w1 * L_CES + w2 * unlabeled surrogate; the weights
// are constants here, gradients flow only through the scores
template <class T>
ReweightedLossResult<T> reweighted_loss(const Mlp<T>& model,
                                        const Matrix<T>& batch_u,
                                        const BatchWeights<T>& weights,
                                        const ClassPrior& prior) {
  const std::size_t n = batch_u.rows;
  if (weights.w.rows != n)
    throw ShapeError("reweighted_loss: weight/batch length mismatch");
  ReweightedLossResult<T> out;
  out.grads = Gradients<T>(model);
  if (n == 0) return out;

  ForwardCache<T> cache;
  std::vector<T> scores;
  forward_batch(model, batch_u, cache, scores);
  const T inv_n = T{1} / static_cast<T>(n);
  std::vector<T> dscores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T w1 = weights.w(i, 0);
    const T w2 = weights.w(i, 1);
    out.value += inv_n * (w1 * self_cross_entropy(scores[i]) +
                          w2 * per_example_unlabeled_risk(scores[i], prior));
    dscores[i] = inv_n * (w1 * self_cross_entropy_dz(scores[i]) +
                          w2 * per_example_unlabeled_risk_dz(scores[i], prior));
  }
  backward_batch(model, cache, std::span<const T>(dscores), out.grads);
  return out;
}

}  // namespace selfpu
