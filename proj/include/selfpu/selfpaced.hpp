// selfpaced.hpp -- the self-paced engine: a trusted set of confidently
// self-labeled unlabeled examples, rebuilt from scratch every selection round
// (in-and-out semantics) with balanced positive/negative halves and soft
// labels frozen at selection time, plus the hybrid loss combining supervised
// cross entropy on trusted members with the nnPU risk on the rest.
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "selfpu/errors.hpp"
#include "selfpu/losses.hpp"
#include "selfpu/matrix.hpp"
#include "selfpu/mlp.hpp"

namespace selfpu {

enum class Polarity : std::uint8_t { pos = 0, neg = 1 };

template <class T>
struct TrustedEntry {
  T soft_label_pos{};  // frozen f(g(x)) at selection; soft_label_neg implicit
  int selected_at_epoch = 0;
  Polarity polarity = Polarity::pos;
};

template <class T>
struct TrustedSet {
  std::unordered_map<std::int64_t, TrustedEntry<T>> entries;
  std::int64_t capacity_target = 0;

  bool contains(std::int64_t id) const { return entries.count(id) != 0; }
  std::size_t size() const { return entries.size(); }

  std::size_t count(Polarity p) const {
    std::size_t n = 0;
    for (const auto& [id, e] : entries)
      if (e.polarity == p) ++n;
    return n;
  }

  // deterministic (id-ascending) listing for audits and serialization
  std::vector<std::pair<std::int64_t, TrustedEntry<T>>> sorted_entries() const {
    std::vector<std::pair<std::int64_t, TrustedEntry<T>>> out(entries.begin(),
                                                              entries.end());
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }
};

struct PaceSchedule {
  double r_final = 0.2;   // final |D_trust| / |D_U|
  int epoch_start = 10;
  int epoch_end = 50;
  int warmup_epochs = 10;

  void validate() const {
    if (!(r_final > 0.0 && r_final <= 1.0))
      throw ConfigError("PaceSchedule: r_final must lie in (0,1]");
    if (epoch_start < warmup_epochs)
      throw ConfigError("PaceSchedule: epoch_start before warm-up end");
    if (epoch_end <= epoch_start)
      throw ConfigError("PaceSchedule: epoch_end must exceed epoch_start");
  }
};

// linear ramp from 0 at epoch_start to r_final*n_u at epoch_end, forced even
// so the positive/negative halves stay balanced
inline std::int64_t target_size(const PaceSchedule& sched, int epoch,
                                std::int64_t n_u) {
  if (epoch < sched.epoch_start || epoch > sched.epoch_end)
    throw RangeError("target_size: epoch " + std::to_string(epoch) +
                     " outside self-paced phase [" +
                     std::to_string(sched.epoch_start) + ", " +
                     std::to_string(sched.epoch_end) + "]");
  const double frac = static_cast<double>(epoch - sched.epoch_start) /
                      static_cast<double>(sched.epoch_end - sched.epoch_start);
  auto target = static_cast<std::int64_t>(
      std::llround(sched.r_final * static_cast<double>(n_u) * frac));
  if (target % 2 != 0) target -= 1;
  return target;
}

enum class SelectionMode { in_and_out, fixed_size, no_replacement };

template <class T>
struct SelectionResult {
  TrustedSet<T> set;
  std::int64_t requested = 0;
  bool capped = false;  // fewer qualified candidates than requested
};

namespace detail {

// candidates ranked by probability with ties broken by ascending id;
// descending order for positive picks, ascending for negative picks
template <class T>
std::vector<std::size_t> rank_by_prob(std::span<const std::int64_t> ids,
                                      std::span<const T> probs,
                                      bool descending) {
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b])
      return descending ? probs[a] > probs[b] : probs[a] < probs[b];
    return ids[a] < ids[b];
  });
  return order;
}

}  // namespace detail

// One selection round over the unlabeled pool. `ids`/`probs` are the pool's
// example ids and their current positive-class probabilities f(g(x)).
// in_and_out and fixed_size rebuild the set from scratch; no_replacement
// keeps every previous entry (frozen labels included) and only adds.
// Positive picks require p >= 0.5 and negative picks p < 0.5; both halves
// are truncated to the smaller side so they stay balanced, with `capped`
// reporting any shortfall.
template <class T>
SelectionResult<T> select_trusted(std::span<const std::int64_t> ids,
                                  std::span<const T> probs,
                                  const PaceSchedule& sched, int epoch,
                                  SelectionMode mode = SelectionMode::in_and_out,
                                  const TrustedSet<T>* previous = nullptr) {
  if (ids.size() != probs.size())
    throw ShapeError("select_trusted: ids/probs size mismatch");
  const auto n_u = static_cast<std::int64_t>(ids.size());

  std::int64_t target = 0;
  if (mode == SelectionMode::fixed_size) {
    target = static_cast<std::int64_t>(
        std::llround(sched.r_final * static_cast<double>(n_u)));
    if (target % 2 != 0) target -= 1;
    if (epoch < sched.epoch_start || epoch > sched.epoch_end)
      throw RangeError("select_trusted: epoch outside self-paced phase");
  } else {
    target = target_size(sched, epoch, n_u);
  }

  SelectionResult<T> result;
  result.requested = target;
  result.set.capacity_target = target;

  std::int64_t per_side = target / 2;
  if (mode == SelectionMode::no_replacement && previous != nullptr) {
    result.set = *previous;
    result.set.capacity_target = target;
    const auto have =
        static_cast<std::int64_t>(result.set.count(Polarity::pos));
    per_side = std::max<std::int64_t>(0, target / 2 - have);
  }

  const auto desc = detail::rank_by_prob(ids, probs, true);
  const auto asc = detail::rank_by_prob(ids, probs, false);
  const bool skip_members =
      mode == SelectionMode::no_replacement && previous != nullptr;

  std::vector<std::size_t> pos_picks, neg_picks;
  pos_picks.reserve(static_cast<std::size_t>(per_side));
  neg_picks.reserve(static_cast<std::size_t>(per_side));
  for (std::size_t k = 0;
       k < desc.size() && std::cmp_less(pos_picks.size(), per_side); ++k) {
    const std::size_t i = desc[k];
    if (probs[i] < static_cast<T>(0.5)) break;  // positives exhausted
    if (skip_members && previous->contains(ids[i])) continue;
    pos_picks.push_back(i);
  }
  for (std::size_t k = 0;
       k < asc.size() && std::cmp_less(neg_picks.size(), per_side); ++k) {
    const std::size_t i = asc[k];
    if (probs[i] >= static_cast<T>(0.5)) break;  // negatives exhausted
    if (skip_members && previous->contains(ids[i])) continue;
    neg_picks.push_back(i);
  }

  const std::size_t take = std::min(pos_picks.size(), neg_picks.size());
  result.capped = std::cmp_less(take, per_side);
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t i = pos_picks[k];
    result.set.entries[ids[i]] =
        TrustedEntry<T>{probs[i], epoch, Polarity::pos};
    const std::size_t j = neg_picks[k];
    result.set.entries[ids[j]] =
        TrustedEntry<T>{probs[j], epoch, Polarity::neg};
  }
  return result;
}

// probability view of a model over a feature matrix
template <class T>
std::vector<T> positive_probabilities(const Mlp<T>& model, const Matrix<T>& x) {
  ForwardCache<T> cache;
  std::vector<T> scores;
  forward_batch(model, x, cache, scores);
  for (T& s : scores) s = logistic(s);
  return scores;
}

template <class T>
SelectionResult<T> select_trusted(const Mlp<T>& model,
                                  std::span<const std::int64_t> ids,
                                  const Matrix<T>& features,
                                  const PaceSchedule& sched, int epoch,
                                  SelectionMode mode = SelectionMode::in_and_out,
                                  const TrustedSet<T>* previous = nullptr) {
  const std::vector<T> probs = positive_probabilities(model, features);
  return select_trusted<T>(ids, std::span<const T>(probs), sched, epoch, mode,
                           previous);
}

template <class T>
struct SpLossResult {
  T value{};
  T ce_sum{};              // supervised part over trusted members
  RiskBreakdown<T> risk;   // nnPU part over (positives, non-trusted unlabeled)
  Gradients<T> grads;
};

// Hybrid loss: sum of cross entropies of the batch's trusted members against
// their frozen soft labels, plus the nnPU batch risk over the positive batch
// and the non-trusted unlabeled batch. Gradients accumulate over all parts.
template <class T>
SpLossResult<T> sp_loss(const Mlp<T>& model, const TrustedSet<T>& trusted,
                        std::span<const std::int64_t> trusted_ids,
                        const Matrix<T>& trusted_x, const Matrix<T>& batch_p_x,
                        std::span<const std::int64_t> rest_ids,
                        const Matrix<T>& rest_x, const ClassPrior& prior,
                        ClampPolicy policy = ClampPolicy::flip) {
  if (trusted_ids.size() != trusted_x.rows || rest_ids.size() != rest_x.rows)
    throw ShapeError("sp_loss: id/feature row mismatch");
  for (std::int64_t id : rest_ids)
    if (trusted.contains(id))
      throw PartitionError("sp_loss: trusted example " + std::to_string(id) +
                           " present in the non-trusted batch");
  for (std::int64_t id : trusted_ids)
    if (!trusted.contains(id))
      throw PartitionError("sp_loss: example " + std::to_string(id) +
                           " is not a trusted member");

  SpLossResult<T> out;
  out.grads = Gradients<T>(model);

  if (trusted_x.rows > 0) {
    ForwardCache<T> cache;
    std::vector<T> scores;
    forward_batch(model, trusted_x, cache, scores);
    std::vector<T> dscores(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const T q = trusted.entries.at(trusted_ids[i]).soft_label_pos;
      out.ce_sum += cross_entropy(scores[i], q);
      dscores[i] = cross_entropy_dz(scores[i], q);
    }
    backward_batch(model, cache, std::span<const T>(dscores), out.grads);
  }

  if (batch_p_x.rows > 0 || rest_x.rows > 0) {
    ForwardCache<T> cache_p, cache_u;
    std::vector<T> zp, zu;
    if (batch_p_x.rows > 0) forward_batch(model, batch_p_x, cache_p, zp);
    if (rest_x.rows > 0) forward_batch(model, rest_x, cache_u, zu);
    auto g = detail::nnpu_grad_impl(std::span<const T>(zp),
                                    std::span<const T>(zu), prior, policy);
    out.risk = g.breakdown;
    if (!zp.empty())
      backward_batch(model, cache_p, std::span<const T>(g.d_p_scores),
                     out.grads);
    if (!zu.empty())
      backward_batch(model, cache_u, std::span<const T>(g.d_u_scores),
                     out.grads);
  }

  out.value = out.ce_sum + out.risk.total;
  return out;
}

}  // namespace selfpu
