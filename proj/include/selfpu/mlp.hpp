// mlp.hpp -- dense multilayer perceptron with manual backprop, Adam updates
// and a cosine-annealed learning rate. ReLU on hidden layers, identity on the
// single output unit; the score is mapped through the logistic function only
// inside loss code.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "selfpu/errors.hpp"
#include "selfpu/matrix.hpp"
#include "selfpu/rng.hpp"

namespace selfpu {

template <class T>
struct Mlp {
  std::vector<std::size_t> layer_dims;  // input width first, 1 last
  std::vector<Matrix<T>> weights;       // weights[l]: layer_dims[l+1] x layer_dims[l]
  std::vector<std::vector<T>> biases;   // biases[l]: layer_dims[l+1]

  Mlp() = default;

  explicit Mlp(std::vector<std::size_t> dims) : layer_dims(std::move(dims)) {
    if (layer_dims.size() < 2)
      throw ShapeError("Mlp: need at least input and output widths");
    if (layer_dims.back() != 1)
      throw ShapeError("Mlp: output layer width must be 1");
    for (std::size_t d : layer_dims)
      if (d == 0) throw ShapeError("Mlp: zero layer width");
    weights.reserve(layer_count());
    biases.reserve(layer_count());
    for (std::size_t l = 0; l < layer_count(); ++l) {
      weights.emplace_back(layer_dims[l + 1], layer_dims[l]);
      biases.emplace_back(layer_dims[l + 1], T{0});
    }
  }

  std::size_t layer_count() const { return layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l)
      n += weights[l].data.size() + biases[l].size();
    return n;
  }
};

// uniform in +-sqrt(6/(fan_in+fan_out)), drawn layer by layer from `rng`
template <class T>
void init_weights(Mlp<T>& model, Rng& rng) {
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const double fan_in = static_cast<double>(model.layer_dims[l]);
    const double fan_out = static_cast<double>(model.layer_dims[l + 1]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (T& w : model.weights[l].data)
      w = static_cast<T>(rng.uniform(-bound, bound));
    for (T& b : model.biases[l]) b = T{0};
  }
}

template <class T>
struct Gradients {
  std::vector<Matrix<T>> weights;
  std::vector<std::vector<T>> biases;

  Gradients() = default;
  explicit Gradients(const Mlp<T>& model) {
    weights.reserve(model.layer_count());
    biases.reserve(model.layer_count());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
      weights.emplace_back(model.weights[l].rows, model.weights[l].cols);
      biases.emplace_back(model.biases[l].size(), T{0});
    }
  }

  void zero() {
    for (auto& w : weights) w.fill(T{0});
    for (auto& b : biases) b.assign(b.size(), T{0});
  }

  void add_scaled(const Gradients& other, T s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (std::size_t i = 0; i < weights[l].data.size(); ++i)
        weights[l].data[i] += s * other.weights[l].data[i];
      for (std::size_t i = 0; i < biases[l].size(); ++i)
        biases[l][i] += s * other.biases[l][i];
    }
  }

  void scale(T s) {
    for (auto& w : weights)
      for (T& v : w.data) v *= s;
    for (auto& b : biases)
      for (T& v : b) v *= s;
  }
};

template <class T>
T grad_dot(const Gradients<T>& a, const Gradients<T>& b) {
  T acc{0};
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    for (std::size_t i = 0; i < a.weights[l].data.size(); ++i)
      acc += a.weights[l].data[i] * b.weights[l].data[i];
    for (std::size_t i = 0; i < a.biases[l].size(); ++i)
      acc += a.biases[l][i] * b.biases[l][i];
  }
  return acc;
}

// Per-layer activations kept from a forward pass. a[0] is the input batch,
// a[l+1] the post-activation output of layer l; z[l] the pre-activation.
template <class T>
struct ForwardCache {
  std::vector<Matrix<T>> a;
  std::vector<Matrix<T>> z;
  std::size_t batch = 0;
};

template <class T>
void forward_batch(const Mlp<T>& model, const Matrix<T>& x,
                   ForwardCache<T>& cache, std::vector<T>& scores) {
  if (x.cols != model.input_dim())
    throw ShapeError("forward: input width " + std::to_string(x.cols) +
                     " != layer_dims[0] " + std::to_string(model.input_dim()));
  const std::size_t n = x.rows;
  const std::size_t nl = model.layer_count();
  cache.batch = n;
  cache.a.resize(nl + 1);
  cache.z.resize(nl);
  cache.a[0] = x;
  for (std::size_t l = 0; l < nl; ++l) {
    const Matrix<T>& w = model.weights[l];
    const std::vector<T>& b = model.biases[l];
    const Matrix<T>& in = cache.a[l];
    Matrix<T>& z = cache.z[l];
    z.resize(n, w.rows);
    for (std::size_t r = 0; r < n; ++r) {
      const T* xr = in.data.data() + r * in.cols;
      T* zr = z.data.data() + r * z.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const T* wr = w.data.data() + o * w.cols;
        T acc = b[o];
        for (std::size_t i = 0; i < w.cols; ++i) acc += wr[i] * xr[i];
        zr[o] = acc;
      }
    }
    Matrix<T>& out = cache.a[l + 1];
    out.resize(n, w.rows);
    const bool hidden = l + 1 < nl;
    for (std::size_t i = 0; i < z.data.size(); ++i)
      out.data[i] = hidden ? (z.data[i] > T{0} ? z.data[i] : T{0}) : z.data[i];
  }
  scores.resize(n);
  for (std::size_t r = 0; r < n; ++r) scores[r] = cache.a[nl](r, 0);
}

template <class T>
T forward(const Mlp<T>& model, std::span<const T> x) {
  Matrix<T> m(1, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) m(0, i) = x[i];
  ForwardCache<T> cache;
  std::vector<T> scores;
  forward_batch(model, m, cache, scores);
  return scores[0];
}

// dL/dtheta given per-example upstream dL/dscore; accumulates into `grads`
template <class T>
void backward_batch(const Mlp<T>& model, const ForwardCache<T>& cache,
                    std::span<const T> dscores, Gradients<T>& grads) {
  const std::size_t n = cache.batch;
  if (dscores.size() != n) throw ShapeError("backward: dscores size mismatch");
  const std::size_t nl = model.layer_count();
  Matrix<T> delta(n, 1);
  for (std::size_t r = 0; r < n; ++r) delta(r, 0) = dscores[r];
  Matrix<T> delta_prev;
  for (std::size_t l = nl; l-- > 0;) {
    const Matrix<T>& w = model.weights[l];
    const Matrix<T>& a_in = cache.a[l];
    Matrix<T>& gw = grads.weights[l];
    std::vector<T>& gb = grads.biases[l];
    for (std::size_t r = 0; r < n; ++r) {
      const T* dr = delta.data.data() + r * delta.cols;
      const T* ar = a_in.data.data() + r * a_in.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const T d = dr[o];
        if (d == T{0}) continue;
        gb[o] += d;
        T* gwr = gw.data.data() + o * gw.cols;
        for (std::size_t i = 0; i < w.cols; ++i) gwr[i] += d * ar[i];
      }
    }
    if (l == 0) break;
    delta_prev.resize(n, w.cols);
    const Matrix<T>& z_in = cache.z[l - 1];
    for (std::size_t r = 0; r < n; ++r) {
      const T* dr = delta.data.data() + r * delta.cols;
      T* pr = delta_prev.data.data() + r * delta_prev.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const T d = dr[o];
        if (d == T{0}) continue;
        const T* wr = w.data.data() + o * w.cols;
        for (std::size_t i = 0; i < w.cols; ++i) pr[i] += d * wr[i];
      }
      const T* zr = z_in.data.data() + r * z_in.cols;
      for (std::size_t i = 0; i < delta_prev.cols; ++i)
        if (zr[i] <= T{0}) pr[i] = T{0};
    }
    std::swap(delta, delta_prev);
  }
}

template <class T>
Gradients<T> backward(const Mlp<T>& model, std::span<const T> x, T dl_dscore) {
  Matrix<T> m(1, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) m(0, i) = x[i];
  ForwardCache<T> cache;
  std::vector<T> scores;
  forward_batch(model, m, cache, scores);
  Gradients<T> grads(model);
  const T d[1] = {dl_dscore};
  backward_batch(model, cache, std::span<const T>(d, 1), grads);
  return grads;
}

// directional derivative of every score along parameter tangent `v`:
// out[r] = <v, d score_r / d theta>, reusing the activations in `cache`
template <class T>
void jvp_scores(const Mlp<T>& model, const Gradients<T>& v,
                const ForwardCache<T>& cache, std::vector<T>& out) {
  const std::size_t n = cache.batch;
  const std::size_t nl = model.layer_count();
  Matrix<T> t_in(n, model.input_dim());  // zero input tangent
  Matrix<T> t_out;
  for (std::size_t l = 0; l < nl; ++l) {
    const Matrix<T>& w = model.weights[l];
    const Matrix<T>& vw = v.weights[l];
    const std::vector<T>& vb = v.biases[l];
    const Matrix<T>& a_in = cache.a[l];
    const Matrix<T>& z = cache.z[l];
    t_out.resize(n, w.rows);
    const bool hidden = l + 1 < nl;
    for (std::size_t r = 0; r < n; ++r) {
      const T* ar = a_in.data.data() + r * a_in.cols;
      const T* tr = t_in.data.data() + r * t_in.cols;
      const T* zr = z.data.data() + r * z.cols;
      T* or_ = t_out.data.data() + r * t_out.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const T* wr = w.data.data() + o * w.cols;
        const T* vwr = vw.data.data() + o * vw.cols;
        T acc = vb[o];
        for (std::size_t i = 0; i < w.cols; ++i)
          acc += vwr[i] * ar[i] + wr[i] * tr[i];
        if (hidden && zr[o] <= T{0}) acc = T{0};
        or_[o] = acc;
      }
    }
    std::swap(t_in, t_out);
  }
  out.resize(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = t_in(r, 0);
}

template <class T>
struct AdamState {
  std::vector<Matrix<T>> m_w, v_w;
  std::vector<std::vector<T>> m_b, v_b;
  std::uint64_t step = 0;
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);

  AdamState() = default;
  explicit AdamState(const Mlp<T>& model, T b1 = static_cast<T>(0.9),
                     T b2 = static_cast<T>(0.999), T e = static_cast<T>(1e-8))
      : beta1(b1), beta2(b2), eps(e) {
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
      m_w.emplace_back(model.weights[l].rows, model.weights[l].cols);
      v_w.emplace_back(model.weights[l].rows, model.weights[l].cols);
      m_b.emplace_back(model.biases[l].size(), T{0});
      v_b.emplace_back(model.biases[l].size(), T{0});
    }
  }
};

namespace detail {
template <class T>
void adam_apply(T* param, const T* grad, T* m, T* v, std::size_t count,
                const AdamState<T>& st, T lr, T c1, T c2, std::size_t layer,
                const char* kind) {
  for (std::size_t i = 0; i < count; ++i) {
    const T g = grad[i];
    if (!std::isfinite(static_cast<double>(g))) {
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "adam_step: non-finite gradient at layer %zu %s[%zu]",
                    layer, kind, i);
      throw NumericError(buf);
    }
    m[i] = st.beta1 * m[i] + (T{1} - st.beta1) * g;
    v[i] = st.beta2 * v[i] + (T{1} - st.beta2) * g * g;
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}
}  // namespace detail

// standard bias-corrected Adam; lr = 0 still advances moments and the counter
template <class T>
void adam_step(Mlp<T>& model, const Gradients<T>& grads, AdamState<T>& state,
               T lr) {
  if (lr < T{0}) throw RangeError("adam_step: negative learning rate");
  state.step += 1;
  const T c1 = T{1} - static_cast<T>(std::pow(static_cast<double>(state.beta1),
                                              static_cast<double>(state.step)));
  const T c2 = T{1} - static_cast<T>(std::pow(static_cast<double>(state.beta2),
                                              static_cast<double>(state.step)));
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    detail::adam_apply(model.weights[l].data.data(),
                       grads.weights[l].data.data(), state.m_w[l].data.data(),
                       state.v_w[l].data.data(), model.weights[l].data.size(),
                       state, lr, c1, c2, l, "w");
    detail::adam_apply(model.biases[l].data(), grads.biases[l].data(),
                       state.m_b[l].data(), state.v_b[l].data(),
                       model.biases[l].size(), state, lr, c1, c2, l, "b");
  }
}

struct LrSchedule {
  double lr_max = 1e-4;
  double lr_min = 0.0;
  int t_max = 200;  // epochs
};

inline double cosine_lr(const LrSchedule& sched, int epoch) {
  if (epoch < 0 || epoch > sched.t_max)
    throw RangeError("cosine_lr: epoch " + std::to_string(epoch) +
                     " outside [0, " + std::to_string(sched.t_max) + "]");
  const double frac = static_cast<double>(epoch) / sched.t_max;
  return sched.lr_min +
         0.5 * (sched.lr_max - sched.lr_min) *
             (1.0 + std::cos(3.14159265358979323846 * frac));
}

}  // namespace selfpu
