// data.hpp -- dataset ingestion and PU split construction: MNIST IDX files,
// a synthetic two-Gaussian generator, the positive/unlabeled split with an
// optional clean holdout, and deterministic batch iteration.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selfpu/errors.hpp"
#include "selfpu/kv.hpp"
#include "selfpu/losses.hpp"
#include "selfpu/matrix.hpp"
#include "selfpu/rng.hpp"

namespace selfpu {

template <class T>
struct RawDataset {
  Matrix<T> features;
  std::vector<int> labels;  // digit classes for MNIST, +-1 for synthetic
};

template <class T>
struct LabeledSet {
  Matrix<T> x;
  std::vector<std::int8_t> labels;  // +-1

  std::size_t size() const { return labels.size(); }
};

// ---------------------------------------------------------------------------
// MNIST IDX ingestion

namespace detail {
inline std::uint32_t read_be_u32(std::ifstream& in, const std::string& path,
                                 const char* what) {
  unsigned char buf[4];
  const std::streamoff offset = in.tellg();
  if (!in.read(reinterpret_cast<char*>(buf), 4))
    throw FormatError(path + ": truncated while reading " + what +
                      " at offset " + std::to_string(offset));
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}
}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// big-endian IDX pair; pixels come out scaled to [0,1], digit labels 0-9
// are retained for oracle use only
template <class T>
RawDataset<T> load_mnist_idx(const std::string& images_path,
                             const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path);
  const std::uint32_t img_magic =
      detail::read_be_u32(img, images_path, "magic");
  if (img_magic != kIdxImageMagic) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%08x", img_magic);
    throw FormatError(images_path + ": bad image magic " + buf +
                      " at offset 0");
  }
  const std::uint32_t n_images =
      detail::read_be_u32(img, images_path, "count");
  const std::uint32_t rows = detail::read_be_u32(img, images_path, "rows");
  const std::uint32_t cols = detail::read_be_u32(img, images_path, "cols");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path);
  const std::uint32_t lab_magic =
      detail::read_be_u32(lab, labels_path, "magic");
  if (lab_magic != kIdxLabelMagic) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%08x", lab_magic);
    throw FormatError(labels_path + ": bad label magic " + buf +
                      " at offset 0");
  }
  const std::uint32_t n_labels =
      detail::read_be_u32(lab, labels_path, "count");
  if (n_images != n_labels)
    throw FormatError(images_path + ": image count " +
                      std::to_string(n_images) + " != label count " +
                      std::to_string(n_labels) + " in " + labels_path);

  const std::size_t dim = std::size_t(rows) * cols;
  RawDataset<T> out;
  out.features.resize(n_images, dim);
  out.labels.resize(n_images);
  std::vector<unsigned char> pixel_row(dim);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    const std::streamoff offset = img.tellg();
    if (!img.read(reinterpret_cast<char*>(pixel_row.data()),
                  static_cast<std::streamsize>(dim)))
      throw FormatError(images_path + ": truncated image " +
                        std::to_string(i) + " at offset " +
                        std::to_string(offset));
    T* dst = out.features.data.data() + std::size_t(i) * dim;
    for (std::size_t j = 0; j < dim; ++j)
      dst[j] = static_cast<T>(pixel_row[j]) / static_cast<T>(255);
  }
  std::vector<unsigned char> label_bytes(n_labels);
  const std::streamoff loff = lab.tellg();
  if (!lab.read(reinterpret_cast<char*>(label_bytes.data()),
                static_cast<std::streamsize>(n_labels)))
    throw FormatError(labels_path + ": truncated labels at offset " +
                      std::to_string(loff));
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    if (label_bytes[i] > 9)
      throw FormatError(labels_path + ": label value " +
                        std::to_string(int(label_bytes[i])) +
                        " out of range at index " + std::to_string(i));
    out.labels[i] = label_bytes[i];
  }
  return out;
}

// divide by 255 only when values exceed the unit range, so applying the
// scaling twice changes nothing
template <class T>
void scale_unit_range(Matrix<T>& features) {
  T maxv = T{0};
  for (T v : features.data) maxv = std::max(maxv, std::abs(v));
  if (maxv <= T{1}) return;
  const T inv = T{1} / static_cast<T>(255);
  for (T& v : features.data) v *= inv;
}

// ---------------------------------------------------------------------------
// synthetic two-Gaussian task: positives N((+mu,0,..), I), negatives
// N((-mu,0,..), I); the Bayes rule is the sign of the first coordinate

template <class T>
RawDataset<T> gen_two_gaussians(std::int64_t n, std::size_t d, double mu,
                                double pi_p, std::uint64_t seed,
                                std::string_view stream = "gauss") {
  if (n <= 0) throw ConfigError("gen_two_gaussians: n must be positive");
  if (d == 0) throw ConfigError("gen_two_gaussians: d must be positive");
  const auto n_pos = static_cast<std::int64_t>(
      std::llround(pi_p * static_cast<double>(n)));
  RawDataset<T> out;
  out.features.resize(static_cast<std::size_t>(n), d);
  out.labels.assign(static_cast<std::size_t>(n), -1);
  for (std::int64_t i = 0; i < n_pos; ++i) out.labels[i] = +1;
  Rng rng(seed, stream);
  rng.shuffle(out.labels);
  for (std::int64_t i = 0; i < n; ++i) {
    T* row = out.features.data.data() + static_cast<std::size_t>(i) * d;
    const double mean0 = out.labels[i] > 0 ? mu : -mu;
    row[0] = static_cast<T>(mean0 + rng.normal());
    for (std::size_t j = 1; j < d; ++j) row[j] = static_cast<T>(rng.normal());
  }
  return out;
}

// ---------------------------------------------------------------------------
// PU split

enum class PuLabel : std::uint8_t { P = 0, U = 1 };

struct SplitManifest {
  std::string dataset;
  std::uint64_t seed = 0;
  std::int64_t n_p = 0;
  double pi_p = 0.5;
  std::string positive_rule;  // "odd_even" or "identity"
  std::int64_t holdout_per_class = 0;
  std::uint64_t holdout_digest = 0;
  bool u_includes_positives = false;
};

inline void save_manifest(const SplitManifest& m, const std::string& path) {
  char digest[32];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(m.holdout_digest));
  save_kv_file(path, {
                         {"dataset", m.dataset},
                         {"seed", std::to_string(m.seed)},
                         {"n_p", std::to_string(m.n_p)},
                         {"pi_p", kv_format_double(m.pi_p)},
                         {"positive_rule", m.positive_rule},
                         {"holdout_per_class",
                          std::to_string(m.holdout_per_class)},
                         {"holdout_digest", digest},
                         {"u_includes_positives",
                          m.u_includes_positives ? "1" : "0"},
                     });
}

inline SplitManifest load_manifest(const std::string& path) {
  KvMap kv = load_kv_file(path);
  const char* required[] = {"dataset",       "seed",
                            "n_p",           "pi_p",
                            "positive_rule", "holdout_per_class",
                            "holdout_digest", "u_includes_positives"};
  for (const char* k : required)
    if (!kv.count(k))
      throw FormatError(path + ": missing manifest key '" + std::string(k) +
                        "'");
  SplitManifest m;
  m.dataset = kv["dataset"];
  m.seed = std::stoull(kv["seed"]);
  m.n_p = std::stoll(kv["n_p"]);
  m.pi_p = std::stod(kv["pi_p"]);
  m.positive_rule = kv["positive_rule"];
  m.holdout_per_class = std::stoll(kv["holdout_per_class"]);
  m.holdout_digest = std::stoull(kv["holdout_digest"], nullptr, 16);
  m.u_includes_positives = kv["u_includes_positives"] == "1";
  return m;
}

inline int apply_positive_rule(const std::string& rule, int raw_label) {
  if (rule == "odd_even") return (raw_label % 2 == 1) ? +1 : -1;
  if (rule == "identity") {
    if (raw_label != +1 && raw_label != -1)
      throw FormatError("identity rule: label must be +-1, got " +
                        std::to_string(raw_label));
    return raw_label;
  }
  throw ConfigError("unknown positive rule '" + rule + "'");
}

// PU training data: features plus P/U tags. Oracle labels ride along for
// evaluation and audits only; loss code receives feature matrices and id
// lists, never this struct.
template <class T>
struct PuDataset {
  Matrix<T> features;
  std::vector<PuLabel> pu;
  std::vector<std::int8_t> oracle;  // +-1; empty when unavailable
  ClassPrior prior;
  SplitManifest manifest;

  std::size_t size() const { return pu.size(); }
  bool has_oracle() const { return !oracle.empty(); }

  std::vector<std::int64_t> ids_of(PuLabel which) const {
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < pu.size(); ++i)
      if (pu[i] == which) out.push_back(static_cast<std::int64_t>(i));
    return out;
  }

  void gather(std::span<const std::int64_t> ids, Matrix<T>& out) const {
    out.resize(ids.size(), features.cols);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const T* src = features.data.data() +
                     static_cast<std::size_t>(ids[r]) * features.cols;
      std::copy(src, src + features.cols,
                out.data.data() + r * features.cols);
    }
  }
};

template <class T>
struct SplitResult {
  PuDataset<T> train;
  LabeledSet<T> holdout;  // clean +-1 examples carved out before the split
  std::vector<std::string> warnings;
};

// Carve the clean holdout first, sample n_p of the remaining positives into
// D_P, and leave everything else unlabeled. The declared prior is
// cross-checked against the unlabeled pool's oracle positive fraction:
// beyond 0.01 is recorded as a warning, beyond 0.05 rejected.
template <class T>
SplitResult<T> make_pu_split(const RawDataset<T>& raw,
                             const std::string& positive_rule,
                             std::int64_t n_p, double pi_p, std::uint64_t seed,
                             std::int64_t holdout_per_class = 0,
                             bool u_includes_positives = false) {
  const std::size_t n = raw.labels.size();
  if (raw.features.rows != n)
    throw ShapeError("make_pu_split: features/labels row mismatch");
  std::vector<std::int8_t> sign(n);
  std::vector<std::int64_t> pos_ids, neg_ids;
  for (std::size_t i = 0; i < n; ++i) {
    sign[i] = static_cast<std::int8_t>(
        apply_positive_rule(positive_rule, raw.labels[i]));
    (sign[i] > 0 ? pos_ids : neg_ids).push_back(
        static_cast<std::int64_t>(i));
  }

  SplitResult<T> out;
  std::vector<char> in_holdout(n, 0);
  if (holdout_per_class > 0) {
    if (std::cmp_greater(holdout_per_class, pos_ids.size()) ||
        std::cmp_greater(holdout_per_class, neg_ids.size()))
      throw ConfigError("make_pu_split: holdout larger than a class");
    Rng rng(seed, "holdout");
    std::vector<std::int64_t> pos_pool = pos_ids, neg_pool = neg_ids;
    rng.shuffle(pos_pool);
    rng.shuffle(neg_pool);
    std::vector<std::int64_t> held;
    for (std::int64_t i = 0; i < holdout_per_class; ++i) {
      held.push_back(pos_pool[static_cast<std::size_t>(i)]);
      held.push_back(neg_pool[static_cast<std::size_t>(i)]);
    }
    std::sort(held.begin(), held.end());
    for (std::int64_t id : held) in_holdout[static_cast<std::size_t>(id)] = 1;
    out.holdout.x.resize(held.size(), raw.features.cols);
    out.holdout.labels.resize(held.size());
    for (std::size_t r = 0; r < held.size(); ++r) {
      const auto id = static_cast<std::size_t>(held[r]);
      std::copy(raw.features.data.data() + id * raw.features.cols,
                raw.features.data.data() + (id + 1) * raw.features.cols,
                out.holdout.x.data.data() + r * out.holdout.x.cols);
      out.holdout.labels[r] = sign[id];
    }
    out.train.manifest.holdout_digest =
        fnv1a64(held.data(), held.size() * sizeof(held[0]));
  }

  std::vector<std::int64_t> train_pos;
  for (std::int64_t id : pos_ids)
    if (!in_holdout[static_cast<std::size_t>(id)]) train_pos.push_back(id);
  if (n_p < 1 || std::cmp_greater(n_p, train_pos.size()))
    throw ConfigError("make_pu_split: n_p=" + std::to_string(n_p) +
                      " but only " + std::to_string(train_pos.size()) +
                      " positives available");
  Rng rng(seed, "psel");
  rng.shuffle(train_pos);
  std::vector<char> is_p(n, 0);
  for (std::int64_t k = 0; k < n_p; ++k)
    is_p[static_cast<std::size_t>(train_pos[static_cast<std::size_t>(k)])] = 1;

  PuDataset<T>& train = out.train;
  std::vector<std::int64_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_holdout[i]) continue;
    if (is_p[i] && u_includes_positives) {
      // labeled positives additionally appear in the unlabeled pool: keep
      // two copies, one tagged P and one tagged U
      kept.push_back(static_cast<std::int64_t>(i));
    }
    kept.push_back(static_cast<std::int64_t>(i));
  }
  train.features.resize(kept.size(), raw.features.cols);
  train.pu.resize(kept.size());
  train.oracle.resize(kept.size());
  std::vector<char> p_emitted(n, 0);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto id = static_cast<std::size_t>(kept[r]);
    std::copy(raw.features.data.data() + id * raw.features.cols,
              raw.features.data.data() + (id + 1) * raw.features.cols,
              train.features.data.data() + r * train.features.cols);
    train.oracle[r] = sign[id];
    if (is_p[id] && !p_emitted[id]) {
      train.pu[r] = PuLabel::P;
      p_emitted[id] = 1;
    } else {
      train.pu[r] = PuLabel::U;
    }
  }

  train.prior = ClassPrior(pi_p);
  std::int64_t u_total = 0, u_pos = 0;
  for (std::size_t r = 0; r < train.pu.size(); ++r)
    if (train.pu[r] == PuLabel::U) {
      ++u_total;
      if (train.oracle[r] > 0) ++u_pos;
    }
  if (u_total == 0) throw ConfigError("make_pu_split: empty unlabeled pool");
  const double u_frac = static_cast<double>(u_pos) /
                        static_cast<double>(u_total);
  const double drift = std::abs(u_frac - pi_p);
  if (drift > 0.05) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "make_pu_split: unlabeled positive fraction %.4f is more "
                  "than 0.05 from declared pi_p %.4f",
                  u_frac, pi_p);
    throw ConfigError(buf);
  }
  if (drift > 0.01) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "unlabeled positive fraction %.4f drifts %.4f from "
                  "declared pi_p %.4f",
                  u_frac, drift, pi_p);
    out.warnings.emplace_back(buf);
  }

  train.manifest.seed = seed;
  train.manifest.n_p = n_p;
  train.manifest.pi_p = pi_p;
  train.manifest.positive_rule = positive_rule;
  train.manifest.holdout_per_class = holdout_per_class;
  train.manifest.u_includes_positives = u_includes_positives;
  return out;
}

template <class T>
SplitResult<T> split_from_manifest(const RawDataset<T>& raw,
                                   const SplitManifest& m) {
  SplitResult<T> out =
      make_pu_split(raw, m.positive_rule, m.n_p, m.pi_p, m.seed,
                    m.holdout_per_class, m.u_includes_positives);
  if (m.holdout_per_class > 0 &&
      out.train.manifest.holdout_digest != m.holdout_digest)
    throw FormatError("split_from_manifest: holdout digest mismatch");
  out.train.manifest.dataset = m.dataset;
  return out;
}

// ---------------------------------------------------------------------------
// deterministic batch iteration

// visits each of [0, n) exactly once per epoch in a permutation that is a
// pure function of (seed, stream, epoch); the final short batch is kept
class BatchIterator {
 public:
  BatchIterator(std::uint64_t seed, std::string stream, std::int64_t n,
                std::size_t batch_size)
      : seed_(seed), stream_(std::move(stream)), n_(n), batch_(batch_size) {
    if (batch_ == 0) throw ConfigError("BatchIterator: zero batch size");
    if (n_ <= 0) throw ConfigError("BatchIterator: empty dataset");
  }

  void start_epoch(std::uint64_t epoch) {
    perm_ = keyed_permutation(seed_, stream_, epoch, n_);
    cursor_ = 0;
    epoch_ = epoch;
  }

  bool next(std::vector<std::int64_t>& out) {
    out.clear();
    if (cursor_ >= perm_.size()) return false;
    const std::size_t take = std::min(batch_, perm_.size() - cursor_);
    out.assign(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
               perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
    cursor_ += take;
    return true;
  }

  std::size_t batches_per_epoch() const {
    return (static_cast<std::size_t>(n_) + batch_ - 1) / batch_;
  }

  std::uint64_t epoch() const { return epoch_; }

 private:
  std::uint64_t seed_;
  std::string stream_;
  std::int64_t n_;
  std::size_t batch_;
  std::vector<std::int64_t> perm_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

// endless per-epoch sampler over an id list; each epoch re-derives its own
// permutation and reshuffles per cycle, so state never crosses epochs
class CyclingSampler {
 public:
  CyclingSampler(std::uint64_t seed, std::string stream,
                 std::vector<std::int64_t> ids)
      : seed_(seed), stream_(std::move(stream)), ids_(std::move(ids)) {
    if (ids_.empty()) throw ConfigError("CyclingSampler: empty id pool");
  }

  void start_epoch(std::uint64_t epoch) {
    epoch_ = epoch;
    cycle_ = 0;
    reshuffle();
  }

  void draw(std::size_t k, std::vector<std::int64_t>& out) {
    out.clear();
    while (out.size() < k) {
      if (cursor_ >= order_.size()) {
        ++cycle_;
        reshuffle();
      }
      out.push_back(ids_[static_cast<std::size_t>(order_[cursor_++])]);
    }
  }

 private:
  void reshuffle() {
    order_ = keyed_permutation(seed_, stream_, epoch_,
                               static_cast<std::int64_t>(ids_.size()), cycle_);
    cursor_ = 0;
  }

  std::uint64_t seed_;
  std::string stream_;
  std::vector<std::int64_t> ids_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t cycle_ = 0;
};

// ---------------------------------------------------------------------------
// labeled-set binary files (synthetic datasets on disk)

inline constexpr char kLabeledSetMagic[8] = {'S', 'P', 'D', 'A',
                                             'T', 'A', '0', '1'};

template <class T>
void save_labeled_set(const LabeledSet<T>& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kLabeledSetMagic, 8);
  const std::uint64_t n = set.x.rows, d = set.x.cols;
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&d), 8);
  std::vector<float> row(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) row[c] = static_cast<float>(set.x(r, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(d * sizeof(float)));
  }
  out.write(reinterpret_cast<const char*>(set.labels.data()),
            static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed for " + path);
}

template <class T>
LabeledSet<T> load_labeled_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kLabeledSetMagic))
    throw FormatError(path + ": bad labeled-set magic");
  std::uint64_t n = 0, d = 0;
  if (!in.read(reinterpret_cast<char*>(&n), 8) ||
      !in.read(reinterpret_cast<char*>(&d), 8))
    throw FormatError(path + ": truncated header");
  LabeledSet<T> set;
  set.x.resize(n, d);
  std::vector<float> row(d);
  for (std::uint64_t r = 0; r < n; ++r) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(d * sizeof(float))))
      throw FormatError(path + ": truncated features at row " +
                        std::to_string(r));
    for (std::uint64_t c = 0; c < d; ++c)
      set.x(r, c) = static_cast<T>(row[c]);
  }
  set.labels.resize(n);
  if (!in.read(reinterpret_cast<char*>(set.labels.data()),
               static_cast<std::streamsize>(n)))
    throw FormatError(path + ": truncated labels");
  return set;
}

}  // namespace selfpu
