// checkpoint.hpp -- binary training checkpoints: little-endian, fixed magic,
// explicit shape headers, 32-bit floating parameters, whole-payload checksum.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "selfpu/distill.hpp"
#include "selfpu/errors.hpp"
#include "selfpu/mlp.hpp"
#include "selfpu/rng.hpp"
#include "selfpu/selfpaced.hpp"

namespace selfpu {

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'L', 'F',
                                             'P', 'U', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void put_bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void put_u8(std::uint8_t v) { put_bytes(&v, 1); }
  void put_u32(std::uint32_t v) { put_bytes(&v, 4); }
  void put_u64(std::uint64_t v) { put_bytes(&v, 8); }
  void put_i64(std::int64_t v) { put_bytes(&v, 8); }
  void put_f32(float v) { put_bytes(&v, 4); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t n, std::string origin)
      : p_(data), n_(n), origin_(std::move(origin)) {}

  void get_bytes(void* out, std::size_t n) {
    if (pos_ + n > n_)
      throw FormatError(origin_ + ": truncated at offset " +
                        std::to_string(pos_));
    std::memcpy(out, p_ + pos_, n);
    pos_ += n;
  }
  std::uint8_t get_u8() { std::uint8_t v; get_bytes(&v, 1); return v; }
  std::uint32_t get_u32() { std::uint32_t v; get_bytes(&v, 4); return v; }
  std::uint64_t get_u64() { std::uint64_t v; get_bytes(&v, 8); return v; }
  std::int64_t get_i64() { std::int64_t v; get_bytes(&v, 8); return v; }
  float get_f32() { float v; get_bytes(&v, 4); return v; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string origin_;
};

inline void write_model(ByteWriter& w, const Mlp<float>& m) {
  w.put_u32(static_cast<std::uint32_t>(m.layer_dims.size()));
  for (std::size_t d : m.layer_dims) w.put_u32(static_cast<std::uint32_t>(d));
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    for (float v : m.weights[l].data) w.put_f32(v);
    for (float v : m.biases[l]) w.put_f32(v);
  }
}

inline Mlp<float> read_model(ByteReader& r) {
  const std::uint32_t nd = r.get_u32();
  if (nd < 2 || nd > 64) throw FormatError("checkpoint: bad layer count");
  std::vector<std::size_t> dims(nd);
  for (auto& d : dims) d = r.get_u32();
  Mlp<float> m(dims);
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    for (float& v : m.weights[l].data) v = r.get_f32();
    for (float& v : m.biases[l]) v = r.get_f32();
  }
  return m;
}

inline void write_adam(ByteWriter& w, const AdamState<float>& s) {
  w.put_u64(s.step);
  w.put_f32(s.beta1);
  w.put_f32(s.beta2);
  w.put_f32(s.eps);
  w.put_u32(static_cast<std::uint32_t>(s.m_w.size()));
  for (std::size_t l = 0; l < s.m_w.size(); ++l) {
    w.put_u32(static_cast<std::uint32_t>(s.m_w[l].rows));
    w.put_u32(static_cast<std::uint32_t>(s.m_w[l].cols));
    for (float v : s.m_w[l].data) w.put_f32(v);
    for (float v : s.v_w[l].data) w.put_f32(v);
    for (float v : s.m_b[l]) w.put_f32(v);
    for (float v : s.v_b[l]) w.put_f32(v);
  }
}

inline AdamState<float> read_adam(ByteReader& r) {
  AdamState<float> s;
  s.step = r.get_u64();
  s.beta1 = r.get_f32();
  s.beta2 = r.get_f32();
  s.eps = r.get_f32();
  const std::uint32_t nl = r.get_u32();
  for (std::uint32_t l = 0; l < nl; ++l) {
    const std::uint32_t rows = r.get_u32();
    const std::uint32_t cols = r.get_u32();
    s.m_w.emplace_back(rows, cols);
    s.v_w.emplace_back(rows, cols);
    s.m_b.emplace_back(rows, 0.0f);
    s.v_b.emplace_back(rows, 0.0f);
    for (float& v : s.m_w.back().data) v = r.get_f32();
    for (float& v : s.v_w.back().data) v = r.get_f32();
    for (float& v : s.m_b.back()) v = r.get_f32();
    for (float& v : s.v_b.back()) v = r.get_f32();
  }
  return s;
}

inline void write_trusted(ByteWriter& w, const TrustedSet<float>& t) {
  w.put_i64(t.capacity_target);
  const auto entries = t.sorted_entries();
  w.put_u64(entries.size());
  for (const auto& [id, e] : entries) {
    w.put_i64(id);
    w.put_f32(e.soft_label_pos);
    w.put_u32(static_cast<std::uint32_t>(e.selected_at_epoch));
    w.put_u8(static_cast<std::uint8_t>(e.polarity));
  }
}

inline TrustedSet<float> read_trusted(ByteReader& r) {
  TrustedSet<float> t;
  t.capacity_target = r.get_i64();
  const std::uint64_t n = r.get_u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::int64_t id = r.get_i64();
    TrustedEntry<float> e;
    e.soft_label_pos = r.get_f32();
    e.selected_at_epoch = static_cast<int>(r.get_u32());
    e.polarity = static_cast<Polarity>(r.get_u8());
    t.entries[id] = e;
  }
  return t;
}

inline void write_teacher(ByteWriter& w, const TeacherState<float>& t) {
  w.put_u8(t.initialized ? 1 : 0);
  w.put_u8(static_cast<std::uint8_t>(t.mode));
  w.put_f32(t.beta);
  if (t.initialized) {
    write_model(w, t.theta_bar);
    write_model(w, t.prev_student);
  }
}

inline TeacherState<float> read_teacher(ByteReader& r) {
  TeacherState<float> t;
  t.initialized = r.get_u8() != 0;
  t.mode = static_cast<TeacherMode>(r.get_u8());
  t.beta = r.get_f32();
  if (t.initialized) {
    t.theta_bar = read_model(r);
    t.prev_student = read_model(r);
  }
  return t;
}

}  // namespace detail

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  int epochs_completed = 0;
  std::uint64_t seed = 0;
  Mlp<float> student1, student2;
  AdamState<float> opt1, opt2;
  TeacherState<float> teacher1, teacher2;
  TrustedSet<float> trusted1, trusted2;

  // randomness is re-derived from (seed, epoch); its digest is what loading
  // verifies against the run's configuration
  std::uint64_t rng_digest() const {
    std::uint64_t key[2] = {seed, static_cast<std::uint64_t>(epochs_completed)};
    return fnv1a64(key, sizeof(key));
  }
};

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  detail::ByteWriter w;
  w.put_u32(c.version);
  w.put_u32(static_cast<std::uint32_t>(c.epochs_completed));
  w.put_u64(c.seed);
  w.put_u64(c.rng_digest());
  w.put_u32(2);  // students
  detail::write_model(w, c.student1);
  detail::write_adam(w, c.opt1);
  detail::write_model(w, c.student2);
  detail::write_adam(w, c.opt2);
  detail::write_teacher(w, c.teacher1);
  detail::write_teacher(w, c.teacher2);
  detail::write_trusted(w, c.trusted1);
  detail::write_trusted(w, c.trusted2);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kCheckpointMagic, 8);
  const auto& payload = w.bytes();
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  const std::uint64_t digest = fnv1a64(payload.data(), payload.size());
  out.write(reinterpret_cast<const char*>(&digest), 8);
  if (!out) throw IoError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 8 + 8)
    throw FormatError(path + ": file too short for a checkpoint");
  if (!std::equal(bytes.begin(), bytes.begin() + 8, kCheckpointMagic))
    throw FormatError(path + ": bad checkpoint magic");
  const std::size_t payload_len = bytes.size() - 16;
  std::uint64_t stored_digest = 0;
  std::memcpy(&stored_digest, bytes.data() + 8 + payload_len, 8);
  const std::uint64_t digest = fnv1a64(bytes.data() + 8, payload_len);
  if (digest != stored_digest)
    throw FormatError(path + ": checksum mismatch (corrupt checkpoint)");

  detail::ByteReader r(bytes.data() + 8, payload_len, path);
  Checkpoint c;
  c.version = r.get_u32();
  if (c.version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(c.version));
  c.epochs_completed = static_cast<int>(r.get_u32());
  c.seed = r.get_u64();
  const std::uint64_t rng_digest = r.get_u64();
  const std::uint32_t n_students = r.get_u32();
  if (n_students != 2)
    throw FormatError(path + ": expected 2 students, found " +
                      std::to_string(n_students));
  c.student1 = detail::read_model(r);
  c.opt1 = detail::read_adam(r);
  c.student2 = detail::read_model(r);
  c.opt2 = detail::read_adam(r);
  c.teacher1 = detail::read_teacher(r);
  c.teacher2 = detail::read_teacher(r);
  c.trusted1 = detail::read_trusted(r);
  c.trusted2 = detail::read_trusted(r);
  if (rng_digest != c.rng_digest())
    throw FormatError(path + ": generator state digest mismatch");
  return c;
}

}  // namespace selfpu
