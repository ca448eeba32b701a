#include "simplexlm/checkpoint.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

#include "simplexlm/errors.hpp"

namespace simplexlm {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic = {'S', 'L', 'M', 'C', 'K', 'P', 'T', 0};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  void tensor_data(const Tensor& t) {
    for (double v : t.values()) f64(v);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void tensor_data(Tensor& t) {
    need(t.size() * 8);
    for (double& v : t.values()) v = f64();
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view artifact_kind_name(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::kDiffusionModel: return "diffusion";
    case ArtifactKind::kClassifier: return "classifier";
    case ArtifactKind::kReferenceModel: return "reference";
  }
  return "unknown";
}

const std::string& Checkpoint::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  throw DataError("checkpoint lacks metadata key '" + std::string(key) + "'");
}

void Checkpoint::set_meta(std::string key, std::string value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  metadata.emplace_back(std::move(key), std::move(value));
}

std::size_t Checkpoint::meta_size(std::string_view key) const {
  const std::string& s = meta(key);
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("checkpoint metadata " + std::string(key) + " is not an integer: " + s);
  }
  return v;
}

double Checkpoint::meta_double(std::string_view key) const {
  const std::string& s = meta(key);
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("checkpoint metadata " + std::string(key) + " is not a number: " + s);
  }
  return v;
}

void Checkpoint::set_meta(std::string key, std::size_t value) {
  set_meta(std::move(key), std::to_string(value));
}

void Checkpoint::set_meta(std::string key, double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  set_meta(std::move(key), std::string(buf, res.ptr));
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text) {
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic);
  w.u32(Checkpoint::kFormatVersion);
  w.u32(static_cast<std::uint32_t>(c.kind));
  w.u64(c.vocab_hash);
  w.u64(c.config_hash);
  w.u64(c.seed);
  w.u64(c.step);
  w.str(c.rng_state);
  w.u32(static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(c.parameters.size()));
  for (std::size_t i = 0; i < c.parameters.size(); ++i) {
    const Tensor& t = c.parameters[i];
    w.str(c.parameters.name(i));
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.tensor_data(t);
  }
  w.u32(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    w.u64(c.optimizer->step);
    for (std::size_t i = 0; i < c.parameters.size(); ++i) {
      w.tensor_data(c.optimizer->m.at(i));
      w.tensor_data(c.optimizer->v.at(i));
    }
  }
  const std::uint64_t checksum = fnv1a(w.bytes());
  w.u64(checksum);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 12 ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  Reader r(bytes.subspan(kMagic.size()));
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kFormatVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + static_cast<std::size_t>(i)]) << (8 * i);
  }
  if (fnv1a(body) != stored) throw DataError("checkpoint checksum mismatch (corrupted file)");

  Checkpoint c;
  const std::uint32_t kind = r.u32();
  if (kind < 1 || kind > 3) throw DataError("unknown checkpoint kind " + std::to_string(kind));
  c.kind = static_cast<ArtifactKind>(kind);
  c.vocab_hash = r.u64();
  c.config_hash = r.u64();
  c.seed = r.u64();
  c.step = r.u64();
  c.rng_state = r.str();
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    c.metadata.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw DataError("implausible tensor rank in checkpoint");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    Tensor t(shape);
    r.tensor_data(t);
    c.parameters.add(std::move(name), std::move(t));
  }
  if (r.u32() == 1) {
    AdamWState opt = AdamWState::zeros_for(c.parameters);
    opt.step = r.u64();
    for (std::size_t i = 0; i < c.parameters.size(); ++i) {
      r.tensor_data(opt.m[i]);
      r.tensor_data(opt.v[i]);
    }
    c.optimizer = std::move(opt);
  }
  if (kMagic.size() + r.pos() != body.size()) throw DataError("trailing bytes in checkpoint");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<ArtifactKind> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  Checkpoint c = deserialize_checkpoint(bytes);
  if (expected && c.kind != *expected) {
    throw DataError(path.string() + " holds a " + std::string(artifact_kind_name(c.kind)) +
                    " checkpoint, expected " + std::string(artifact_kind_name(*expected)));
  }
  return c;
}

}  // namespace simplexlm
