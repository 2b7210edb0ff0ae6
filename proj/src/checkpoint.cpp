#include "medsuggest/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <cstdio>
#include <string>
#include <vector>

namespace medsuggest {
namespace {

constexpr char kMagic[8] = {'M', 'S', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<char> bytes;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : bytes_(std::move(data)) {}
  std::uint64_t u64() { return take(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  const std::vector<char>& bytes() const { return bytes_; }
  void skip(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
    pos_ += n;
  }

 private:
  std::uint64_t take(int n) {
    if (pos_ + static_cast<std::size_t>(n) > bytes_.size()) throw CheckpointError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(kFormatVersion);
  w.u32(ckpt.tests_enabled ? 1u : 0u);
  w.u64(ckpt.step);
  const auto& c = ckpt.params.config();
  w.u64(c.input_dim);
  w.u64(c.encoder[0]);
  w.u64(c.encoder[1]);
  w.u64(c.decoder_hidden);
  for (auto n : c.head_out) w.u64(n);
  const auto values = ckpt.params.values();
  w.u64(values.size());
  for (double v : values) w.f64(v);
  w.u64(fnv1a(w.bytes.data(), w.bytes.size()));
  out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) + 8 || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  Reader r(std::move(data));
  r.skip(sizeof(kMagic));
  const auto version = r.u32();
  if (version != kFormatVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto flags = r.u32();
  Checkpoint ckpt;
  ckpt.tests_enabled = (flags & 1u) != 0;
  ckpt.step = r.u64();
  NetConfig c;
  c.input_dim = r.u64();
  c.encoder[0] = r.u64();
  c.encoder[1] = r.u64();
  c.decoder_hidden = r.u64();
  for (auto& n : c.head_out) n = r.u64();
  const auto count = r.u64();
  try {
    ckpt.params = Params(c);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid network config in checkpoint: ") + e.what());
  }
  if (count != ckpt.params.size()) throw CheckpointError("parameter count does not match network config");
  auto values = ckpt.params.mutable_values();
  for (auto& v : values) v = r.f64();
  const auto payload_end = r.pos();
  const auto expected = fnv1a(r.bytes().data(), payload_end);
  if (r.u64() != expected) throw CheckpointError("checkpoint checksum mismatch");
  if (r.pos() != r.size()) throw CheckpointError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  write_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

std::string checkpoint_fingerprint(const Checkpoint& ckpt) {
  std::ostringstream out;
  write_checkpoint(ckpt, out);
  const auto bytes = out.str();
  const auto h = fnv1a(bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace medsuggest
