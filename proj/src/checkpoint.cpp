#include "cdmpo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cdmpo {
namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) { out_ += s; }
  std::string take() { return std::move(out_); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() { return std::bit_cast<double>(get_le(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw IoError("checkpoint truncated");
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kNetwork = 0;
constexpr std::uint32_t kBlob = 1;
// Guards against absurd allocations from a corrupted shape table.
constexpr std::uint64_t kMaxLayerWidth = 1u << 20;

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(std::string(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.networks.size() + ckpt.blobs.size()));
  for (const auto& [name, net] : ckpt.networks) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(kNetwork);
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
      w.u64(l.in);
      w.u64(l.out);
      w.u32(static_cast<std::uint32_t>(l.activation));
    }
    for (const auto& l : net.layers) {
      for (double v : l.weight) w.f64(v);
      for (double v : l.bias) w.f64(v);
    }
  }
  for (const auto& [name, blob] : ckpt.blobs) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(kBlob);
    w.u64(blob.size());
    w.bytes(blob);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw IoError("not a checkpoint: bad magic");
  }
  r.bytes(sizeof(kCheckpointMagic));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t sections = r.u32();
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t kind = r.u32();
    if (kind == kNetwork) {
      MlpParams net;
      net.layers.resize(r.u32());
      for (auto& l : net.layers) {
        l.in = r.u64();
        l.out = r.u64();
        const std::uint32_t act = r.u32();
        if (l.in == 0 || l.out == 0 || l.in > kMaxLayerWidth || l.out > kMaxLayerWidth || act > 2) {
          throw IoError("checkpoint shape table is corrupt");
        }
        l.activation = static_cast<Activation>(act);
      }
      for (std::size_t k = 1; k < net.layers.size(); ++k) {
        if (net.layers[k].in != net.layers[k - 1].out) throw IoError("checkpoint layers do not compose");
      }
      for (auto& l : net.layers) {
        l.weight.resize(l.in * l.out);
        l.bias.resize(l.out);
        for (double& v : l.weight) v = r.f64();
        for (double& v : l.bias) v = r.f64();
      }
      ckpt.networks.emplace(name, std::move(net));
    } else if (kind == kBlob) {
      const std::uint64_t n = r.u64();
      ckpt.blobs.emplace(name, r.bytes(n));
    } else {
      throw IoError("unknown checkpoint section kind " + std::to_string(kind));
    }
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace cdmpo
