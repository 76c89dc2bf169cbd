#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "ducat/error.hpp"
#include "ducat/mlp.hpp"

namespace ducat {

namespace {

constexpr std::array<char, 8> kMagic{'D', 'U', 'C', 'A', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kMaxWidth = 1u << 24;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string name) : buf_(std::move(data)), name_(std::move(name)) {}

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            "checkpoint " + name_ + " is truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  const char* raw(std::size_t n) {
    need(n);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.u32(static_cast<std::uint32_t>(model.head_mode()));
  for (auto v : model.dummy_permutation()) w.u32(static_cast<std::uint32_t>(v));
  w.u32(static_cast<std::uint32_t>(model.widths().size()));
  for (auto v : model.widths()) w.u32(static_cast<std::uint32_t>(v));
  for (const auto& layer : model.layers()) {
    for (double d : layer.weight.data()) w.f64(d);
    for (double d : layer.bias.data()) w.f64(d);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for writing");
  }
  out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed for " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());

  if (std::memcmp(r.raw(kMagic.size()), kMagic.data(), kMagic.size()) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, path.string() + ": bad magic");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::unsupported_version,
                          path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto c = r.u32();
  const auto head = r.u32();
  if (c < 2 || c > kMaxWidth || head > 1) {
    throw CheckpointError(CheckpointError::Kind::malformed, path.string() + ": bad header fields");
  }
  std::vector<std::size_t> pi(c);
  for (auto& v : pi) v = r.u32();
  const auto n_widths = r.u32();
  if (n_widths < 2 || n_widths > 1024) {
    throw CheckpointError(CheckpointError::Kind::malformed, path.string() + ": bad layer count");
  }
  std::vector<std::size_t> widths(n_widths);
  for (auto& v : widths) {
    v = r.u32();
    if (v == 0 || v > kMaxWidth) {
      throw CheckpointError(CheckpointError::Kind::malformed, path.string() + ": bad layer width");
    }
  }
  std::vector<MlpModel::Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in_w = widths[i], out_w = widths[i + 1];
    r.need((in_w * out_w + out_w) * 8);
    std::vector<double> w(in_w * out_w), b(out_w);
    for (double& d : w) d = r.f64();
    for (double& d : b) d = r.f64();
    layers.push_back({Tensor::from({out_w, in_w}, std::move(w), true),
                      Tensor::from({out_w}, std::move(b), true)});
  }
  if (!r.at_end()) {
    throw CheckpointError(CheckpointError::Kind::malformed, path.string() + ": trailing bytes");
  }
  try {
    return MlpModel::from_parts(std::move(widths), c, static_cast<HeadMode>(head), std::move(pi),
                                std::move(layers));
  } catch (const Error& e) {
    throw CheckpointError(CheckpointError::Kind::malformed, path.string() + ": " + e.what());
  }
}

}  // namespace ducat
