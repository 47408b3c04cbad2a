#include "syndiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace syndiff {

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'N', 'D', 'I', 'F', 'F', '1'};
// Guards against absurd allocations from corrupt files.
constexpr std::uint32_t kMaxCount = 1u << 28;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t count(const char* what) {
    const auto v = u32(what);
    if (v > kMaxCount) fail(std::string(what) + " too large: " + std::to_string(v));
    return v;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& msg) const { fail(msg, pos_); }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw CheckpointError(path_ + ": " + msg + " at byte " + std::to_string(at));
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
  }
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(ckpt.header.size()));
  for (auto v : ckpt.header) put_u32(out, v);
  put_u32(out, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<std::uint32_t>(r.value.rank()));
    for (int d : r.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(path.string() + ": cannot open for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError(path.string() + ": write failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(path.string() + ": cannot open for reading");
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in(std::move(data), path.string());
  if (in.bytes(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) in.fail("bad magic", 0);

  Checkpoint ckpt;
  const auto header_count = in.count("header count");
  for (std::uint32_t i = 0; i < header_count; ++i) ckpt.header.push_back(in.u32("header value"));
  const auto record_count = in.count("record count");
  for (std::uint32_t r = 0; r < record_count; ++r) {
    const auto name_len = in.count("name length");
    auto name = in.bytes(name_len, "name");
    const auto rank = in.u32("rank");
    if (rank > 8) in.fail("rank " + std::to_string(rank) + " too large");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = in.count("dimension");
      shape.push_back(static_cast<int>(dim));
      numel *= dim;
      if (numel > kMaxCount) in.fail("record too large");
    }
    std::vector<float> values(numel);
    for (auto& v : values) v = std::bit_cast<float>(in.u32("payload"));
    ckpt.records.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (!in.at_end()) in.fail("trailing bytes");
  return ckpt;
}

void append_records(Checkpoint& ckpt, const std::string& prefix, const ParameterSet<float>& params) {
  for (const auto& p : params.entries()) ckpt.records.push_back({prefix + p.name, p.value.detach()});
}

void restore_records(const Checkpoint& ckpt, const std::string& prefix, const ParameterSet<float>& params) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& r : ckpt.records) by_name.emplace(r.name, &r.value);
  for (const auto& p : params.entries()) {
    auto it = by_name.find(prefix + p.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint has no record " + prefix + p.name);
    const Tensor& src = *it->second;
    if (src.shape() != p.value.shape())
      throw CheckpointError("record " + prefix + p.name + " has shape " + shape_str(src.shape()) + ", expected " +
                            shape_str(p.value.shape()));
    Tensor dst = p.value;
    auto out = dst.mutable_data();
    std::copy(src.data().begin(), src.data().end(), out.begin());
  }
}

}  // namespace syndiff
