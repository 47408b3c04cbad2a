#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include "syndiff/data.hpp"

namespace syndiff {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageFormatError(path.string() + ": cannot open for reading");
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ImageFormatError(path.string() + ": cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ImageFormatError(path.string() + ": write failed");
}

[[noreturn]] void parse_error(const fs::path& path, std::size_t offset, const std::string& msg) {
  throw ImageFormatError(path.string() + ": " + msg + " at byte " + std::to_string(offset));
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderParser {
 public:
  HeaderParser(const std::string& bytes, const fs::path& path) : b_(bytes), path_(path) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (is_space(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long long v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1 << 30) parse_error(path_, start, std::string(what) + " out of range");
      ++pos_;
    }
    if (pos_ == start) parse_error(path_, start, std::string("expected ") + what);
    return static_cast<int>(v);
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  const std::string& b_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

float from_file_range(unsigned v, int maxval) { return static_cast<float>(2.0 * v / maxval - 1.0); }

unsigned to_file_range(float v, int maxval) {
  const double u = std::clamp((static_cast<double>(v) + 1.0) * 0.5, 0.0, 1.0);
  return static_cast<unsigned>(std::lround(u * maxval));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

}  // namespace

PgmFile read_pgm(const fs::path& path) {
  const std::string b = read_file(path);
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') parse_error(path, 0, "missing P5 magic");
  HeaderParser p(b, path);
  p.advance();
  p.advance();
  if (p.pos() < b.size() && !is_space(b[p.pos()]) && b[p.pos()] != '#')
    parse_error(path, p.pos(), "expected whitespace after magic");
  const int width = p.number("width");
  const int height = p.number("height");
  const std::size_t maxval_at = p.pos();
  const int maxval = p.number("maxval");
  if (width <= 0 || height <= 0) parse_error(path, maxval_at, "image dimensions must be positive");
  if (maxval <= 0 || maxval > 65535) parse_error(path, maxval_at, "maxval must be in 1..65535");
  if (p.pos() >= b.size() || !is_space(b[p.pos()])) parse_error(path, p.pos(), "expected whitespace after maxval");
  const std::size_t data_at = p.pos() + 1;
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (b.size() - data_at < count * bytes_per)
    parse_error(path, b.size(), "truncated payload: expected " + std::to_string(count * bytes_per) + " bytes");

  std::vector<float> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned v;
    if (bytes_per == 1) {
      v = static_cast<unsigned char>(b[data_at + i]);
    } else {
      v = (static_cast<unsigned>(static_cast<unsigned char>(b[data_at + 2 * i])) << 8) |
          static_cast<unsigned char>(b[data_at + 2 * i + 1]);
    }
    if (v > static_cast<unsigned>(maxval))
      parse_error(path, data_at + i * bytes_per, "sample " + std::to_string(v) + " exceeds maxval");
    pixels[i] = from_file_range(v, maxval);
  }
  return {Image(height, width, std::move(pixels)), maxval};
}

Image load_pgm(const fs::path& path) { return read_pgm(path).image; }

void save_pgm(const fs::path& path, const Image& image, int maxval) {
  if (maxval != 255 && maxval != 65535) throw std::invalid_argument("PGM maxval must be 255 or 65535");
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" +
                    std::to_string(maxval) + "\n";
  for (float v : image.pixels) {
    const unsigned q = to_file_range(v, maxval);
    if (maxval > 255) out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xFF));
  }
  write_file(path, out);
}

Image load_f32(const fs::path& path) {
  const std::string b = read_file(path);
  if (b.size() < 16) parse_error(path, b.size(), "truncated header");
  if (b.compare(0, 4, "F32I") != 0) parse_error(path, 0, "missing F32I magic");
  const std::uint32_t h = get_u32(b, 4), w = get_u32(b, 8);
  if (h == 0 || w == 0 || h > (1u << 15) || w > (1u << 15)) parse_error(path, 4, "bad dimensions");
  const std::size_t count = static_cast<std::size_t>(h) * w;
  if (b.size() - 16 < count * 4) parse_error(path, b.size(), "truncated payload");
  if (b.size() - 16 > count * 4) parse_error(path, 16 + count * 4, "trailing bytes");
  std::vector<float> pixels(count);
  for (std::size_t i = 0; i < count; ++i) pixels[i] = std::bit_cast<float>(get_u32(b, 16 + 4 * i));
  return Image(static_cast<int>(h), static_cast<int>(w), std::move(pixels));
}

void save_f32(const fs::path& path, const Image& image) {
  std::string out = "F32I";
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, 0);
  for (float v : image.pixels) put_u32(out, std::bit_cast<std::uint32_t>(v));
  write_file(path, out);
}

Image load_image(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pgm") return load_pgm(path);
  if (ext == ".f32") return load_f32(path);
  throw ImageFormatError(path.string() + ": unsupported extension '" + ext + "' (expected .pgm or .f32)");
}

void save_image(const fs::path& path, const Image& image) {
  const auto ext = path.extension().string();
  if (ext == ".pgm") return save_pgm(path, image);
  if (ext == ".f32") return save_f32(path, image);
  throw ImageFormatError(path.string() + ": unsupported extension '" + ext + "' (expected .pgm or .f32)");
}

// ---------------------------------------------------------------------------
// Dataset directories

namespace {

const char* const kSplitDirs[] = {"trainA", "trainB", "evalA", "evalB"};

std::string train_name(int index) {
  std::string digits = std::to_string(index);
  return "img_" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits + ".pgm";
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ImageFormatError(dir.string() + ": missing dataset directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".f32")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Image> load_all(const fs::path& dir) {
  std::vector<Image> out;
  for (const auto& p : image_files(dir)) out.push_back(load_image(p));
  return out;
}

}  // namespace

void write_dataset(const fs::path& dir, const ToyDataset& dataset) {
  std::error_code ec;
  for (const char* sub : kSplitDirs) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw ImageFormatError((dir / sub).string() + ": " + ec.message());
  }
  for (std::size_t i = 0; i < dataset.train_a.size(); ++i)
    save_pgm(dir / "trainA" / train_name(static_cast<int>(i)), dataset.train_a[i].image);
  for (std::size_t i = 0; i < dataset.train_b.size(); ++i)
    save_pgm(dir / "trainB" / train_name(static_cast<int>(i)), dataset.train_b[i].image);
  for (std::size_t i = 0; i < dataset.eval_a.size(); ++i) {
    save_pgm(dir / "evalA" / (*dataset.eval_a[i].pair_id + ".pgm"), dataset.eval_a[i].image);
    save_pgm(dir / "evalB" / (*dataset.eval_b[i].pair_id + ".pgm"), dataset.eval_b[i].image);
  }
}

UnpairedPools read_training_pools(const fs::path& dir) {
  auto a = load_all(dir / "trainA");
  auto b = load_all(dir / "trainB");
  if (a.empty()) throw ImageFormatError((dir / "trainA").string() + ": no images");
  if (b.empty()) throw ImageFormatError((dir / "trainB").string() + ": no images");
  return UnpairedPools(std::move(a), std::move(b));
}

std::vector<EvalPair> read_eval_pairs(const fs::path& dir) {
  const auto files_a = image_files(dir / "evalA");
  const auto files_b = image_files(dir / "evalB");
  std::set<std::string> names_b;
  for (const auto& p : files_b) names_b.insert(p.filename().string());
  std::vector<EvalPair> out;
  for (const auto& pa : files_a) {
    const auto name = pa.filename().string();
    if (!names_b.count(name)) throw ImageFormatError((dir / "evalB" / name).string() + ": missing eval partner");
    out.push_back({pa.stem().string(), load_image(pa), load_image(dir / "evalB" / name)});
    names_b.erase(name);
  }
  if (!names_b.empty())
    throw ImageFormatError((dir / "evalA" / *names_b.begin()).string() + ": missing eval partner");
  if (out.empty()) throw ImageFormatError((dir / "evalA").string() + ": no eval pairs");
  return out;
}

}  // namespace syndiff
