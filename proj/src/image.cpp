#include "amq/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "amq/errors.hpp"
#include "amq/io.hpp"

namespace amq {

Image::Image(std::size_t width, std::size_t height, double fill)
    : width_(width), height_(height), pixels_(width * height, fill) {}

Image::Image(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != width_ * height_) {
    throw DomainError("image pixel count " + std::to_string(pixels_.size()) + " != " + std::to_string(width_) +
                      "x" + std::to_string(height_));
  }
}

Image normalize_intensity(const Image& image) {
  if (image.empty()) throw DomainError("normalize_intensity: empty image");
  const auto px = image.pixels();
  if (!std::all_of(px.begin(), px.end(), [](double v) { return std::isfinite(v); })) {
    throw DomainError("normalize_intensity: non-finite pixel");
  }
  const auto [lo_it, hi_it] = std::minmax_element(px.begin(), px.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  Image out(image.width(), image.height(), 0.5);
  if (range <= 0.0) return out;
  auto dst = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    dst[i] = std::clamp((px[i] - lo) / range, 0.0, 1.0);
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw DomainError("write_pgm: empty image");
  io::write_atomically(path, true, [&](std::ostream& out) {
    out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
    std::string bytes(image.size(), '\0');
    const auto px = image.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
      bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(px[i], 0.0, 1.0) * 255.0)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  });
}

namespace {

// Header tokenizer over an in-memory buffer; '#' starts a comment that runs
// to end of line.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& data) : data_(data) {}

  std::size_t next_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < data_.size() && std::isdigit(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (start == pos_) throw FormatError(std::string("pgm: expected ") + what + " at offset " + std::to_string(start));
    if (pos_ - start > 9) throw FormatError(std::string("pgm: ") + what + " too large");
    return std::stoul(data_.substr(start, pos_ - start));
  }

  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void consume_single_space() {
    if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_]))) {
      throw FormatError("pgm: missing separator before raster at offset " + std::to_string(pos_));
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& data_;
  std::size_t pos_ = 2;
};

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '2')) {
    throw FormatError("pgm: bad magic in " + path.string());
  }
  const bool binary = data[1] == '5';
  HeaderReader header(data);
  const std::size_t width = header.next_uint("width");
  const std::size_t height = header.next_uint("height");
  const std::size_t maxval = header.next_uint("maxval");
  if (width == 0 || height == 0) throw FormatError("pgm: zero dimension in " + path.string());
  if (maxval == 0 || maxval > 65535) throw FormatError("pgm: maxval out of range in " + path.string());

  std::vector<double> pixels(width * height);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (binary) {
    header.consume_single_space();
    const std::size_t bytes_per = maxval < 256 ? 1 : 2;
    const std::size_t offset = header.pos();
    if (data.size() - offset < pixels.size() * bytes_per) {
      throw FormatError("pgm: truncated raster in " + path.string() + " (have " +
                        std::to_string(data.size() - offset) + " bytes, need " +
                        std::to_string(pixels.size() * bytes_per) + ")");
    }
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      std::size_t v = static_cast<unsigned char>(data[offset + i * bytes_per]);
      if (bytes_per == 2) v = (v << 8) | static_cast<unsigned char>(data[offset + i * 2 + 1]);
      if (v > maxval) throw FormatError("pgm: sample exceeds maxval in " + path.string());
      pixels[i] = static_cast<double>(v) * scale;
    }
  } else {
    for (auto& p : pixels) {
      const std::size_t v = header.next_uint("sample");
      if (v > maxval) throw FormatError("pgm: sample exceeds maxval in " + path.string());
      p = static_cast<double>(v) * scale;
    }
  }
  return Image(width, height, std::move(pixels));
}

}  // namespace amq
