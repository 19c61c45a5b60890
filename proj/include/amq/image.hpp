#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace amq {

// Single-channel intensity image, row-major, values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height, double fill = 0.0);
  Image(std::size_t width, std::size_t height, std::vector<double> pixels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  double& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  std::span<double> pixels() noexcept { return pixels_; }
  std::span<const double> pixels() const noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> pixels_;
};

// Min-max rescale onto [0, 1]. A constant image maps to all 0.5.
// Throws DomainError on an empty image or non-finite pixels.
Image normalize_intensity(const Image& image);

// 8-bit binary graymap ("P5", maxval 255); each pixel is stored as
// round(clamp(x, 0, 1) * 255).
void write_pgm(const std::filesystem::path& path, const Image& image);

// Reads binary (P5) or plain (P2) graymaps with maxval up to 65535 and
// scales samples by 1/maxval. Throws IoError if the file cannot be opened
// and FormatError on malformed contents.
Image read_pgm(const std::filesystem::path& path);

}  // namespace amq
