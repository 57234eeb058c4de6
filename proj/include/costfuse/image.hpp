#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace costfuse {

/// Height x width x 3 image, 8 bits per channel, row-major with interleaved
/// R,G,B samples. data().size() == width * height * 3 always holds.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  /// Zero-filled (black) image.
  RasterImage(int width, int height);
  RasterImage(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t& at(int x, int y, int c) { return data_[offset(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return data_[offset(x, y, c)]; }

  void set_pixel(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const auto o = offset(x, y, 0);
    data_[o] = r;
    data_[o + 1] = g;
    data_[o + 2] = b;
  }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Bilinear resampling with pixel-centre alignment; samples outside the
/// source are clamped to the border. Same-size resize returns a copy.
RasterImage resize_image(const RasterImage& img, int width, int height);

/// Reads PNG or JPEG (detected from the file signature) as 8-bit RGB.
RasterImage read_image(const std::filesystem::path& path);

/// Lossless 8-bit RGB PNG. Output bytes depend only on the pixels.
void write_png(const RasterImage& img, const std::filesystem::path& path);

/// Resizes to width x height and flattens to a signal with entries in [0,1],
/// index (y * width + x) * 3 + c.
Eigen::VectorXd to_signal(const RasterImage& img, int width, int height);

}  // namespace costfuse
