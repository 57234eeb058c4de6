#include "costfuse/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <csetjmp>
#include <fstream>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "costfuse/error.hpp"

namespace costfuse {

RasterImage::RasterImage(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw ValidationError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
  data_.assign(static_cast<std::size_t>(width) * height * kChannels, 0);
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) throw ValidationError("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height * kChannels) {
    throw ValidationError("image buffer holds " + std::to_string(data_.size()) + " bytes, expected " +
                          std::to_string(static_cast<std::size_t>(width) * height * kChannels));
  }
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

// Source taps for each destination coordinate along one axis.
std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    taps[i] = {lo, std::min(lo + 1, src - 1), s - lo};
  }
  return taps;
}

}  // namespace

RasterImage resize_image(const RasterImage& img, int width, int height) {
  if (width < 1 || height < 1) throw ValidationError("resize target must be at least 1x1");
  if (img.empty()) throw ValidationError("cannot resize an empty image");
  if (width == img.width() && height == img.height()) return img;

  const auto xs = bilinear_taps(img.width(), width);
  const auto ys = bilinear_taps(img.height(), height);
  RasterImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const auto& ty = ys[y];
    for (int x = 0; x < width; ++x) {
      const auto& tx = xs[x];
      for (int c = 0; c < RasterImage::kChannels; ++c) {
        const double top = (1.0 - tx.frac) * img.at(tx.lo, ty.lo, c) + tx.frac * img.at(tx.hi, ty.lo, c);
        const double bot = (1.0 - tx.frac) * img.at(tx.lo, ty.hi, c) + tx.frac * img.at(tx.hi, ty.hi, c);
        const double v = (1.0 - ty.frac) * top + ty.frac * bot;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Eigen::VectorXd to_signal(const RasterImage& img, int width, int height) {
  const RasterImage r = resize_image(img, width, height);
  const auto px = r.data();
  Eigen::VectorXd s(static_cast<Eigen::Index>(px.size()));
  for (std::size_t i = 0; i < px.size(); ++i) s[static_cast<Eigen::Index>(i)] = px[i] / 255.0;
  return s;
}

namespace {

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

RasterImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  return RasterImage(static_cast<int>(image.width), static_cast<int>(image.height), std::move(buf));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

RasterImage read_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> buf;
  int width = 0;
  int height = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("cannot decode JPEG '" + path.string() + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  buf.resize(static_cast<std::size_t>(width) * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return RasterImage(width, height, std::move(buf));
}

}  // namespace

RasterImage read_image(const std::filesystem::path& path) {
  std::array<unsigned char, 8> magic{};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    in.read(reinterpret_cast<char*>(magic.data()), magic.size());
    if (in.gcount() < 3) throw IoError("'" + path.string() + "' is too short to be an image");
  }
  if (png_sig_cmp(magic.data(), 0, magic.size()) == 0) return read_png(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) return read_jpeg(path);
  throw IoError("'" + path.string() + "' is neither PNG nor JPEG");
}

void write_png(const RasterImage& img, const std::filesystem::path& path) {
  if (img.empty()) throw ValidationError("cannot write an empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data().data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG '" + path.string() + "': " + msg);
  }
}

}  // namespace costfuse
