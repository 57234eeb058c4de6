#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "costfuse/image.hpp"

namespace costfuse::synth {

enum class Subtype { color, shape, texture };

std::string_view to_string(Subtype s);
Subtype parse_subtype(std::string_view s);
inline constexpr std::array<Subtype, 3> kSubtypes{Subtype::color, Subtype::shape, Subtype::texture};

/// Fixed class orderings. Texture classes are data-defined (lexicographic
/// directory order), so they have no fixed table here.
const std::vector<std::string>& color_labels();
const std::vector<std::string>& shape_labels();

struct ClassSpec {
  Subtype subtype;
  std::string label;
  int index;
};

/// Throws InvalidClassError for labels outside the fixed tables.
ClassSpec color_class(std::string_view label);
ClassSpec shape_class(std::string_view label);

struct ChannelRange {
  int lo;
  int hi;
};
using ColorRange = std::array<ChannelRange, 3>;

struct ColorOptions {
  /// Reproduce the literal red rule (G and B unconstrained).
  bool literal_red = false;
};

/// Per-class (R,G,B) sampling ranges.
ColorRange color_range(std::string_view label, const ColorOptions& opts = {});

/// Every pixel drawn independently and uniformly from the class ranges.
RasterImage gen_color_image(std::string_view label, std::uint64_t seed, int size,
                            const ColorOptions& opts = {});

struct Point {
  double x;
  double y;
};

struct Rgb {
  std::uint8_t r;
  std::uint8_t g;
  std::uint8_t b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Sampled outline. Circles use the exact centre/radius; every other shape is
/// a polyline (closed for polygons and ellipses, open for lines).
struct ShapeGeometry {
  std::string label;
  std::vector<Point> vertices;
  bool closed = true;
  bool is_circle = false;
  Point center{};
  double radius = 0.0;
  int thickness = 1;
  Rgb color{};
  std::string color_class;
};

/// Smallest canvas that fits every shape class under the geometry rules.
inline constexpr int kMinShapeSize = 32;

ShapeGeometry sample_shape(std::string_view label, std::uint64_t seed, int size);

/// Pixel (x, y) is lit iff the distance from its centre to the outline is at
/// most thickness / 2. Everything else stays (0,0,0).
RasterImage render_shape(const ShapeGeometry& shape, int size);

RasterImage gen_shape_image(std::string_view label, std::uint64_t seed, int size);

/// Procedural texture families standing in for an external texture corpus
/// when none is available (47 classes, names sort in generation order).
const std::vector<std::string>& texture_standin_labels();
RasterImage gen_texture_standin_image(std::string_view label, std::uint64_t seed, int size);

struct ManifestEntry {
  std::filesystem::path path;
  Subtype subtype;
  std::string label;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  int image_size = 0;
};

/// CSV with header `path,subtype,label`. Paths are written relative to the
/// manifest's directory and resolved against it on read.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& file);
DatasetManifest read_manifest(const std::filesystem::path& file);

/// Per-image seed: hash(master, subtype, class index, image index).
std::uint64_t image_seed(std::uint64_t master, Subtype subtype, int class_index, int image_index);

/// Writes per_class PNGs per class under out_dir/<subtype>/<label>/ and
/// returns the manifest (not written to disk; see write_manifest).
DatasetManifest gen_dataset(Subtype subtype, int per_class, std::uint64_t seed, int size,
                            const std::filesystem::path& out_dir, const ColorOptions& opts = {});

/// Writes a DTD-style tree root/<label>/<index>.png of procedural textures
/// using the first `classes` stand-in labels.
void gen_texture_standin_dir(int classes, int per_class, std::uint64_t seed, int size,
                             const std::filesystem::path& root);

struct IngestReport {
  std::size_t ingested = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Reads root/<class>/<image> (PNG or JPEG), resizes to size x size and
/// writes the results as PNG under out_dir/texture/<class>/. Unreadable files
/// are skipped and counted in the report.
DatasetManifest ingest_texture_dir(const std::filesystem::path& root, int size,
                                   const std::filesystem::path& out_dir, IngestReport* report = nullptr);

}  // namespace costfuse::synth
