#include "costfuse/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <unordered_map>

#include "costfuse/csv.hpp"
#include "costfuse/error.hpp"
#include "costfuse/parallel.hpp"
#include "costfuse/rng.hpp"

namespace costfuse::synth {

namespace fs = std::filesystem;
using std::numbers::pi;

std::string_view to_string(Subtype s) {
  switch (s) {
    case Subtype::color:
      return "color";
    case Subtype::shape:
      return "shape";
    case Subtype::texture:
      return "texture";
  }
  return "?";
}

Subtype parse_subtype(std::string_view s) {
  if (s == "color") return Subtype::color;
  if (s == "shape") return Subtype::shape;
  if (s == "texture") return Subtype::texture;
  throw ValidationError("unknown subtype '" + std::string(s) + "' (expected color, shape or texture)");
}

const std::vector<std::string>& color_labels() {
  static const std::vector<std::string> labels{"red",   "green", "blue",  "yellow", "magenta",
                                               "cyan",  "black", "white", "brown",  "orange"};
  return labels;
}

const std::vector<std::string>& shape_labels() {
  static const std::vector<std::string> labels{"lines",         "rectangle", "circle", "ellipse",
                                               "quadrilateral", "pentagon",  "hexagon"};
  return labels;
}

namespace {

ClassSpec find_class(Subtype subtype, const std::vector<std::string>& table, std::string_view label) {
  const auto it = std::find(table.begin(), table.end(), label);
  if (it == table.end()) {
    throw InvalidClassError("unknown " + std::string(to_string(subtype)) + " class '" + std::string(label) + "'");
  }
  return {subtype, std::string(label), static_cast<int>(it - table.begin())};
}

}  // namespace

ClassSpec color_class(std::string_view label) { return find_class(Subtype::color, color_labels(), label); }
ClassSpec shape_class(std::string_view label) { return find_class(Subtype::shape, shape_labels(), label); }

ColorRange color_range(std::string_view label, const ColorOptions& opts) {
  constexpr ChannelRange hi{200, 255};
  constexpr ChannelRange lo{0, 120};
  switch (color_class(label).index) {
    case 0:
      return opts.literal_red ? ColorRange{hi, {0, 255}, {0, 255}} : ColorRange{hi, lo, lo};
    case 1:
      return {lo, hi, lo};
    case 2:
      return {lo, lo, hi};
    case 3:
      return {hi, hi, lo};
    case 4:
      return {hi, lo, hi};
    case 5:
      return {lo, hi, hi};
    case 6:
      return {ChannelRange{0, 55}, ChannelRange{0, 55}, ChannelRange{0, 55}};
    case 7:
      return {hi, hi, hi};
    case 8:
      return {ChannelRange{100, 160}, ChannelRange{40, 90}, ChannelRange{0, 50}};
    default:
      return {hi, ChannelRange{100, 160}, ChannelRange{0, 60}};
  }
}

namespace {

Rgb sample_color(Rng& rng, const ColorRange& range) {
  return {static_cast<std::uint8_t>(rng.uniform_int(range[0].lo, range[0].hi)),
          static_cast<std::uint8_t>(rng.uniform_int(range[1].lo, range[1].hi)),
          static_cast<std::uint8_t>(rng.uniform_int(range[2].lo, range[2].hi))};
}

}  // namespace

RasterImage gen_color_image(std::string_view label, std::uint64_t seed, int size, const ColorOptions& opts) {
  const ColorRange range = color_range(label, opts);
  if (size < 1) throw ValidationError("image size must be >= 1");
  Rng rng(derive_seed(seed, "color", label));
  RasterImage img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Rgb c = sample_color(rng, range);
      img.set_pixel(x, y, c.r, c.g, c.b);
    }
  }
  return img;
}

namespace {

// Places `offsets` (relative to an unknown centre) so every vertex keeps
// `margin` pixels from the canvas border.
std::vector<Point> place(Rng& rng, const std::vector<Point>& offsets, double margin, int size) {
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  for (const auto& p : offsets) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double cx_lo = margin - min_x, cx_hi = size - 1 - margin - max_x;
  const double cy_lo = margin - min_y, cy_hi = size - 1 - margin - max_y;
  if (cx_lo > cx_hi + 1e-9 || cy_lo > cy_hi + 1e-9) {
    throw GenerationError("shape does not fit a " + std::to_string(size) + "px canvas");
  }
  const double cx = rng.uniform(cx_lo, std::max(cx_lo, cx_hi));
  const double cy = rng.uniform(cy_lo, std::max(cy_lo, cy_hi));
  std::vector<Point> out;
  out.reserve(offsets.size());
  for (const auto& p : offsets) out.push_back({cx + p.x, cy + p.y});
  return out;
}

std::vector<Point> polygon_offsets(const std::vector<double>& angles, const std::vector<double>& radii) {
  std::vector<Point> pts;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    pts.push_back({radii[i] * std::cos(angles[i]), radii[i] * std::sin(angles[i])});
  }
  return pts;
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

constexpr int kEllipseSegments = 720;

}  // namespace

ShapeGeometry sample_shape(std::string_view label, std::uint64_t seed, int size) {
  const ClassSpec cls = shape_class(label);
  if (size < kMinShapeSize) {
    throw GenerationError("shape canvas must be at least " + std::to_string(kMinShapeSize) + "px, got " +
                          std::to_string(size));
  }
  Rng rng(derive_seed(seed, "shape", label));
  ShapeGeometry g;
  g.label = cls.label;
  g.thickness = static_cast<int>(rng.uniform_int(1, 5));
  const auto& colors = color_labels();
  g.color_class = colors[static_cast<std::size_t>(rng.uniform_int(0, 9))];
  do {
    g.color = sample_color(rng, color_range(g.color_class));
  } while (g.color == Rgb{0, 0, 0});

  const double margin = 3.0 + g.thickness / 2.0;
  const double r_max = size / 2.0 - 6.0;

  switch (cls.index) {
    case 0: {  // lines
      const double theta = rng.uniform(0.0, pi);
      const double avail = size - 1 - 2 * margin;
      const double fit = avail / std::max(std::abs(std::cos(theta)), std::abs(std::sin(theta)));
      const double len = rng.uniform(20.0, std::max(20.0, std::min(0.8 * size, fit)));
      const double hx = 0.5 * len * std::cos(theta), hy = 0.5 * len * std::sin(theta);
      g.vertices = place(rng, {{-hx, -hy}, {hx, hy}}, margin, size);
      g.closed = false;
      break;
    }
    case 1: {  // rectangle
      const double radius = rng.uniform(10.0, r_max);
      const double phi = rng.uniform(pi / 12, 5 * pi / 12);
      const double rot = rng.uniform(0.0, pi);
      g.vertices = place(rng,
                         polygon_offsets({rot + phi, rot + pi - phi, rot + pi + phi, rot + 2 * pi - phi},
                                         std::vector<double>(4, radius)),
                         margin, size);
      break;
    }
    case 2: {  // circle
      g.is_circle = true;
      g.radius = rng.uniform(10.0, r_max);
      const auto c = place(rng, {{-g.radius, -g.radius}, {g.radius, g.radius}}, margin, size);
      g.center = {c[0].x + g.radius, c[0].y + g.radius};
      break;
    }
    case 3: {  // ellipse
      const double a = rng.uniform(10.0, r_max);
      const double b = rng.uniform(10.0, r_max);
      const double rot = rng.uniform(0.0, pi);
      std::vector<Point> offsets;
      offsets.reserve(kEllipseSegments);
      for (int i = 0; i < kEllipseSegments; ++i) {
        const double t = 2 * pi * i / kEllipseSegments;
        const double ex = a * std::cos(t), ey = b * std::sin(t);
        offsets.push_back({ex * std::cos(rot) - ey * std::sin(rot), ex * std::sin(rot) + ey * std::cos(rot)});
      }
      g.vertices = place(rng, offsets, margin, size);
      break;
    }
    case 4: {  // quadrilateral: jittered corners at jittered radii
      const double radius = rng.uniform(10.0, r_max);
      const double rot = rng.uniform(0.0, pi / 2);
      std::vector<double> angles, radii;
      for (int i = 0; i < 4; ++i) {
        angles.push_back(rot + i * pi / 2 + rng.uniform(-pi / 6, pi / 6));
        radii.push_back(rng.uniform(0.6 * radius, radius));
      }
      g.vertices = place(rng, polygon_offsets(angles, radii), margin, size);
      break;
    }
    default: {  // regular pentagon / hexagon
      const int n = cls.index == 5 ? 5 : 6;
      const double radius = rng.uniform(10.0, r_max);
      const double rot = rng.uniform(0.0, 2 * pi / n);
      std::vector<double> angles;
      for (int i = 0; i < n; ++i) angles.push_back(rot + 2 * pi * i / n);
      g.vertices = place(rng, polygon_offsets(angles, std::vector<double>(n, radius)), margin, size);
      break;
    }
  }
  return g;
}

RasterImage render_shape(const ShapeGeometry& shape, int size) {
  RasterImage img(size, size);
  const double half = shape.thickness / 2.0;
  auto paint_box = [&](double x0, double y0, double x1, double y1, auto&& inside) {
    const int xa = std::max(0, static_cast<int>(std::floor(x0 - half - 1)));
    const int xb = std::min(size - 1, static_cast<int>(std::ceil(x1 + half + 1)));
    const int ya = std::max(0, static_cast<int>(std::floor(y0 - half - 1)));
    const int yb = std::min(size - 1, static_cast<int>(std::ceil(y1 + half + 1)));
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) {
        if (inside(Point{static_cast<double>(x), static_cast<double>(y)})) {
          img.set_pixel(x, y, shape.color.r, shape.color.g, shape.color.b);
        }
      }
    }
  };
  if (shape.is_circle) {
    const auto c = shape.center;
    paint_box(c.x - shape.radius, c.y - shape.radius, c.x + shape.radius, c.y + shape.radius, [&](Point p) {
      return std::abs(std::hypot(p.x - c.x, p.y - c.y) - shape.radius) <= half;
    });
    return img;
  }
  const auto& v = shape.vertices;
  const std::size_t segments = shape.closed ? v.size() : v.size() - 1;
  for (std::size_t i = 0; i < segments; ++i) {
    const Point a = v[i], b = v[(i + 1) % v.size()];
    paint_box(std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y),
              [&](Point p) { return segment_distance(p, a, b) <= half; });
  }
  return img;
}

RasterImage gen_shape_image(std::string_view label, std::uint64_t seed, int size) {
  return render_shape(sample_shape(label, seed, size), size);
}

// ---------------------------------------------------------------------------
// Texture stand-in

namespace {

enum class Family { stripes, waves, checker, grid, dots, rings, noise, zigzag, crosshatch, speckle, bricks, spokes, blobs, marble };

struct TextureClass {
  std::string label;
  Family family;
  double period;
  double angle;  // radians
};

const std::vector<TextureClass>& texture_classes() {
  static const std::vector<TextureClass> classes = [] {
    std::vector<TextureClass> out;
    auto add = [&](const char* name, Family f, double period, int angle_deg) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%02zu-%s-p%02d-a%03d", out.size(), name, static_cast<int>(period), angle_deg);
      out.push_back({buf, f, period, angle_deg * pi / 180.0});
    };
    for (int a : {0, 45, 90, 135}) {
      add("stripes", Family::stripes, 6, a);
      add("stripes", Family::stripes, 12, a);
    }
    for (int a : {0, 45, 90, 135}) {
      add("waves", Family::waves, 8, a);
      add("waves", Family::waves, 16, a);
    }
    for (double p : {4.0, 8.0, 16.0}) add("checker", Family::checker, p, 0);
    for (double p : {6.0, 10.0, 16.0}) add("grid", Family::grid, p, 0);
    for (double p : {6.0, 10.0, 16.0}) add("dots", Family::dots, p, 0);
    for (double p : {5.0, 9.0, 14.0}) add("rings", Family::rings, p, 0);
    for (double p : {3.0, 8.0, 20.0}) add("noise", Family::noise, p, 0);
    for (double p : {8.0, 16.0}) {
      add("zigzag", Family::zigzag, p, 0);
      add("zigzag", Family::zigzag, p, 90);
    }
    for (double p : {6.0, 12.0}) add("crosshatch", Family::crosshatch, p, 45);
    for (double p : {2.0, 5.0, 12.0}) add("speckle", Family::speckle, p, 0);
    for (double p : {8.0, 14.0}) add("bricks", Family::bricks, p, 0);
    for (double p : {8.0, 16.0}) add("spokes", Family::spokes, p, 0);
    for (double p : {6.0, 12.0}) add("blobs", Family::blobs, p, 0);
    add("marble", Family::marble, 12, 0);
    return out;
  }();
  return classes;
}

// Smooth lattice noise in [0,1].
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int size, double cell) : cell_(cell), n_(static_cast<int>(size / cell) + 2) {
    values_.resize(static_cast<std::size_t>(n_) * n_);
    for (auto& v : values_) v = rng.uniform01();
  }
  double operator()(double x, double y) const {
    const double gx = x / cell_, gy = y / cell_;
    const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
    const double fx = smooth(gx - ix), fy = smooth(gy - iy);
    const double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(std::min(y, n_ - 1)) * n_ + std::min(x, n_ - 1)]; }
  double cell_;
  int n_;
  std::vector<double> values_;
};

double frac(double v) { return v - std::floor(v); }

}  // namespace

const std::vector<std::string>& texture_standin_labels() {
  static const std::vector<std::string> labels = [] {
    std::vector<std::string> out;
    for (const auto& c : texture_classes()) out.push_back(c.label);
    return out;
  }();
  return labels;
}

RasterImage gen_texture_standin_image(std::string_view label, std::uint64_t seed, int size) {
  const auto& classes = texture_classes();
  const auto it = std::find_if(classes.begin(), classes.end(), [&](const auto& c) { return c.label == label; });
  if (it == classes.end()) throw InvalidClassError("unknown texture stand-in class '" + std::string(label) + "'");
  if (size < 1) throw ValidationError("image size must be >= 1");
  const TextureClass& tc = *it;

  Rng rng(derive_seed(seed, "texture", label));
  const double ox = rng.uniform(0, tc.period * 4), oy = rng.uniform(0, tc.period * 4);
  const double angle = tc.angle + rng.uniform(-0.08, 0.08);
  const double period = tc.period * rng.uniform(0.9, 1.1);
  const double ca = std::cos(angle), sa = std::sin(angle);
  // Foreground and background tints; the pattern carries the class, not the colour.
  std::array<double, 3> bg{}, fg{};
  const double base = rng.uniform(0.05, 0.35), top = rng.uniform(0.65, 0.95);
  for (int c = 0; c < 3; ++c) {
    bg[c] = std::clamp(base + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    fg[c] = std::clamp(top + rng.uniform(-0.05, 0.05), 0.0, 1.0);
  }
  ValueNoise noise(rng, size, std::max(2.0, period));
  ValueNoise warp(rng, size, 24.0);
  std::vector<Point> blobs;
  if (tc.family == Family::blobs || tc.family == Family::speckle) {
    const int count = static_cast<int>(size * size / (tc.family == Family::blobs ? period * period * 4 : 40.0 * period));
    for (int i = 0; i < std::max(1, count); ++i) blobs.push_back({rng.uniform(0, size), rng.uniform(0, size)});
  }

  auto pattern = [&](double x, double y) -> double {
    const double u = (x + ox) * ca + (y + oy) * sa;
    const double w = -(x + ox) * sa + (y + oy) * ca;
    switch (tc.family) {
      case Family::stripes:
        return frac(u / period) < 0.5 ? 1.0 : 0.0;
      case Family::waves:
        return 0.5 + 0.5 * std::sin(2 * pi * u / period);
      case Family::checker:
        return (static_cast<long>(std::floor((x + ox) / period)) + static_cast<long>(std::floor((y + oy) / period))) % 2 ? 1.0 : 0.0;
      case Family::grid:
        return (frac((x + ox) / period) < 0.2 || frac((y + oy) / period) < 0.2) ? 1.0 : 0.0;
      case Family::dots: {
        const double dx = frac((x + ox) / period) - 0.5, dy = frac((y + oy) / period) - 0.5;
        return dx * dx + dy * dy < 0.09 ? 1.0 : 0.0;
      }
      case Family::rings: {
        const double r = std::hypot(x - size / 2.0 + ox * 0.1, y - size / 2.0 + oy * 0.1);
        return frac(r / period) < 0.5 ? 1.0 : 0.0;
      }
      case Family::noise:
        return noise(x, y);
      case Family::zigzag: {
        const double tri = std::abs(frac(w / period) - 0.5) * 2.0;
        return frac((u + tri * period) / period) < 0.5 ? 1.0 : 0.0;
      }
      case Family::crosshatch:
        return (frac(u / period) < 0.25 || frac(w / period) < 0.25) ? 1.0 : 0.0;
      case Family::speckle:
      case Family::blobs: {
        const double rad = tc.family == Family::blobs ? period * 0.8 : 0.8;
        for (const auto& b : blobs) {
          if (std::hypot(x - b.x, y - b.y) <= rad) return 1.0;
        }
        return 0.0;
      }
      case Family::bricks: {
        const double row = std::floor((y + oy) / period);
        const double shift = std::fmod(row, 2.0) * period;
        const bool mortar = frac((y + oy) / period) < 0.15 || frac((x + ox + shift) / (2 * period)) < 0.08;
        return mortar ? 0.0 : 1.0;
      }
      case Family::spokes: {
        const double a = std::atan2(y - size / 2.0, x - size / 2.0) + ox;
        return frac(a * period / (2 * pi)) < 0.5 ? 1.0 : 0.0;
      }
      case Family::marble:
        return 0.5 + 0.5 * std::sin(2 * pi * u / period + 6.0 * warp(x, y));
    }
    return 0.0;
  };

  RasterImage img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = pattern(x, y);
      for (int c = 0; c < 3; ++c) {
        const double s = bg[c] + v * (fg[c] - bg[c]) + rng.uniform(-0.03, 0.03);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(s * 255.0), 0L, 255L));
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Datasets and manifests

std::uint64_t image_seed(std::uint64_t master, Subtype subtype, int class_index, int image_index) {
  return derive_seed(master, to_string(subtype), class_index, image_index);
}

void write_manifest(const DatasetManifest& m, const fs::path& file) {
  const fs::path base = fs::absolute(file).parent_path();
  auto out = csv::open_output(file);
  out << "path,subtype,label\n";
  for (const auto& e : m.entries) {
    const fs::path rel = fs::absolute(e.path).lexically_normal().lexically_relative(base.lexically_normal());
    out << csv::join({rel.generic_string(), std::string(to_string(e.subtype)), e.label}) << '\n';
  }
  if (!out) throw IoError("failed writing manifest '" + file.string() + "'");
}

DatasetManifest read_manifest(const fs::path& file) {
  csv::Reader reader(file);
  std::vector<std::string> f;
  if (!reader.next(f) || f != std::vector<std::string>{"path", "subtype", "label"}) {
    reader.fail("manifest header must be 'path,subtype,label'");
  }
  const fs::path base = file.parent_path();
  DatasetManifest m;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected 3 fields, got " + std::to_string(f.size()));
    Subtype st;
    try {
      st = parse_subtype(f[1]);
    } catch (const ValidationError& e) {
      reader.fail(e.what());
    }
    fs::path p(f[0]);
    if (p.is_relative()) p = base / p;
    m.entries.push_back({p.lexically_normal(), st, f[2]});
  }
  return m;
}

namespace {

std::string image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", index);
  return buf;
}

}  // namespace

DatasetManifest gen_dataset(Subtype subtype, int per_class, std::uint64_t seed, int size, const fs::path& out_dir,
                            const ColorOptions& opts) {
  if (per_class < 1) throw ValidationError("per_class must be >= 1");
  if (subtype == Subtype::texture) {
    throw ValidationError("texture datasets are ingested (ingest_texture_dir), not generated");
  }
  const auto& labels = subtype == Subtype::color ? color_labels() : shape_labels();
  DatasetManifest m;
  m.seed = seed;
  m.image_size = size;
  const std::size_t total = labels.size() * static_cast<std::size_t>(per_class);
  m.entries.resize(total);
  parallel_for(total, [&](std::size_t idx) {
    const int c = static_cast<int>(idx / per_class);
    const int i = static_cast<int>(idx % per_class);
    const auto& label = labels[c];
    const std::uint64_t s = image_seed(seed, subtype, c, i);
    const RasterImage img =
        subtype == Subtype::color ? gen_color_image(label, s, size, opts) : gen_shape_image(label, s, size);
    const fs::path path = out_dir / std::string(to_string(subtype)) / label / image_name(i);
    write_png(img, path);
    m.entries[idx] = {path, subtype, label};
  });
  return m;
}

void gen_texture_standin_dir(int classes, int per_class, std::uint64_t seed, int size, const fs::path& root) {
  const auto& labels = texture_standin_labels();
  if (classes < 1 || classes > static_cast<int>(labels.size())) {
    throw ValidationError("texture stand-in class count must be in [1, " + std::to_string(labels.size()) + "]");
  }
  if (per_class < 1) throw ValidationError("per_class must be >= 1");
  const std::size_t total = static_cast<std::size_t>(classes) * per_class;
  parallel_for(total, [&](std::size_t idx) {
    const int c = static_cast<int>(idx / per_class);
    const int i = static_cast<int>(idx % per_class);
    const auto& label = labels[c];
    write_png(gen_texture_standin_image(label, image_seed(seed, Subtype::texture, c, i), size),
              root / label / image_name(i));
  });
}

DatasetManifest ingest_texture_dir(const fs::path& root, int size, const fs::path& out_dir, IngestReport* report) {
  if (size < 1) throw ValidationError("image size must be >= 1");
  if (!fs::is_directory(root)) throw ValidationError("texture root '" + root.string() + "' is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw ValidationError("texture root '" + root.string() + "' has no class directories");

  struct Job {
    fs::path source;
    std::string label;
  };
  std::vector<Job> jobs;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) jobs.push_back({std::move(f), dir.filename().string()});
  }
  if (jobs.empty()) throw ValidationError("texture root '" + root.string() + "' contains no files");

  std::vector<std::optional<ManifestEntry>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    try {
      const RasterImage img = resize_image(read_image(jobs[i].source), size, size);
      const fs::path dst = out_dir / "texture" / jobs[i].label / (jobs[i].source.stem().string() + ".png");
      write_png(img, dst);
      slots[i] = ManifestEntry{dst, Subtype::texture, jobs[i].label};
    } catch (const IoError& e) {
      errors[i] = e.what();
    }
  });

  DatasetManifest m;
  m.image_size = size;
  IngestReport local;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (slots[i]) {
      m.entries.push_back(std::move(*slots[i]));
      ++local.ingested;
    } else {
      ++local.skipped;
      local.warnings.push_back("skipped unreadable image: " + errors[i]);
    }
  }
  if (m.entries.empty()) throw ValidationError("no readable images under '" + root.string() + "'");
  if (report) *report = std::move(local);
  return m;
}

}  // namespace costfuse::synth
