#include <doctest.h>

#include <fstream>
#include <set>

#include <Eigen/Dense>

#include "costfuse/error.hpp"
#include "costfuse/synthgen.hpp"
#include "oracles.hpp"

using namespace costfuse;
using namespace costfuse::synth;

namespace {

bool in_range(const RasterImage& img, const ColorRange& r) {
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const int v = img.at(x, y, c);
        if (v < r[static_cast<std::size_t>(c)].lo || v > r[static_cast<std::size_t>(c)].hi) return false;
      }
  return true;
}

// Every lit pixel carries the outline colour; everything else is black.
bool two_tone(const RasterImage& img, Rgb fg) {
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Rgb p{img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)};
      if (!(p == Rgb{0, 0, 0}) && !(p == fg)) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("class tables have the fixed sizes and orderings") {
  CHECK(color_labels().size() == 10);
  CHECK(shape_labels().size() == 7);
  CHECK(texture_standin_labels().size() == 47);
  CHECK(color_labels().front() == "red");
  CHECK(color_labels().back() == "orange");
  CHECK(shape_labels()[2] == "circle");
  CHECK(color_class("cyan").index == 5);
  CHECK(shape_class("hexagon").index == 6);
  CHECK_THROWS_AS(color_class("purple"), InvalidClassError);
  CHECK_THROWS_AS(shape_class("star"), InvalidClassError);
  auto sorted = texture_standin_labels();
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == texture_standin_labels());
}

TEST_CASE("red keeps R in [200,255] in both rule modes") {
  for (bool literal : {false, true}) {
    const auto img = gen_color_image("red", 7, 250, {literal});
    bool ok = true;
    for (int y = 0; y < 250; ++y)
      for (int x = 0; x < 250; ++x) ok = ok && img.at(x, y, 0) >= 200;
    CHECK(ok);
  }
  // The literal rule leaves G and B free, so values above the default cap appear.
  const auto literal = gen_color_image("red", 7, 64, {true});
  int above = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) above += literal.at(x, y, 1) > 120;
  CHECK(above > 0);
}

TEST_CASE("every colour class respects its range table") {
  for (const auto& label : color_labels()) {
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      CHECK_MESSAGE(in_range(gen_color_image(label, seed, 32), color_range(label)), label);
    }
  }
  const auto black = gen_color_image("black", 1, 64);
  CHECK(in_range(black, {ChannelRange{0, 55}, ChannelRange{0, 55}, ChannelRange{0, 55}}));
}

TEST_CASE("generation is a pure function of its arguments") {
  CHECK(gen_color_image("blue", 5, 40) == gen_color_image("blue", 5, 40));
  CHECK_FALSE(gen_color_image("blue", 5, 40) == gen_color_image("blue", 6, 40));
  for (const auto& s : shape_labels()) CHECK(gen_shape_image(s, 3, 64) == gen_shape_image(s, 3, 64));
  CHECK(gen_texture_standin_image(texture_standin_labels()[4], 8, 48) ==
        gen_texture_standin_image(texture_standin_labels()[4], 8, 48));
  CHECK_THROWS_AS(gen_color_image("grey", 1, 8), InvalidClassError);
}

TEST_CASE("shape images: black background, single outline colour, thickness 1..5") {
  for (const auto& label : shape_labels()) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      const auto g = sample_shape(label, seed, 64);
      CHECK(g.thickness >= 1);
      CHECK(g.thickness <= 5);
      CHECK_FALSE(g.color == Rgb{0, 0, 0});
      const auto img = render_shape(g, 64);
      CHECK(two_tone(img, g.color));
      CHECK_FALSE(oracle::lit_pixels(img).empty());
    }
  }
  CHECK_THROWS_AS(gen_shape_image("circle", 1, kMinShapeSize - 1), GenerationError);
}

TEST_CASE("circle: lit pixels form one annulus no wider than thickness + 1") {
  for (std::uint64_t seed : {3u, 4u, 5u, 6u}) {
    const auto img = gen_shape_image("circle", seed, 250);
    const auto pts = oracle::lit_pixels(img);
    REQUIRE(pts.size() > 10);
    // Algebraic least-squares circle fit from the pixels alone.
    Eigen::MatrixXd A(static_cast<Eigen::Index>(pts.size()), 3);
    Eigen::VectorXd b(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const auto [x, y] = pts[static_cast<std::size_t>(i)];
      A.row(i) << 2 * x, 2 * y, 1.0;
      b[i] = x * x + y * y;
    }
    const Eigen::Vector3d s = A.colPivHouseholderQr().solve(b);
    double lo = 1e9, hi = 0;
    for (const auto& [x, y] : pts) {
      const double r = std::hypot(x - s[0], y - s[1]);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    CHECK(hi - lo <= 5 + 1);
  }
}

TEST_CASE("lines: lit pixels are collinear within the thickness tolerance") {
  for (std::uint64_t seed : {9u, 10u, 11u, 12u}) {
    const auto img = gen_shape_image("lines", seed, 250);
    const auto pts = oracle::lit_pixels(img);
    REQUIRE(pts.size() >= 20);
    // Principal direction of the lit pixels.
    Eigen::MatrixXd P(static_cast<Eigen::Index>(pts.size()), 2);
    for (Eigen::Index i = 0; i < P.rows(); ++i) P.row(i) << pts[static_cast<std::size_t>(i)].first, pts[static_cast<std::size_t>(i)].second;
    const Eigen::RowVector2d mean = P.colwise().mean();
    const Eigen::MatrixXd C = P.rowwise() - mean;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(C.transpose() * C);
    const Eigen::Vector2d normal = es.eigenvectors().col(0);
    double worst = 0;
    for (Eigen::Index i = 0; i < C.rows(); ++i) worst = std::max(worst, std::abs(C.row(i).dot(normal)));
    CHECK(worst <= 5.0 / 2 + 1);
    CHECK(es.eigenvalues()[1] > 50 * es.eigenvalues()[0]);
  }
}

TEST_CASE("polygons and ellipses: every lit pixel lies within thickness + 1 of the outline") {
  for (const std::string label : {"rectangle", "ellipse", "quadrilateral", "pentagon", "hexagon"}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto g = sample_shape(label, seed, 128);
      const auto img = render_shape(g, 128);
      const auto& v = g.vertices;
      double worst = 0;
      for (const auto& [x, y] : oracle::lit_pixels(img)) {
        double best = 1e9;
        for (std::size_t i = 0; i < v.size(); ++i) {
          const auto& a = v[i];
          const auto& b = v[(i + 1) % v.size()];
          best = std::min(best, oracle::segment_distance(x, y, a.x, a.y, b.x, b.y));
        }
        worst = std::max(worst, best);
      }
      CHECK_MESSAGE(worst <= g.thickness + 1, label);
      for (const auto& p : v) {
        CHECK(p.x >= 3);
        CHECK(p.y >= 3);
        CHECK(p.x <= 128 - 1 - 3);
        CHECK(p.y <= 128 - 1 - 3);
      }
      // Each polygon edge's midpoint is painted.
      if (label != "ellipse") {
        for (std::size_t i = 0; i < v.size(); ++i) {
          const auto& a = v[i];
          const auto& b = v[(i + 1) % v.size()];
          const int mx = static_cast<int>(std::lround((a.x + b.x) / 2)), my = static_cast<int>(std::lround((a.y + b.y) / 2));
          bool lit = false;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) lit = lit || img.at(mx + dx, my + dy, 0) || img.at(mx + dx, my + dy, 1) || img.at(mx + dx, my + dy, 2);
          CHECK(lit);
        }
      }
    }
  }
}

TEST_CASE("gen_dataset writes per_class images per class with a readable manifest") {
  oracle::TempDir dir("gen");
  const auto m = gen_dataset(Subtype::color, 1, 11, 16, dir.path());
  CHECK(m.entries.size() == 10);
  std::set<std::string> labels;
  for (const auto& e : m.entries) {
    CHECK(std::filesystem::exists(e.path));
    labels.insert(e.label);
  }
  CHECK(labels.size() == 10);

  const auto shapes = gen_dataset(Subtype::shape, 2, 11, 32, dir.path());
  CHECK(shapes.entries.size() == 14);
  write_manifest(shapes, dir / "shape.csv");
  const auto back = read_manifest(dir / "shape.csv");
  REQUIRE(back.entries.size() == shapes.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    CHECK(back.entries[i].label == shapes.entries[i].label);
    CHECK(std::filesystem::equivalent(back.entries[i].path, shapes.entries[i].path));
    CHECK(read_image(back.entries[i].path) ==
          gen_shape_image(back.entries[i].label, image_seed(11, Subtype::shape, static_cast<int>(i / 2), static_cast<int>(i % 2)), 32));
  }
  CHECK_THROWS_AS(gen_dataset(Subtype::color, 0, 1, 16, dir.path()), ValidationError);
}

TEST_CASE("full-scale dataset sizes follow from per-class counts") {
  CHECK(color_labels().size() * 1000 == 10000);
  CHECK(shape_labels().size() * 1000 == 7000);
  CHECK(texture_standin_labels().size() * 120 == 5640);
}

TEST_CASE("texture ingest: class from directory, resize, unreadable files skipped") {
  oracle::TempDir dir("ingest");
  const auto root = dir / "src";
  gen_texture_standin_dir(2, 2, 5, 40, root);
  {
    std::ofstream junk(root / texture_standin_labels()[0] / "zz-broken.png");
    junk << "garbage";
  }
  IngestReport rep;
  const auto m = ingest_texture_dir(root, 16, dir / "out", &rep);
  CHECK(m.entries.size() == 4);
  CHECK(rep.ingested == 4);
  CHECK(rep.skipped == 1);
  CHECK(rep.warnings.size() == 1);
  CHECK(m.entries.front().label == texture_standin_labels()[0]);
  CHECK(m.entries.back().label == texture_standin_labels()[1]);
  for (const auto& e : m.entries) {
    const auto img = read_image(e.path);
    CHECK(img.width() == 16);
    CHECK(img.height() == 16);
  }
  CHECK_THROWS_AS(ingest_texture_dir(dir / "nothing", 16, dir / "out"), ValidationError);
}

TEST_CASE("single-image texture directory gives a one-entry manifest") {
  oracle::TempDir dir("ingest1");
  RasterImage img(640, 640);
  Rng rng(2);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  write_png(img, dir / "src" / "banded" / "a.png");
  const auto m = ingest_texture_dir(dir / "src", 250, dir / "out");
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].label == "banded");
  const auto out = read_image(m.entries[0].path);
  const auto ref = oracle::bilinear(img, 250, 250);
  double got_mean = 0, ref_mean = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    got_mean += out.data()[i];
    ref_mean += ref[i];
  }
  CHECK(std::abs(got_mean - ref_mean) / static_cast<double>(ref.size()) <= 1.0);
}
