#include <doctest.h>

#include <fstream>
#include <numeric>

#include "costfuse/csv.hpp"
#include "costfuse/error.hpp"
#include "costfuse/fusion_eval.hpp"
#include "oracles.hpp"

using namespace costfuse;
using namespace costfuse::fusion;

namespace {

std::vector<double> values_of(const std::vector<ScoreRecord>& records, Channel c) {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(channel_value(r, c));
  return out;
}

std::vector<Label> labels_of(const std::vector<ScoreRecord>& records) {
  std::vector<Label> out;
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

std::vector<std::size_t> ranking(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  return idx;
}

// Records with independent random channels; `genuine_shift` pulls genuine pairs closer.
std::vector<ScoreRecord> random_records(Rng& rng, int n, double genuine_shift) {
  std::vector<ScoreRecord> out;
  for (int i = 0; i < n; ++i) {
    const Label l = rng.uniform01() < 0.3 ? Label::genuine : Label::imposter;
    const double shift = l == Label::genuine ? genuine_shift : 0.0;
    // Values quantised to 1/64 so that ties occur.
    auto q = [&](double v) { return std::round(v * 64.0) / 64.0; };
    out.push_back({"a" + std::to_string(i), "b" + std::to_string(i), q(rng.uniform01() - shift),
                   q(rng.uniform01() - shift), NAN, NAN, l});
  }
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path) {
  csv::Reader reader(path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> f;
  while (reader.next(f)) rows.push_back(f);
  return rows;
}

}  // namespace

TEST_CASE("softmax distance examples") {
  const Eigen::Vector2d e1(1, 0), e2(0, 1), half(0.5, 0.5);
  CHECK(softmax_distance(half, half) == 0.0);
  CHECK(softmax_distance(e1, e2) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(softmax_distance(half, e1) == doctest::Approx(0.7071067811865476).epsilon(1e-15));
  CHECK(softmax_distance(e1, e2, DistanceMetric::cosine) == 1.0);
  CHECK(softmax_distance(e1, e1, DistanceMetric::cosine) == 0.0);
  CHECK_THROWS_AS(softmax_distance(Eigen::VectorXd(e1), Eigen::VectorXd::Ones(3)), DimensionError);
  CHECK(parse_metric("cosine") == DistanceMetric::cosine);
  CHECK_THROWS_AS(parse_metric("manhattan"), ValidationError);
}

TEST_CASE("fuse is the weighted sum with exact endpoints") {
  CHECK(fuse(0.5, 0.1, 0.3) == doctest::Approx(0.22).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double c = rng.uniform01(), s = rng.uniform01(), a = rng.uniform01();
    CHECK(fuse(c, s, 0.0) == s);
    CHECK(fuse(c, s, 1.0) == c);
    CHECK(fuse(c, s, a) == a * c + (1 - a) * s);
  }
  CHECK_THROWS_AS(fuse(0.1, 0.2, -0.01), ValidationError);
  CHECK_THROWS_AS(fuse(0.1, 0.2, 1.01), ValidationError);
  CHECK_THROWS_AS(fuse(0.1, 0.2, std::nan("")), ValidationError);
}

TEST_CASE("normalize_scores examples") {
  const std::vector<double> v{2, 4, 6};
  CHECK(normalize_scores(v, Normalization::minmax) == std::vector<double>{0, 0.5, 1});
  CHECK(normalize_scores(std::vector<double>{3, 3}, Normalization::minmax) == std::vector<double>{0, 0});
  CHECK(normalize_scores(v, Normalization::none) == v);
  CHECK_THROWS_AS(normalize_scores(std::vector<double>{}, Normalization::minmax), ValidationError);
  CHECK_THROWS_AS(normalize_scores(std::vector<double>{1, INFINITY}, Normalization::minmax), ValidationError);
}

TEST_CASE("apply_fusion stores normalised operands and an exactly reproducible fused value") {
  Rng rng(2);
  const auto records = random_records(rng, 50, 0.2);
  const auto fused = apply_fusion(records, 0.3, Normalization::minmax);
  const auto nc = normalize_scores(values_of(records, Channel::cost), Normalization::minmax);
  const auto ns = normalize_scores(values_of(records, Channel::supervised), Normalization::minmax);
  for (std::size_t i = 0; i < fused.size(); ++i) {
    CHECK(fused[i].dist_cost == nc[i]);
    CHECK(fused[i].dist_supervised == ns[i]);
    CHECK(fused[i].alpha == 0.3);
    CHECK(fused[i].dist_fused == fuse(fused[i].dist_cost, fused[i].dist_supervised, 0.3));
  }
  const auto again = refuse(fused, 0.7);
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].dist_fused == fuse(nc[i], ns[i], 0.7));
  CHECK_THROWS_AS(apply_fusion(std::vector<ScoreRecord>{}, 0.3, Normalization::minmax), ValidationError);
}

TEST_CASE("positive scaling of one channel leaves the fused ranking unchanged") {
  Rng rng(3);
  auto records = random_records(rng, 200, 0.1);
  for (auto& r : records) r.dist_cost += 1e-3 * rng.uniform01();  // break ties
  const auto base = apply_fusion(records, 0.4, Normalization::minmax);
  for (double k : {0.01, 3.7, 250.0}) {
    auto scaled = records;
    for (auto& r : scaled) r.dist_supervised *= k;
    const auto f = apply_fusion(scaled, 0.4, Normalization::minmax);
    CHECK(ranking(values_of(f, Channel::fused)) == ranking(values_of(base, Channel::fused)));
  }
}

TEST_CASE("verification: perfect separation gives full GAR") {
  std::vector<double> d;
  std::vector<Label> l;
  for (int i = 0; i < 100; ++i) {
    d.push_back(i);
    l.push_back(i < 40 ? Label::genuine : Label::imposter);
  }
  const auto roc = roc_curve(d, l);
  CHECK(gar_at_far(roc, 0.01) == 1.0);
  CHECK(gar_at_far(roc, 0.001) == 1.0);
}

TEST_CASE("verification: identical distributions give GAR close to the FAR") {
  Rng rng(4);
  std::vector<double> d;
  std::vector<Label> l;
  for (int i = 0; i < 2000; ++i) {
    d.push_back(rng.normal());
    l.push_back(i % 2 ? Label::genuine : Label::imposter);
  }
  CHECK(std::abs(gar_at_far(roc_curve(d, l), 0.01) - 0.01) <= 0.02);
}

TEST_CASE("verification metrics equal an exhaustive threshold scan") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(derive_seed(5, seed));
    const auto records = random_records(rng, 1000, 0.15 * static_cast<double>(seed));
    for (Channel c : {Channel::cost, Channel::supervised}) {
      const auto m = verification_metrics(records, c);
      const auto d = values_of(records, c);
      const auto l = labels_of(records);
      CHECK(m.gar_at_1pct == oracle::gar_at_far(d, l, 0.01));
      CHECK(m.gar_at_01pct == oracle::gar_at_far(d, l, 0.001));
      for (const auto& p : m.roc) {
        if (!std::isfinite(p.threshold)) continue;
        const auto r = oracle::rates_at(d, l, p.threshold);
        CHECK(p.far == r.far);
        CHECK(p.gar == r.gar);
      }
    }
  }
}

TEST_CASE("ROC is monotone, starts at the origin and ends at (1,1)") {
  Rng rng(6);
  const auto records = random_records(rng, 300, 0.1);
  const auto roc = verification_metrics(records, Channel::cost).roc;
  REQUIRE(roc.size() >= 2);
  CHECK(roc.front().far == 0.0);
  CHECK(roc.front().gar == 0.0);
  CHECK(roc.back().far == 1.0);
  CHECK(roc.back().gar == 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    CHECK(roc[i].threshold > roc[i - 1].threshold);
    CHECK(roc[i].far >= roc[i - 1].far);
    CHECK(roc[i].gar >= roc[i - 1].gar);
  }
}

TEST_CASE("verification needs both pair classes and computed distances") {
  const std::vector<double> d{0.1, 0.2};
  CHECK_THROWS_AS(roc_curve(d, std::vector<Label>{Label::genuine, Label::genuine}), ValidationError);
  CHECK_THROWS_AS(roc_curve(d, std::vector<Label>{Label::genuine}), DimensionError);
  const std::vector<ScoreRecord> unfused{{"a", "b", 0.1, 0.2, NAN, NAN, Label::genuine},
                                         {"a", "c", 0.3, 0.4, NAN, NAN, Label::imposter}};
  CHECK_THROWS_AS(verification_metrics(unfused, Channel::fused), ValidationError);
}

TEST_CASE("CMC: own identity nearest gives rank-1 of one") {
  const std::vector<std::string> probes{"x", "y", "z"};
  const std::vector<std::string> gallery{"z", "y", "x"};
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(3, 3);
  d(0, 2) = d(1, 1) = d(2, 0) = 0.0;
  const auto c = cmc(d, probes, gallery);
  CHECK(c.gallery_size() == 3);
  CHECK(c.at(1) == 1.0);
  CHECK(c.at(3) == 1.0);
  CHECK_THROWS_AS(cmc(d, std::vector<std::string>{"x", "y", "w"}, gallery), ValidationError);
  CHECK_THROWS_AS(cmc(Eigen::MatrixXd::Ones(2, 3), probes, gallery), DimensionError);
}

TEST_CASE("CMC: ties resolve by gallery index") {
  const std::vector<std::string> probes{"x"};
  const std::vector<std::string> gallery{"y", "x"};
  const Eigen::MatrixXd d = Eigen::MatrixXd::Zero(1, 2);
  const auto c = cmc(d, probes, gallery);
  CHECK(c.at(1) == 0.0);
  CHECK(c.at(2) == 1.0);
}

TEST_CASE("CMC equals a brute-force rank count and reaches one at the gallery size") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(7, seed));
    const int G = 12;
    std::vector<std::string> gallery, probes;
    for (int g = 0; g < G; ++g) gallery.push_back("id" + std::to_string(g % 8));
    for (int p = 0; p < 20; ++p) probes.push_back("id" + std::to_string(rng.uniform_int(0, 7)));
    Eigen::MatrixXd d(20, G);
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j) d(i, j) = static_cast<double>(rng.uniform_int(0, 9));
    const auto c = cmc(d, probes, gallery);
    CHECK(c.rate == oracle::cmc(d, probes, gallery));
    CHECK(c.at(static_cast<std::size_t>(G)) == 1.0);
    for (std::size_t r = 1; r < c.rate.size(); ++r) CHECK(c.rate[r] >= c.rate[r - 1]);

    // The same instance expressed as probe/gallery score records.
    std::vector<ScoreRecord> records;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j) {
        const auto label = probes[static_cast<std::size_t>(i)] == gallery[static_cast<std::size_t>(j)] ? Label::genuine
                                                                                                       : Label::imposter;
        records.push_back({"p" + std::to_string(i), "g" + std::to_string(j), d(i, j), 0.0, NAN, NAN, label});
      }
    CHECK(cmc_from_records(records, Channel::cost).rate == c.rate);
  }
}

TEST_CASE("CMC from records rejects incomplete or duplicated scoring") {
  std::vector<ScoreRecord> r{{"p", "g1", 0.1, 0, NAN, NAN, Label::genuine},
                             {"p", "g2", 0.2, 0, NAN, NAN, Label::imposter},
                             {"q", "g1", 0.4, 0, NAN, NAN, Label::imposter}};
  CHECK_THROWS_AS(cmc_from_records(r, Channel::cost), ValidationError);
  r.push_back({"q", "g2", 0.3, 0, NAN, NAN, Label::imposter});
  CHECK_THROWS_AS(cmc_from_records(r, Channel::cost), ValidationError);  // q has no genuine entry
  r.back().label = Label::genuine;
  CHECK(cmc_from_records(r, Channel::cost).at(1) == 1.0);
  r.push_back({"q", "g2", 0.3, 0, NAN, NAN, Label::genuine});
  CHECK_THROWS_AS(cmc_from_records(r, Channel::cost), ValidationError);
}

TEST_CASE("alpha grid search: tie goes to the smallest alpha") {
  std::vector<ScoreRecord> records;
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const Label l = i < 50 ? Label::genuine : Label::imposter;
    const double s = l == Label::genuine ? rng.uniform(0.0, 0.1) : rng.uniform(0.9, 1.0);
    records.push_back({"a", "b", rng.uniform01(), s, NAN, NAN, l});
  }
  const auto grid = default_alpha_grid();
  CHECK(grid.size() == 11);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.0);
  CHECK(grid_search_alpha(records, grid) == 0.0);
  const std::vector<double> shuffled{0.4, 0.2, 0.3};
  CHECK(grid_search_alpha(records, shuffled) == 0.2);
  CHECK(grid_search_alpha(records, std::vector<double>{0.3}) == 0.3);
  CHECK_THROWS_AS(grid_search_alpha(records, std::vector<double>{}), ValidationError);
}

TEST_CASE("alpha grid search: COST-separable with anti-correlated supervision picks one") {
  // Ten genuine/imposter pairs straddle the COST margin with opposite
  // supervised extremes, so any alpha below 0.98 misorders them.
  std::vector<ScoreRecord> records;
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const bool edge = i < 10;
    records.push_back({"a", "b", edge ? 0.49 : rng.uniform(0.0, 0.49), edge ? 1.0 : rng.uniform(0.5, 1.0), NAN, NAN,
                       Label::genuine});
    records.push_back({"a", "b", edge ? 0.51 : rng.uniform(0.51, 1.0), edge ? 0.0 : rng.uniform(0.0, 0.5), NAN, NAN,
                       Label::imposter});
  }
  CHECK(verification_metrics(records, Channel::cost).gar_at_1pct == 1.0);
  CHECK(grid_search_alpha(records, default_alpha_grid()) == 1.0);
}

TEST_CASE("pair lists: round trip and conflicting labels") {
  oracle::TempDir dir("pairs");
  const PairList pairs{{"a", "b", Label::genuine}, {"a", "c", Label::imposter}, {"b", "a", Label::genuine}};
  write_pair_list(pairs, dir / "p.csv");
  const auto back = read_pair_list(dir / "p.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[2].path1 == "b");
  CHECK(back[1].label == Label::imposter);
  {
    std::ofstream out(dir / "bad.csv");
    out << "path1,path2,label\na,b,genuine\nc,d,imposter\nb,a,imposter\n";
  }
  try {
    read_pair_list(dir / "bad.csv");
    FAIL("conflict accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  {
    std::ofstream out(dir / "label.csv");
    out << "path1,path2,label\na,b,maybe\n";
  }
  CHECK_THROWS_AS(read_pair_list(dir / "label.csv"), ParseError);
}

TEST_CASE("score files round trip bit-exactly, with and without a fused value") {
  oracle::TempDir dir("scorefile");
  Rng rng(10);
  auto records = random_records(rng, 40, 0.1);
  for (auto& r : records) r.dist_cost = rng.normal() / 3.0;
  write_scores(records, dir / "raw.csv");
  const auto raw = read_scores(dir / "raw.csv");
  REQUIRE(raw.size() == records.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(raw[i].path1 == records[i].path1);
    CHECK(raw[i].dist_cost == records[i].dist_cost);
    CHECK(raw[i].dist_supervised == records[i].dist_supervised);
    CHECK(std::isnan(raw[i].dist_fused));
    CHECK(raw[i].label == records[i].label);
  }
  const auto fused = apply_fusion(records, 0.3, Normalization::minmax);
  write_scores(fused, dir / "fused.csv");
  const auto back = read_scores(dir / "fused.csv");
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i].dist_fused == fused[i].dist_fused);
}

TEST_CASE("ROC and CMC files carry one row per point") {
  oracle::TempDir dir("curves");
  const std::vector<RocPoint> roc{{-INFINITY, 0, 0}, {0.5, 0.25, 0.5}, {1.0, 1.0, 1.0}};
  write_roc(roc, dir / "roc.csv");
  write_cmc(CmcCurve{{0.5, 1.0}}, dir / "cmc.csv");
  const auto rows = read_rows(dir / "roc.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"threshold", "far", "gar"});
  CHECK(csv::parse_double(rows[2][1], "far") == 0.25);
  const auto c = read_rows(dir / "cmc.csv");
  REQUIRE(c.size() == 3);
  CHECK(c[2] == std::vector<std::string>{"2", "1"});
}
