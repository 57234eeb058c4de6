#include <doctest.h>

#include <fstream>

#include "costfuse/backend.hpp"
#include "costfuse/error.hpp"
#include "costfuse/synthgen.hpp"
#include "oracles.hpp"

using namespace costfuse;
using namespace costfuse::backend;

namespace {

// Identities separable by background colour.
std::vector<LabeledImage> colour_identities(const std::vector<std::string>& colours, int per, std::uint64_t seed) {
  std::vector<LabeledImage> out;
  for (const auto& c : colours)
    for (int i = 0; i < per; ++i) out.push_back({"id-" + c, synth::gen_color_image(c, derive_seed(seed, c, i), 16)});
  return out;
}

ReferenceConfig quick_config(int epochs = 200) {
  ReferenceConfig cfg;
  cfg.input_size = 4;
  cfg.hidden = {8, 6};
  cfg.train.epochs = epochs;
  cfg.train.learning_rate = 0.1;
  cfg.seed = 3;
  return cfg;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("mode parsing") {
  CHECK(parse_mode("pair") == Mode::pair);
  CHECK(to_string(Mode::identity) == "identity");
  CHECK_THROWS_AS(parse_mode("triplet"), ValidationError);
}

TEST_CASE("identity mode: one output per identity, activations sum to one") {
  const auto data = colour_identities({"red", "blue"}, 3, 1);
  const auto trained = reference_classifier_train(data, Mode::identity, quick_config(20));
  CHECK(trained.model.net.outputs() == 2);
  CHECK(trained.model.net.classes == std::vector<std::string>{"id-blue", "id-red"});
  for (const auto& d : data) {
    const auto out = backend_score(trained.model, d.image);
    CHECK(out.mode == Mode::identity);
    CHECK(std::abs(out.activation.sum() - 1.0) <= 1e-12);
    CHECK(out.activation.minCoeff() > 0.0);
  }
  CHECK_THROWS_AS(backend_score(trained.model, data[0].image, data[1].image), ValidationError);
}

TEST_CASE("separable identities are learned to over 90% training accuracy") {
  const auto data = colour_identities({"red", "green", "blue", "white"}, 6, 2);
  const auto trained = reference_classifier_train(data, Mode::identity, quick_config(400));
  CHECK(training_accuracy(trained.model, data) > 0.9);
  CHECK(trained.loss_history.back() < trained.loss_history.front());
}

TEST_CASE("pair mode: two outputs, symmetric by construction") {
  const auto data = colour_identities({"red", "blue", "green"}, 3, 3);
  const auto trained = reference_classifier_train(data, Mode::pair, quick_config(100));
  CHECK(trained.model.net.outputs() == 2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.size(); ++j) {
      const auto ab = backend_score(trained.model, data[i].image, data[j].image);
      const auto ba = backend_score(trained.model, data[j].image, data[i].image);
      CHECK(ab.activation == ba.activation);
      CHECK(std::abs(ab.activation.sum() - 1.0) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(backend_score(trained.model, data[0].image), ValidationError);

  const ReferenceModel untrained{Mode::pair, 4, mlp::init_mlp({48, 5, 5, 2}, 9)};
  CHECK(backend_score(untrained, data[0].image, data[4].image).activation ==
        backend_score(untrained, data[4].image, data[0].image).activation);
  CHECK(pair_features(data[0].image, data[4].image, 4) == pair_features(data[4].image, data[0].image, 4));
}

TEST_CASE("pair mode needs two labels and a genuine pair") {
  CHECK_THROWS_AS(reference_classifier_train(colour_identities({"red"}, 3, 4), Mode::pair, quick_config(5)),
                  ValidationError);
  CHECK_THROWS_AS(reference_classifier_train(colour_identities({"red", "blue"}, 1, 4), Mode::pair, quick_config(5)),
                  ValidationError);
  auto cfg = quick_config(5);
  cfg.hidden = {4};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("reference model file round trip") {
  oracle::TempDir dir("ref");
  const auto data = colour_identities({"red", "blue"}, 2, 5);
  const auto trained = reference_classifier_train(data, Mode::identity, quick_config(10));
  save_reference(trained.model, dir / "m.json");
  const auto back = load_reference(dir / "m.json");
  CHECK(back.mode == Mode::identity);
  CHECK(back.input_size == 4);
  for (const auto& d : data) {
    CHECK((backend_score(back, d.image).activation - backend_score(trained.model, d.image).activation)
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }
}

TEST_CASE("score tables: kinds, order-insensitive pair keys, duplicates") {
  PrecomputedScoreTable pairs(PrecomputedScoreTable::Kind::pair, 2);
  pairs.add("a", "b", Eigen::Vector2d(0.7, 0.3));
  CHECK(pairs.contains("b", "a"));
  CHECK(pairs.activation("b", "a")[1] == 0.3);
  CHECK_THROWS_AS(pairs.add("b", "a", Eigen::Vector2d(0.5, 0.5)), ValidationError);
  CHECK_THROWS_AS(pairs.add("x", Eigen::Vector2d(0.5, 0.5)), ValidationError);
  CHECK_THROWS_AS(pairs.activation("a", "c"), ValidationError);

  PrecomputedScoreTable single(PrecomputedScoreTable::Kind::identity, 3);
  single.add("a", Eigen::Vector3d(0.2, 0.3, 0.5));
  CHECK_THROWS_AS(single.add("b", Eigen::Vector2d(0.5, 0.5)), DimensionError);
  CHECK_THROWS_AS(single.add("a", Eigen::Vector3d(0.2, 0.3, 0.5)), ValidationError);
}

TEST_CASE("score files: empty, three rows, round trip, errors with line numbers") {
  oracle::TempDir dir("scores");
  write_text(dir / "empty.csv", "path1,path2,v0,v1\n");
  CHECK(load_precomputed(dir / "empty.csv").size() == 0);

  write_text(dir / "three.csv", "path1,path2,v0,v1\na,b,0.9,0.1\na,c,0.2,0.8\nb,c,0.5,0.5\n");
  const auto three = load_precomputed(dir / "three.csv");
  CHECK(three.kind() == PrecomputedScoreTable::Kind::pair);
  CHECK(three.size() == 3);
  save_precomputed(three, dir / "again.csv");
  CHECK(load_precomputed(dir / "again.csv") == three);

  write_text(dir / "ident.csv", "path,v0,v1,v2\nx,0.1,0.2,0.7\ny,0.3,0.3,0.4\n");
  const auto ident = load_precomputed(dir / "ident.csv");
  CHECK(ident.kind() == PrecomputedScoreTable::Kind::identity);
  CHECK(ident.width() == 3);
  save_precomputed(ident, dir / "ident2.csv");
  CHECK(load_precomputed(dir / "ident2.csv") == ident);

  write_text(dir / "dist.csv", "path1,path2,distance\nx,y,0.25\n");
  const auto dist = load_precomputed(dir / "dist.csv");
  CHECK(dist.distance("y", "x") == 0.25);
  save_precomputed(dist, dir / "dist2.csv");
  CHECK(load_precomputed(dir / "dist2.csv") == dist);

  write_text(dir / "dup.csv", "path1,path2,v0,v1\na,b,0.9,0.1\nc,d,0.5,0.5\nb,a,0.9,0.1\n");
  try {
    load_precomputed(dir / "dup.csv");
    FAIL("duplicate key accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  write_text(dir / "bad.csv", "path1,path2,v0,v1\na,b,0.9\n");
  CHECK_THROWS_AS(load_precomputed(dir / "bad.csv"), ParseError);
  write_text(dir / "nan.csv", "path,v0\na,zebra\n");
  CHECK_THROWS_AS(load_precomputed(dir / "nan.csv"), ParseError);
  write_text(dir / "hdr.csv", "left,right\n");
  CHECK_THROWS_AS(load_precomputed(dir / "hdr.csv"), ParseError);
}

TEST_CASE("a table holding a model's exact scores is interchangeable with the model") {
  oracle::TempDir dir("swap");
  const auto data = colour_identities({"red", "blue", "yellow"}, 3, 6);
  std::map<std::string, RasterImage> images;
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < data.size(); ++i) {
    paths.push_back("img" + std::to_string(i));
    images[paths.back()] = data[i].image;
  }
  auto loader = [&](const std::string& p) { return images.at(p); };

  for (Mode mode : {Mode::identity, Mode::pair}) {
    const auto trained = reference_classifier_train(data, mode, quick_config(60));
    const ModelScorer live(trained.model, loader);
    PrecomputedScoreTable table = mode == Mode::identity
                                      ? PrecomputedScoreTable(PrecomputedScoreTable::Kind::identity, 3)
                                      : PrecomputedScoreTable(PrecomputedScoreTable::Kind::pair, 2);
    if (mode == Mode::identity) {
      for (const auto& p : paths) table.add(p, live.activation(p));
    } else {
      for (std::size_t i = 0; i < paths.size(); ++i)
        for (std::size_t j = i + 1; j < paths.size(); ++j)
          table.add(paths[i], paths[j], backend_score(trained.model, images[paths[i]], images[paths[j]]).activation);
    }
    save_precomputed(table, dir / "t.csv");
    const TableScorer stored(load_precomputed(dir / "t.csv"));

    std::vector<fusion::ScoreRecord> from_model, from_table;
    Rng rng(7);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      for (std::size_t j = i + 1; j < paths.size(); ++j) {
        const auto label = data[i].label == data[j].label ? fusion::Label::genuine : fusion::Label::imposter;
        const double cost = rng.uniform01();
        from_model.push_back({paths[i], paths[j], cost, live.distance(paths[i], paths[j]), NAN, NAN, label});
        from_table.push_back({paths[i], paths[j], cost, stored.distance(paths[i], paths[j]), NAN, NAN, label});
      }
    }
    const auto fm = fusion::apply_fusion(from_model, 0.3, fusion::Normalization::minmax);
    const auto ft = fusion::apply_fusion(from_table, 0.3, fusion::Normalization::minmax);
    for (std::size_t i = 0; i < fm.size(); ++i) CHECK(fm[i].dist_fused == ft[i].dist_fused);
    const auto vm = fusion::verification_metrics(fm, fusion::Channel::fused);
    const auto vt = fusion::verification_metrics(ft, fusion::Channel::fused);
    CHECK(vm.gar_at_1pct == vt.gar_at_1pct);
    CHECK(vm.gar_at_01pct == vt.gar_at_01pct);
    CHECK(vm.roc.size() == vt.roc.size());
  }
}
