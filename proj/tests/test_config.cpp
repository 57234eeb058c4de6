#include <doctest.h>

#include "costfuse/config.hpp"
#include "costfuse/error.hpp"

using namespace costfuse;
using namespace costfuse::config;

namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config(text, "t.toml");
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("document parser: values, comments, escapes, multi-line arrays") {
  const auto doc = parse_document(
      "top = 1\n"
      "[a]\n"
      "s = \"x \\\"q\\\" \\\\ \\n\"  # comment\n"
      "r = -2.5e-1\n"
      "b = false\n"
      "arr = [1, 2,\n"
      "       3]\n"
      "\n"
      "strs = [\"p\", \"q\"]\n");
  CHECK(std::get<std::int64_t>(doc.at("").at("top").data) == 1);
  CHECK(std::get<std::string>(doc.at("a").at("s").data) == "x \"q\" \\ \n");
  CHECK(std::get<double>(doc.at("a").at("r").data) == -0.25);
  CHECK(std::get<bool>(doc.at("a").at("b").data) == false);
  CHECK(std::get<Value::Array>(doc.at("a").at("arr").data).size() == 3);
  CHECK(doc.at("a").at("strs").line == 9);
}

TEST_CASE("document parser reports the offending line") {
  const std::vector<std::pair<std::string, std::size_t>> cases{
      {"[a]\nx = 1\nx = 2\n", 3},
      {"[a]\n[b]\n[a]\n", 3},
      {"[a]\nx = \"open\n", 2},
      {"[a]\n\nx = 1 2\n", 3},
      {"[a]\nx = [[1]]\n", 2},
      {"[a]\nx = 12abc\n", 2},
      {"[a]\nx =\n", 2},
  };
  for (const auto& [text, line] : cases) {
    try {
      parse_document(text);
      FAIL("accepted: " << text);
    } catch (const ParseError& e) {
      CHECK_MESSAGE(e.line() == line, text);
    }
  }
}

TEST_CASE("defaults validate and serialise to a document that parses back identically") {
  const RunConfig defaults;
  CHECK_NOTHROW(defaults.validate());
  CHECK(parse_config(serialize(defaults)) == defaults);

  RunConfig c;
  c.seed = 99;
  c.out_dir = "some dir/with \"quotes\"";
  c.stages = {"gen", "learn-dict"};
  c.gen.texture_dir = "C:\\textures";
  c.dictionary.lambda = 0.123456789012345;
  c.fusion.grid = {0.25, 1.0 / 3.0};
  c.backend.mode = "pair";
  c.backend.classifier.hidden = {7, 5, 3};
  c.fusion.distance = "cosine";
  CHECK(parse_config(serialize(c)) == c);
  CHECK(serialize(parse_config(serialize(c))) == serialize(c));
}

TEST_CASE("unknown sections and keys are rejected with field path and line") {
  const auto unknown_key = message_of("[dictionary]\natoms = 4\natom = 5\n");
  CHECK(contains(unknown_key, "t.toml:3"));
  CHECK(contains(unknown_key, "dictionary.atom"));
  const auto unknown_section = message_of("[run]\nseed = 1\n[dictonary]\natoms = 4\n");
  CHECK(contains(unknown_section, "dictonary"));
  CHECK(contains(unknown_section, ":4"));
  CHECK_THROWS_AS(parse_config("stray = 1\n"), ValidationError);
}

TEST_CASE("type mismatches name the field") {
  CHECK(contains(message_of("[dictionary]\natoms = \"many\"\n"), "dictionary.atoms' must be an integer"));
  CHECK(contains(message_of("[fusion]\ngrid = [0.1, \"x\"]\n"), "fusion.grid"));
  CHECK(contains(message_of("[run]\nseed = -3\n"), "run.seed"));
  CHECK(contains(message_of("[cost]\nhidden = [64, 1.5]\n"), "cost.hidden"));
  // Integers are accepted where a real is expected.
  CHECK(parse_config("[fusion]\nalpha = 1\n").fusion.alpha == 1.0);
}

TEST_CASE("range and enum validation name the field") {
  CHECK(contains(message_of("[fusion]\nalpha = 1.5\n"), "fusion.alpha"));
  CHECK(contains(message_of("[fusion]\ngrid = []\n"), "fusion.grid"));
  CHECK(contains(message_of("[fusion]\nnormalization = \"zscore\"\n"), "fusion.normalization"));
  CHECK(contains(message_of("[backend]\nmode = \"triplet\"\n"), "backend.mode"));
  CHECK(contains(message_of("[backend]\nhidden = [8]\n"), "backend.hidden"));
  CHECK(contains(message_of("[gen]\nimage_size = 16\n"), "gen.image_size"));
  CHECK(contains(message_of("[gen]\ntexture_classes = 48\n"), "gen.texture_classes"));
  CHECK(contains(message_of("[dictionary]\nstep = 0\n"), "dictionary.step"));
  CHECK(contains(message_of("[run]\nstages = [\"gen\", \"gen\"]\n"), "run.stages"));
  CHECK(contains(message_of("[run]\nstages = [\"train\"]\n"), "run.stages"));
}

TEST_CASE("shipped presets load") {
  const auto desk = load_config(std::filesystem::path(COSTFUSE_SOURCE_DIR) / "configs" / "desk.toml");
  CHECK(desk.dictionary.atoms == 128);
  CHECK(desk.dictionary.signal_size == 16);
  CHECK(desk.stages == kAllStages);
  const auto full = load_config(std::filesystem::path(COSTFUSE_SOURCE_DIR) / "configs" / "full.toml");
  CHECK(full.gen.image_size == 250);
  CHECK(full.gen.color_per_class == 1000);
  CHECK(full.gen.texture_classes == 47);
  CHECK(full.gen.literal_red);
  CHECK(full.dictionary.signal_size == 64);
  CHECK_THROWS_AS(load_config("/nonexistent/x.toml"), ValidationError);
}
