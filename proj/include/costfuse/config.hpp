#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace costfuse::config {

/// A value in the sectioned key = value format: string, integer, real,
/// boolean, or a one-level array of strings or numbers.
struct Value {
  using Array = std::vector<Value>;
  std::variant<std::string, std::int64_t, double, bool, Array> data;
  std::size_t line = 0;
};

/// section -> key -> value. Keys before the first section live in "".
using Document = std::map<std::string, std::map<std::string, Value>>;

/// Supports [section] headers, `key = value` lines, # comments, basic
/// strings with \" \\ \n \t escapes, and arrays that may span lines.
/// Throws ParseError with the line number.
Document parse_document(std::string_view text, const std::string& source = "<config>");

inline const std::vector<std::string> kAllStages{"gen",         "learn-dict", "centroids", "encode",
                                                 "train-cost",  "train-backend", "score",  "fuse",
                                                 "eval-verify", "eval-identify"};

struct GenConfig {
  int image_size = 64;
  int color_per_class = 50;
  int shape_per_class = 50;
  /// External texture corpus root/<class>/<image>; empty selects the
  /// procedural stand-in.
  std::string texture_dir;
  int texture_classes = 5;
  int texture_per_class = 50;
  bool literal_red = false;
  int identities = 10;
  int train_per_identity = 6;
  int val_per_identity = 4;
  int test_per_identity = 4;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

struct DictConfig {
  int signal_size = 16;
  int atoms = 128;
  double lambda = 0.1;
  double step = 0.01;
  int max_iters = 1280;
  int epochs = 100;

  friend bool operator==(const DictConfig&, const DictConfig&) = default;
};

struct ClassifierConfig {
  std::vector<std::int64_t> hidden{64, 32};
  int epochs = 20000;
  double learning_rate = 0.05;
  int batch_size = 0;
  /// z-score the classifier inputs with statistics of the training split.
  bool standardize = false;

  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

struct BackendConfig {
  std::string mode = "identity";
  /// Score file from an external model; empty trains the reference model.
  std::string precomputed;
  int input_size = 16;
  ClassifierConfig classifier{{64, 32}, 100, 0.05, 0, true};
  int imposters_per_genuine = 1;

  friend bool operator==(const BackendConfig&, const BackendConfig&) = default;
};

struct FusionConfig {
  double alpha = 0.3;
  bool search = true;
  std::vector<double> grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::string normalization = "minmax";
  std::string distance = "euclidean";

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/desk";
  std::vector<std::string> stages = kAllStages;
  GenConfig gen;
  DictConfig dictionary;
  ClassifierConfig cost;
  BackendConfig backend;
  FusionConfig fusion;

  /// Range and enum checks; throws ValidationError naming the field path.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Unknown sections or keys and type mismatches raise ValidationError with
/// the field path (e.g. "dictionary.atoms") and line.
RunConfig from_document(const Document& doc, const std::string& source = "<config>");
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Every field, in a fixed order; parse_config(serialize(c)) == c.
std::string serialize(const RunConfig& c);

}  // namespace costfuse::config
