#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "costfuse/fusion_eval.hpp"
#include "costfuse/image.hpp"
#include "costfuse/mlp.hpp"

namespace costfuse::backend {

/// identity: n-way softmax over training identities.
/// pair: two-node softmax, node 0 = same, node 1 = different.
enum class Mode { identity, pair };
Mode parse_mode(std::string_view s);
std::string_view to_string(Mode m);

struct BackendOutput {
  Mode mode;
  Eigen::VectorXd activation;
};

struct ReferenceConfig {
  int input_size = 16;
  /// At least two hidden layer sizes.
  std::vector<int> hidden{64, 32};
  mlp::TrainConfig train;
  std::uint64_t seed = 0;
  /// Pair mode: imposter pairs sampled per genuine pair.
  int imposters_per_genuine = 1;
  bool standardize = true;

  void validate() const;
};

struct ReferenceModel {
  Mode mode = Mode::identity;
  int input_size = 16;
  mlp::MlpModel net;
};

struct LabeledImage {
  std::string label;
  RasterImage image;
};

/// Downsampled pixels in [0,1], length input_size^2 * 3.
Eigen::VectorXd pixel_features(const RasterImage& img, int input_size);

/// |f(a) - f(b)| elementwise; symmetric in its arguments.
Eigen::VectorXd pair_features(const RasterImage& a, const RasterImage& b, int input_size);

struct TrainedReference {
  ReferenceModel model;
  std::vector<double> loss_history;
};

/// Small pixel-space classifier. Identity mode learns one class per label;
/// pair mode learns same/different on all genuine pairs plus seeded imposter
/// pairs. Pair mode needs at least two labels and one genuine pair.
TrainedReference reference_classifier_train(const std::vector<LabeledImage>& data, Mode mode,
                                            const ReferenceConfig& cfg);

/// Identity-mode scoring of one image.
BackendOutput backend_score(const ReferenceModel& model, const RasterImage& img);
/// Pair-mode scoring; backend_score(m, a, b) == backend_score(m, b, a).
BackendOutput backend_score(const ReferenceModel& model, const RasterImage& a, const RasterImage& b);

/// Fraction of `data` classified correctly (identity mode).
double training_accuracy(const ReferenceModel& model, const std::vector<LabeledImage>& data);

void save_reference(const ReferenceModel& model, const std::filesystem::path& path);
ReferenceModel load_reference(const std::filesystem::path& path);

/// Scores from an external model. One table holds one kind of entry:
/// per-image activations (identity), per-pair activations (pair) or per-pair
/// scalar distances. Pair keys ignore order.
class PrecomputedScoreTable {
 public:
  enum class Kind { identity, pair, distance };

  PrecomputedScoreTable() = default;
  PrecomputedScoreTable(Kind kind, int width);

  Kind kind() const noexcept { return kind_; }
  /// Activation length (0 for distance tables).
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept;

  void add(const std::string& path, Eigen::VectorXd activation);
  void add(const std::string& path1, const std::string& path2, Eigen::VectorXd activation);
  void add(const std::string& path1, const std::string& path2, double distance);

  const Eigen::VectorXd& activation(const std::string& path) const;
  const Eigen::VectorXd& activation(const std::string& path1, const std::string& path2) const;
  double distance(const std::string& path1, const std::string& path2) const;

  bool contains(const std::string& path) const;
  bool contains(const std::string& path1, const std::string& path2) const;

  /// Rows in key order, as save_precomputed writes them.
  const std::map<std::string, Eigen::VectorXd>& identity_entries() const noexcept { return single_; }
  const std::map<std::pair<std::string, std::string>, Eigen::VectorXd>& pair_entries() const noexcept { return pairs_; }

  friend bool operator==(const PrecomputedScoreTable& a, const PrecomputedScoreTable& b);

 private:
  static std::pair<std::string, std::string> key(const std::string& a, const std::string& b);
  void check_kind(Kind expected, std::string_view op) const;

  Kind kind_ = Kind::identity;
  int width_ = 0;
  std::map<std::string, Eigen::VectorXd> single_;
  std::map<std::pair<std::string, std::string>, Eigen::VectorXd> pairs_;
};

/// Header selects the kind: `path,v0,..,vn`, `path1,path2,v0,v1` or
/// `path1,path2,distance`.
PrecomputedScoreTable load_precomputed(const std::filesystem::path& path);
void save_precomputed(const PrecomputedScoreTable& table, const std::filesystem::path& path);

/// Source of the supervised-channel distance for a pair of image paths.
class SupervisedScorer {
 public:
  virtual ~SupervisedScorer() = default;
  virtual double distance(const std::string& path1, const std::string& path2) const = 0;
};

/// Live reference model. Identity mode: softmax_distance of the two
/// activations. Pair mode: probability of "different". Thread-safe.
class ModelScorer final : public SupervisedScorer {
 public:
  using Loader = std::function<RasterImage(const std::string&)>;

  ModelScorer(ReferenceModel model, Loader loader,
              fusion::DistanceMetric metric = fusion::DistanceMetric::euclidean);

  double distance(const std::string& path1, const std::string& path2) const override;
  /// Identity-mode activation of one path (cached).
  Eigen::VectorXd activation(const std::string& path) const;

 private:
  RasterImage image(const std::string& path) const;

  ReferenceModel model_;
  Loader loader_;
  fusion::DistanceMetric metric_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, Eigen::VectorXd> features_;
};

/// Precomputed table with the same distance semantics as ModelScorer.
/// Missing keys are reported when first looked up.
class TableScorer final : public SupervisedScorer {
 public:
  explicit TableScorer(PrecomputedScoreTable table,
                       fusion::DistanceMetric metric = fusion::DistanceMetric::euclidean);

  double distance(const std::string& path1, const std::string& path2) const override;

 private:
  PrecomputedScoreTable table_;
  fusion::DistanceMetric metric_;
};

}  // namespace costfuse::backend
