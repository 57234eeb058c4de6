#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "costfuse/image.hpp"
#include "costfuse/sparse_dict.hpp"
#include "costfuse/synthgen.hpp"

namespace costfuse::cost {

using synth::Subtype;

/// Width of the COST vector for the full class layout (10 colour, 7 shape and
/// 47 texture classes).
inline constexpr std::size_t kCostDim = 64;
inline constexpr std::size_t kTextureClasses = 47;

/// Class labels per subtype in global order: colour, then shape, then texture.
struct ClassLayout {
  std::vector<std::string> color;
  std::vector<std::string> shape;
  std::vector<std::string> texture;

  /// Fixed colour/shape tables plus the given texture labels (sorted).
  static ClassLayout with_textures(std::vector<std::string> texture_labels);

  const std::vector<std::string>& labels(Subtype s) const;
  std::size_t offset(Subtype s) const;
  std::size_t size() const { return color.size() + shape.size() + texture.size(); }
  /// True for the 10 + 7 + 47 = 64 layout.
  bool is_full() const;

  friend bool operator==(const ClassLayout&, const ClassLayout&) = default;
};

/// Centroids of one subtype, one column per class in layout order.
struct CentroidBlock {
  Subtype subtype = Subtype::color;
  std::vector<std::string> labels;
  Eigen::MatrixXd centroids;
};

class CentroidSet {
 public:
  CentroidSet() = default;
  CentroidSet(ClassLayout layout, std::array<CentroidBlock, 3> blocks);

  const ClassLayout& layout() const { return layout_; }
  const CentroidBlock& block(Subtype s) const { return blocks_[static_cast<std::size_t>(s)]; }
  std::size_t size() const { return layout_.size(); }

  /// Global position of (subtype, label); throws InvalidClassError.
  std::size_t index_of(Subtype s, const std::string& label) const;

 private:
  ClassLayout layout_;
  std::array<CentroidBlock, 3> blocks_;
};

/// subtype -> class label -> codes of that class's training images.
using CodeSet = std::map<Subtype, std::map<std::string, std::vector<Eigen::VectorXd>>>;

/// Arithmetic mean of each class's codes. Throws ValidationError naming any
/// class of the layout that has no codes.
CentroidSet compute_centroids(const CodeSet& codes, const ClassLayout& layout);

/// JSON with an explicit global "order" list; blocks and classes within a
/// block may be stored in any order and are re-aligned on load.
void save_centroids(const CentroidSet& set, const std::filesystem::path& path);
CentroidSet load_centroids(const std::filesystem::path& path);

using DictionarySet = std::array<sparse::Dictionary, 3>;
using CostVector = Eigen::VectorXd;

/// Encodes images as distances from their subtype codes to every centroid.
/// Dictionaries are indexed by Subtype; each subtype's code is compared with
/// that subtype's centroids only.
class CostEncoder {
 public:
  /// `params` overrides each dictionary's own coding parameters when given.
  CostEncoder(DictionarySet dicts, CentroidSet centroids, std::optional<sparse::CodingParams> params = std::nullopt);

  std::size_t size() const { return centroids_.size(); }
  const CentroidSet& centroids() const { return centroids_; }

  /// Sparse code of `img` in one subtype's dictionary.
  Eigen::VectorXd code(const RasterImage& img, Subtype s) const;

  /// Distances from per-subtype codes to all centroids.
  CostVector from_codes(const std::array<Eigen::VectorXd, 3>& codes) const;

  CostVector encode(const RasterImage& img) const;

 private:
  DictionarySet dicts_;
  CentroidSet centroids_;
  std::vector<sparse::StagewiseCoder<double>> coders_;
};

CostVector encode_cost(const RasterImage& img, const DictionarySet& dicts, const CentroidSet& centroids,
                       const sparse::CodingParams& params);

struct FeatureRow {
  std::string path;
  std::string label;
  CostVector values;
};

struct BatchFailure {
  std::string path;
  std::string message;
};

struct BatchResult {
  std::vector<FeatureRow> rows;
  std::vector<BatchFailure> failures;
};

struct LabeledPath {
  std::filesystem::path path;
  std::string label;
};

/// Order-preserving parallel map of CostEncoder::encode. Unreadable images
/// become failure entries and the batch continues.
BatchResult encode_batch(const std::vector<LabeledPath>& items, const CostEncoder& encoder);

/// CSV `path,label,d0,...,d{n-1}`.
void write_features(const std::vector<FeatureRow>& rows, std::size_t dim, const std::filesystem::path& path);
std::vector<FeatureRow> read_features(const std::filesystem::path& path);

}  // namespace costfuse::cost
