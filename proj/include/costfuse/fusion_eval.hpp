#pragma once

#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "costfuse/error.hpp"

namespace costfuse::fusion {

enum class DistanceMetric { euclidean, cosine };
DistanceMetric parse_metric(std::string_view s);
std::string_view to_string(DistanceMetric m);

/// Distance between two softmax activation vectors. Euclidean lies in
/// [0, sqrt(2)]; cosine distance is 1 - cos(p, q).
template <typename A, typename B>
double softmax_distance(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q,
                        DistanceMetric metric = DistanceMetric::euclidean) {
  if (p.size() != q.size()) {
    throw DimensionError("activation vectors differ in length (" + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()) + ")");
  }
  if (metric == DistanceMetric::euclidean) return (p - q).norm();
  const double denom = p.norm() * q.norm();
  if (denom == 0.0) throw NumericError("cosine distance of a zero vector");
  return 1.0 - p.dot(q) / denom;
}

/// alpha * dist_cost + (1 - alpha) * dist_supervised, alpha in [0, 1].
double fuse(double dist_cost, double dist_supervised, double alpha);

enum class Normalization { minmax, none };
Normalization parse_normalization(std::string_view s);
std::string_view to_string(Normalization n);

/// minmax maps the values onto [0,1] (a constant set maps to zeros); none is
/// the identity.
std::vector<double> normalize_scores(std::span<const double> values, Normalization method);

enum class Label { genuine, imposter };
Label parse_label(std::string_view s);
std::string_view to_string(Label l);

struct PairRow {
  std::string path1;
  std::string path2;
  Label label;
};
using PairList = std::vector<PairRow>;

/// CSV `path1,path2,label`, label in {genuine, imposter}. Rejects a pair
/// listed twice (in either order) with conflicting labels.
PairList read_pair_list(const std::filesystem::path& path);
void write_pair_list(const PairList& pairs, const std::filesystem::path& path);

struct ScoreRecord {
  std::string path1;
  std::string path2;
  double dist_cost = 0.0;
  double dist_supervised = 0.0;
  double dist_fused = std::nan("");
  double alpha = std::nan("");
  Label label = Label::imposter;
};

enum class Channel { cost, supervised, fused };
std::string_view to_string(Channel c);
double channel_value(const ScoreRecord& r, Channel c);

/// CSV `path1,path2,dist_cost,dist_supervised,dist_fused,label`. An
/// unfused record has an empty dist_fused field.
void write_scores(std::span<const ScoreRecord> records, const std::filesystem::path& path);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

/// Normalises each channel over the record set, then fuses at `alpha`.
std::vector<ScoreRecord> apply_fusion(std::span<const ScoreRecord> records, double alpha, Normalization method);

/// Fuses the stored operands at `alpha` without renormalising.
std::vector<ScoreRecord> refuse(std::span<const ScoreRecord> records, double alpha);

struct RocPoint {
  double threshold;
  double far;
  double gar;
};

/// Starts at (threshold -inf, 0, 0); then one point per distinct distance in
/// ascending order. A pair is accepted when its distance is <= threshold.
std::vector<RocPoint> roc_curve(std::span<const double> distances, std::span<const Label> labels);

/// GAR at the largest threshold whose FAR does not exceed `far`.
double gar_at_far(std::span<const RocPoint> roc, double far);

struct VerificationResult {
  std::vector<RocPoint> roc;
  double gar_at_1pct = 0.0;
  double gar_at_01pct = 0.0;
};

VerificationResult verification_metrics(std::span<const ScoreRecord> records, Channel channel);

struct CmcCurve {
  /// rate[r - 1] = fraction of probes identified within rank r.
  std::vector<double> rate;
  double at(std::size_t rank) const { return rate.at(rank - 1); }
  std::size_t gallery_size() const { return rate.size(); }
};

/// distances(p, g) between probe p and gallery entry g. Gallery entries are
/// ranked by ascending distance with ties broken by gallery index.
CmcCurve cmc(const Eigen::MatrixXd& distances, std::span<const std::string> probe_ids,
             std::span<const std::string> gallery_ids);

/// CMC from probe/gallery score records: path1 is the probe, path2 the
/// gallery entry, genuine marks a correct identity. Gallery index is the
/// order of first appearance of path2; every probe must be scored against
/// every gallery entry.
CmcCurve cmc_from_records(std::span<const ScoreRecord> records, Channel channel);

std::vector<double> default_alpha_grid();

/// Grid alpha maximising GAR@1%FAR of the fused channel; ties go to the
/// smallest alpha. Records must already carry (normalised) operands.
double grid_search_alpha(std::span<const ScoreRecord> records, std::span<const double> grid);

void write_roc(std::span<const RocPoint> roc, const std::filesystem::path& path);
void write_cmc(const CmcCurve& curve, const std::filesystem::path& path);

}  // namespace costfuse::fusion
