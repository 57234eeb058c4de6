#include "costfuse/fusion_eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

#include "costfuse/csv.hpp"

namespace costfuse::fusion {

namespace fs = std::filesystem;

DistanceMetric parse_metric(std::string_view s) {
  if (s == "euclidean") return DistanceMetric::euclidean;
  if (s == "cosine") return DistanceMetric::cosine;
  throw ValidationError("unknown distance '" + std::string(s) + "' (expected euclidean or cosine)");
}

std::string_view to_string(DistanceMetric m) { return m == DistanceMetric::euclidean ? "euclidean" : "cosine"; }

double fuse(double dist_cost, double dist_supervised, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1], got " + csv::format_double(alpha));
  return alpha * dist_cost + (1.0 - alpha) * dist_supervised;
}

Normalization parse_normalization(std::string_view s) {
  if (s == "minmax") return Normalization::minmax;
  if (s == "none") return Normalization::none;
  throw ValidationError("unknown normalization '" + std::string(s) + "' (expected minmax or none)");
}

std::string_view to_string(Normalization n) { return n == Normalization::minmax ? "minmax" : "none"; }

std::vector<double> normalize_scores(std::span<const double> values, Normalization method) {
  if (values.empty()) throw ValidationError("cannot normalise an empty score set");
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("scores must be finite");
  }
  std::vector<double> out(values.begin(), values.end());
  if (method == Normalization::none) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  for (auto& v : out) v = range > 0.0 ? (v - *lo) / range : 0.0;
  return out;
}

Label parse_label(std::string_view s) {
  if (s == "genuine") return Label::genuine;
  if (s == "imposter") return Label::imposter;
  throw ValidationError("unknown label '" + std::string(s) + "' (expected genuine or imposter)");
}

std::string_view to_string(Label l) { return l == Label::genuine ? "genuine" : "imposter"; }

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::cost:
      return "cost";
    case Channel::supervised:
      return "supervised";
    case Channel::fused:
      break;
  }
  return "fused";
}

double channel_value(const ScoreRecord& r, Channel c) {
  switch (c) {
    case Channel::cost:
      return r.dist_cost;
    case Channel::supervised:
      return r.dist_supervised;
    case Channel::fused:
      break;
  }
  return r.dist_fused;
}

PairList read_pair_list(const fs::path& path) {
  csv::Reader reader(path);
  std::vector<std::string> f;
  if (!reader.next(f) || f != std::vector<std::string>{"path1", "path2", "label"}) {
    reader.fail("pair list header must be 'path1,path2,label'");
  }
  PairList pairs;
  std::map<std::pair<std::string, std::string>, Label> seen;
  while (reader.next(f)) {
    if (f.size() != 3) reader.fail("expected 3 fields, got " + std::to_string(f.size()));
    Label label;
    try {
      label = parse_label(f[2]);
    } catch (const ValidationError& e) {
      reader.fail(e.what());
    }
    auto key = std::minmax(f[0], f[1]);
    const auto [it, inserted] = seen.emplace(std::pair{key.first, key.second}, label);
    if (!inserted && it->second != label) reader.fail("pair (" + f[0] + ", " + f[1] + ") listed with conflicting labels");
    pairs.push_back({f[0], f[1], label});
  }
  return pairs;
}

void write_pair_list(const PairList& pairs, const fs::path& path) {
  auto out = csv::open_output(path);
  out << "path1,path2,label\n";
  for (const auto& p : pairs) out << csv::join({p.path1, p.path2, std::string(to_string(p.label))}) << '\n';
  if (!out) throw IoError("failed writing pair list '" + path.string() + "'");
}

void write_scores(std::span<const ScoreRecord> records, const fs::path& path) {
  auto out = csv::open_output(path);
  out << "path1,path2,dist_cost,dist_supervised,dist_fused,label\n";
  for (const auto& r : records) {
    out << csv::escape(r.path1) << ',' << csv::escape(r.path2) << ',' << csv::format_double(r.dist_cost) << ','
        << csv::format_double(r.dist_supervised) << ',' << (std::isnan(r.dist_fused) ? "" : csv::format_double(r.dist_fused))
        << ',' << to_string(r.label) << '\n';
  }
  if (!out) throw IoError("failed writing scores '" + path.string() + "'");
}

std::vector<ScoreRecord> read_scores(const fs::path& path) {
  csv::Reader reader(path);
  std::vector<std::string> f;
  const std::vector<std::string> header{"path1", "path2", "dist_cost", "dist_supervised", "dist_fused", "label"};
  if (!reader.next(f) || f != header) reader.fail("score header must be 'path1,path2,dist_cost,dist_supervised,dist_fused,label'");
  std::vector<ScoreRecord> records;
  while (reader.next(f)) {
    if (f.size() != 6) reader.fail("expected 6 fields, got " + std::to_string(f.size()));
    try {
      ScoreRecord r;
      r.path1 = f[0];
      r.path2 = f[1];
      r.dist_cost = csv::parse_double(f[2], "dist_cost");
      r.dist_supervised = csv::parse_double(f[3], "dist_supervised");
      r.dist_fused = csv::parse_double(f[4], "dist_fused");
      r.label = parse_label(f[5]);
      if (!std::isfinite(r.dist_cost) || !std::isfinite(r.dist_supervised)) {
        throw ValidationError("channel distances must be finite");
      }
      records.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      reader.fail(e.what());
    }
  }
  return records;
}

std::vector<ScoreRecord> refuse(std::span<const ScoreRecord> records, double alpha) {
  std::vector<ScoreRecord> out(records.begin(), records.end());
  for (auto& r : out) {
    r.dist_fused = fuse(r.dist_cost, r.dist_supervised, alpha);
    r.alpha = alpha;
  }
  return out;
}

std::vector<ScoreRecord> apply_fusion(std::span<const ScoreRecord> records, double alpha, Normalization method) {
  if (records.empty()) throw ValidationError("no score records to fuse");
  std::vector<double> cost, sup;
  cost.reserve(records.size());
  sup.reserve(records.size());
  for (const auto& r : records) {
    cost.push_back(r.dist_cost);
    sup.push_back(r.dist_supervised);
  }
  cost = normalize_scores(cost, method);
  sup = normalize_scores(sup, method);
  std::vector<ScoreRecord> out(records.begin(), records.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].dist_cost = cost[i];
    out[i].dist_supervised = sup[i];
  }
  return refuse(out, alpha);
}

std::vector<RocPoint> roc_curve(std::span<const double> distances, std::span<const Label> labels) {
  if (distances.size() != labels.size()) throw DimensionError("one label per distance required");
  std::size_t n_gen = 0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (std::isnan(distances[i])) throw ValidationError("distance is NaN (channel not computed?)");
    n_gen += labels[i] == Label::genuine ? 1 : 0;
  }
  const std::size_t n_imp = labels.size() - n_gen;
  if (n_gen == 0 || n_imp == 0) {
    throw ValidationError("verification needs at least one genuine and one imposter pair (got " +
                          std::to_string(n_gen) + " genuine, " + std::to_string(n_imp) + " imposter)");
  }
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return distances[a] < distances[b]; });

  std::vector<RocPoint> roc{{-std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t gen = 0, imp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = distances[order[i]];
    for (; i < order.size() && distances[order[i]] == t; ++i) {
      (labels[order[i]] == Label::genuine ? gen : imp) += 1;
    }
    roc.push_back({t, static_cast<double>(imp) / static_cast<double>(n_imp), static_cast<double>(gen) / static_cast<double>(n_gen)});
  }
  return roc;
}

double gar_at_far(std::span<const RocPoint> roc, double far) {
  double gar = 0.0;
  for (const auto& p : roc) {
    if (p.far <= far) gar = p.gar;
  }
  return gar;
}

VerificationResult verification_metrics(std::span<const ScoreRecord> records, Channel channel) {
  std::vector<double> d;
  std::vector<Label> labels;
  d.reserve(records.size());
  labels.reserve(records.size());
  for (const auto& r : records) {
    d.push_back(channel_value(r, channel));
    labels.push_back(r.label);
  }
  VerificationResult res;
  res.roc = roc_curve(d, labels);
  res.gar_at_1pct = gar_at_far(res.roc, 0.01);
  res.gar_at_01pct = gar_at_far(res.roc, 0.001);
  return res;
}

CmcCurve cmc(const Eigen::MatrixXd& distances, std::span<const std::string> probe_ids,
             std::span<const std::string> gallery_ids) {
  if (distances.rows() != static_cast<Eigen::Index>(probe_ids.size()) ||
      distances.cols() != static_cast<Eigen::Index>(gallery_ids.size())) {
    throw DimensionError("distance matrix must be probes x gallery");
  }
  if (gallery_ids.empty()) throw ValidationError("gallery is empty");
  if (probe_ids.empty()) throw ValidationError("no probes");
  const std::size_t g = gallery_ids.size();
  std::vector<std::size_t> hits(g, 0);
  std::vector<std::size_t> order(g);
  for (std::size_t p = 0; p < probe_ids.size(); ++p) {
    const auto row = distances.row(static_cast<Eigen::Index>(p));
    if (!row.allFinite()) throw ValidationError("probe distances must be finite");
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return row[static_cast<Eigen::Index>(a)] < row[static_cast<Eigen::Index>(b)]; });
    std::size_t rank = 0;
    for (std::size_t r = 0; r < g; ++r) {
      if (gallery_ids[order[r]] == probe_ids[p]) {
        rank = r + 1;
        break;
      }
    }
    if (rank == 0) throw ValidationError("probe identity '" + probe_ids[p] + "' is absent from the gallery");
    ++hits[rank - 1];
  }
  CmcCurve curve;
  curve.rate.resize(g);
  std::size_t cum = 0;
  for (std::size_t r = 0; r < g; ++r) {
    cum += hits[r];
    curve.rate[r] = static_cast<double>(cum) / static_cast<double>(probe_ids.size());
  }
  return curve;
}

CmcCurve cmc_from_records(std::span<const ScoreRecord> records, Channel channel) {
  std::unordered_map<std::string, std::size_t> gallery_index, probe_index;
  std::vector<std::string> gallery, probes;
  for (const auto& r : records) {
    if (gallery_index.emplace(r.path2, gallery.size()).second) gallery.push_back(r.path2);
    if (probe_index.emplace(r.path1, probes.size()).second) probes.push_back(r.path1);
  }
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(probes.size()),
                                                static_cast<Eigen::Index>(gallery.size()), nan);
  // Genuine flags become identities: a probe's own id vs a per-entry id.
  std::vector<std::vector<bool>> genuine(probes.size(), std::vector<bool>(gallery.size(), false));
  for (const auto& r : records) {
    const auto p = probe_index[r.path1], g = gallery_index[r.path2];
    if (!std::isnan(d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(g)))) {
      throw ValidationError("probe '" + r.path1 + "' scored twice against '" + r.path2 + "'");
    }
    d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(g)) = channel_value(r, channel);
    genuine[p][g] = r.label == Label::genuine;
  }
  if (!d.allFinite()) throw ValidationError("every probe must be scored against every gallery entry");
  const std::size_t G = gallery.size();
  std::vector<std::size_t> hits(G, 0);
  std::vector<std::size_t> order(G);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const auto row = d.row(static_cast<Eigen::Index>(p));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return row[static_cast<Eigen::Index>(a)] < row[static_cast<Eigen::Index>(b)]; });
    std::size_t rank = 0;
    for (std::size_t r = 0; r < G; ++r) {
      if (genuine[p][order[r]]) {
        rank = r + 1;
        break;
      }
    }
    if (rank == 0) throw ValidationError("probe '" + probes[p] + "' has no genuine gallery entry");
    ++hits[rank - 1];
  }
  CmcCurve curve;
  curve.rate.resize(G);
  std::size_t cum = 0;
  for (std::size_t r = 0; r < G; ++r) {
    cum += hits[r];
    curve.rate[r] = static_cast<double>(cum) / static_cast<double>(probes.size());
  }
  return curve;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

double grid_search_alpha(std::span<const ScoreRecord> records, std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("alpha grid is empty");
  double best_alpha = 0.0;
  double best_gar = -1.0;
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  for (double alpha : sorted) {
    const auto fused = refuse(records, alpha);
    const double gar = verification_metrics(fused, Channel::fused).gar_at_1pct;
    if (gar > best_gar) {
      best_gar = gar;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

void write_roc(std::span<const RocPoint> roc, const fs::path& path) {
  auto out = csv::open_output(path);
  out << "threshold,far,gar\n";
  for (const auto& p : roc) {
    out << csv::format_double(p.threshold) << ',' << csv::format_double(p.far) << ',' << csv::format_double(p.gar) << '\n';
  }
  if (!out) throw IoError("failed writing ROC '" + path.string() + "'");
}

void write_cmc(const CmcCurve& curve, const fs::path& path) {
  auto out = csv::open_output(path);
  out << "rank,rate\n";
  for (std::size_t r = 0; r < curve.rate.size(); ++r) out << r + 1 << ',' << csv::format_double(curve.rate[r]) << '\n';
  if (!out) throw IoError("failed writing CMC '" + path.string() + "'");
}

}  // namespace costfuse::fusion
