#include "costfuse/backend.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "costfuse/csv.hpp"
#include "costfuse/error.hpp"
#include "costfuse/rng.hpp"

namespace costfuse::backend {

namespace fs = std::filesystem;
using nlohmann::json;

Mode parse_mode(std::string_view s) {
  if (s == "identity") return Mode::identity;
  if (s == "pair") return Mode::pair;
  throw ValidationError("unknown backend mode '" + std::string(s) + "' (expected identity or pair)");
}

std::string_view to_string(Mode m) { return m == Mode::identity ? "identity" : "pair"; }

void ReferenceConfig::validate() const {
  if (input_size < 1) throw ValidationError("backend input_size must be >= 1");
  if (hidden.size() < 2) throw ValidationError("backend needs at least two hidden layers");
  for (int h : hidden) {
    if (h < 1) throw ValidationError("backend hidden layer sizes must be >= 1");
  }
  if (imposters_per_genuine < 1) throw ValidationError("imposters_per_genuine must be >= 1");
  train.validate();
}

Eigen::VectorXd pixel_features(const RasterImage& img, int input_size) { return to_signal(img, input_size, input_size); }

Eigen::VectorXd pair_features(const RasterImage& a, const RasterImage& b, int input_size) {
  return (pixel_features(a, input_size) - pixel_features(b, input_size)).cwiseAbs();
}

namespace {

std::vector<std::string> sorted_labels(const std::vector<LabeledImage>& data) {
  std::set<std::string> labels;
  for (const auto& d : data) labels.insert(d.label);
  return {labels.begin(), labels.end()};
}

struct Samples {
  Eigen::MatrixXd rows;
  std::vector<int> labels;
};

Samples identity_samples(const std::vector<LabeledImage>& data, const std::vector<std::string>& classes, int size) {
  Samples s;
  s.rows.resize(static_cast<Eigen::Index>(data.size()), size * size * 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.rows.row(static_cast<Eigen::Index>(i)) = pixel_features(data[i].image, size).transpose();
    const auto it = std::lower_bound(classes.begin(), classes.end(), data[i].label);
    s.labels.push_back(static_cast<int>(it - classes.begin()));
  }
  return s;
}

Samples pair_samples(const std::vector<LabeledImage>& data, const ReferenceConfig& cfg) {
  const int size = cfg.input_size;
  std::vector<Eigen::VectorXd> feats;
  feats.reserve(data.size());
  for (const auto& d : data) feats.push_back(pixel_features(d.image, size));

  std::vector<std::pair<std::size_t, std::size_t>> genuine;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = i + 1; j < data.size(); ++j) {
      if (data[i].label == data[j].label) genuine.emplace_back(i, j);
    }
  }
  if (genuine.empty()) throw ValidationError("pair mode needs at least one genuine pair (two images of one label)");

  Rng rng(derive_seed(cfg.seed, "pair-sampling"));
  const std::size_t n_imp = genuine.size() * static_cast<std::size_t>(cfg.imposters_per_genuine);
  std::vector<std::pair<std::size_t, std::size_t>> imposter;
  imposter.reserve(n_imp);
  const auto last = static_cast<std::int64_t>(data.size()) - 1;
  while (imposter.size() < n_imp) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, last));
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, last));
    if (data[i].label != data[j].label) imposter.emplace_back(i, j);
  }

  Samples s;
  s.rows.resize(static_cast<Eigen::Index>(genuine.size() + imposter.size()), size * size * 3);
  Eigen::Index r = 0;
  for (const auto& [i, j] : genuine) {
    s.rows.row(r++) = (feats[i] - feats[j]).cwiseAbs().transpose();
    s.labels.push_back(0);
  }
  for (const auto& [i, j] : imposter) {
    s.rows.row(r++) = (feats[i] - feats[j]).cwiseAbs().transpose();
    s.labels.push_back(1);
  }
  return s;
}

}  // namespace

TrainedReference reference_classifier_train(const std::vector<LabeledImage>& data, Mode mode,
                                            const ReferenceConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ValidationError("backend training set is empty");
  const auto classes = sorted_labels(data);
  if (classes.size() < 2) {
    throw ValidationError("backend training needs at least two labels, got " + std::to_string(classes.size()));
  }
  const int dim = cfg.input_size * cfg.input_size * 3;
  Samples samples;
  std::vector<std::string> out_classes;
  if (mode == Mode::identity) {
    samples = identity_samples(data, classes, cfg.input_size);
    out_classes = classes;
  } else {
    samples = pair_samples(data, cfg);
    out_classes = {"same", "different"};
  }
  std::vector<int> sizes{dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(static_cast<int>(out_classes.size()));
  auto net = mlp::init_mlp(sizes, derive_seed(cfg.seed, "backend-init"));
  net.classes = out_classes;
  if (cfg.standardize) mlp::fit_standardization(net, samples.rows);
  auto train_cfg = cfg.train;
  train_cfg.seed = derive_seed(cfg.seed, "backend-train");
  auto result = mlp::train(std::move(net), samples.rows, samples.labels, train_cfg);
  return {ReferenceModel{mode, cfg.input_size, std::move(result.model)}, std::move(result.loss_history)};
}

BackendOutput backend_score(const ReferenceModel& model, const RasterImage& img) {
  if (model.mode != Mode::identity) throw ValidationError("pair-mode backend scores image pairs, got a single image");
  return {Mode::identity, mlp::forward(model.net, pixel_features(img, model.input_size))};
}

BackendOutput backend_score(const ReferenceModel& model, const RasterImage& a, const RasterImage& b) {
  if (model.mode != Mode::pair) throw ValidationError("identity-mode backend scores single images, got a pair");
  return {Mode::pair, mlp::forward(model.net, pair_features(a, b, model.input_size))};
}

double training_accuracy(const ReferenceModel& model, const std::vector<LabeledImage>& data) {
  if (model.mode != Mode::identity) throw ValidationError("training_accuracy needs an identity-mode model");
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& d : data) {
    Eigen::Index arg = 0;
    backend_score(model, d.image).activation.maxCoeff(&arg);
    if (model.net.classes.at(static_cast<std::size_t>(arg)) == d.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_reference(const ReferenceModel& model, const fs::path& path) {
  mlp::validate(model.net);
  json j{{"mode", to_string(model.mode)}, {"input_size", model.input_size}, {"net", mlp::to_json(model.net)}};
  auto out = csv::open_output(path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing backend model '" + path.string() + "'");
}

ReferenceModel load_reference(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open backend model '" + path.string() + "'");
  try {
    const auto j = json::parse(in);
    ReferenceModel m;
    m.mode = parse_mode(j.at("mode").get<std::string>());
    m.input_size = j.at("input_size").get<int>();
    m.net = mlp::model_from_json(j.at("net"));
    const int expected_out = m.mode == Mode::pair ? 2 : m.net.outputs();
    if (m.net.inputs() != m.input_size * m.input_size * 3 || m.net.outputs() != expected_out) {
      throw ValidationError("network shape does not match mode and input_size");
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError("malformed backend model '" + path.string() + "': " + e.what());
  }
}

PrecomputedScoreTable::PrecomputedScoreTable(Kind kind, int width) : kind_(kind), width_(width) {
  if (kind == Kind::distance) width_ = 0;
  if (kind == Kind::pair && width != 2) throw ValidationError("pair activations have two entries");
  if (kind == Kind::identity && width < 1) throw ValidationError("identity activations need at least one entry");
}

std::size_t PrecomputedScoreTable::size() const noexcept {
  return kind_ == Kind::identity ? single_.size() : pairs_.size();
}

std::pair<std::string, std::string> PrecomputedScoreTable::key(const std::string& a, const std::string& b) {
  return a <= b ? std::pair{a, b} : std::pair{b, a};
}

void PrecomputedScoreTable::check_kind(Kind expected, std::string_view op) const {
  static constexpr std::string_view names[] = {"identity", "pair", "distance"};
  if (kind_ != expected) {
    throw ValidationError(std::string(op) + " needs a " + std::string(names[static_cast<int>(expected)]) +
                          " table, this one holds " + std::string(names[static_cast<int>(kind_)]) + " entries");
  }
}

void PrecomputedScoreTable::add(const std::string& path, Eigen::VectorXd activation) {
  check_kind(Kind::identity, "add(path)");
  if (activation.size() != width_) throw DimensionError("activation for '" + path + "' has wrong length");
  if (!single_.emplace(path, std::move(activation)).second) throw ValidationError("duplicate key '" + path + "'");
}

void PrecomputedScoreTable::add(const std::string& path1, const std::string& path2, Eigen::VectorXd activation) {
  check_kind(Kind::pair, "add(path1, path2, activation)");
  if (activation.size() != 2) throw DimensionError("pair activation must have two entries");
  if (!pairs_.emplace(key(path1, path2), std::move(activation)).second) {
    throw ValidationError("duplicate key (" + path1 + ", " + path2 + ")");
  }
}

void PrecomputedScoreTable::add(const std::string& path1, const std::string& path2, double distance) {
  check_kind(Kind::distance, "add(path1, path2, distance)");
  if (!pairs_.emplace(key(path1, path2), Eigen::VectorXd::Constant(1, distance)).second) {
    throw ValidationError("duplicate key (" + path1 + ", " + path2 + ")");
  }
}

const Eigen::VectorXd& PrecomputedScoreTable::activation(const std::string& path) const {
  check_kind(Kind::identity, "activation(path)");
  const auto it = single_.find(path);
  if (it == single_.end()) throw ValidationError("no precomputed score for '" + path + "'");
  return it->second;
}

const Eigen::VectorXd& PrecomputedScoreTable::activation(const std::string& path1, const std::string& path2) const {
  check_kind(Kind::pair, "activation(path1, path2)");
  const auto it = pairs_.find(key(path1, path2));
  if (it == pairs_.end()) throw ValidationError("no precomputed score for (" + path1 + ", " + path2 + ")");
  return it->second;
}

double PrecomputedScoreTable::distance(const std::string& path1, const std::string& path2) const {
  check_kind(Kind::distance, "distance(path1, path2)");
  const auto it = pairs_.find(key(path1, path2));
  if (it == pairs_.end()) throw ValidationError("no precomputed score for (" + path1 + ", " + path2 + ")");
  return it->second[0];
}

bool PrecomputedScoreTable::contains(const std::string& path) const { return single_.contains(path); }

bool PrecomputedScoreTable::contains(const std::string& path1, const std::string& path2) const {
  return pairs_.contains(key(path1, path2));
}

bool operator==(const PrecomputedScoreTable& a, const PrecomputedScoreTable& b) {
  auto same = [](const auto& x, const auto& y) {
    if (x.size() != y.size()) return false;
    for (auto ix = x.begin(), iy = y.begin(); ix != x.end(); ++ix, ++iy) {
      if (ix->first != iy->first || ix->second.size() != iy->second.size() || ix->second != iy->second) return false;
    }
    return true;
  };
  return a.kind_ == b.kind_ && a.width_ == b.width_ && same(a.single_, b.single_) && same(a.pairs_, b.pairs_);
}

PrecomputedScoreTable load_precomputed(const fs::path& path) {
  csv::Reader reader(path);
  std::vector<std::string> f;
  if (!reader.next(f)) reader.fail("missing header");
  auto value_columns = [&](std::size_t from) {
    for (std::size_t i = from; i < f.size(); ++i) {
      if (f[i] != "v" + std::to_string(i - from)) reader.fail("expected column 'v" + std::to_string(i - from) + "'");
    }
    return static_cast<int>(f.size() - from);
  };
  PrecomputedScoreTable table;
  std::size_t skip = 0;
  if (f.size() >= 2 && f[0] == "path" && f[1] == "v0") {
    table = PrecomputedScoreTable(PrecomputedScoreTable::Kind::identity, value_columns(1));
    skip = 1;
  } else if (f.size() == 3 && f[0] == "path1" && f[1] == "path2" && f[2] == "distance") {
    table = PrecomputedScoreTable(PrecomputedScoreTable::Kind::distance, 0);
    skip = 2;
  } else if (f.size() == 4 && f[0] == "path1" && f[1] == "path2") {
    table = PrecomputedScoreTable(PrecomputedScoreTable::Kind::pair, value_columns(2));
    skip = 2;
  } else {
    reader.fail("unrecognised score header (expected 'path,v0,..', 'path1,path2,v0,v1' or 'path1,path2,distance')");
  }
  const std::size_t cols = f.size();
  while (reader.next(f)) {
    if (f.size() != cols) reader.fail("expected " + std::to_string(cols) + " fields, got " + std::to_string(f.size()));
    try {
      Eigen::VectorXd v(static_cast<Eigen::Index>(cols - skip));
      for (std::size_t i = skip; i < cols; ++i) {
        v[static_cast<Eigen::Index>(i - skip)] = csv::parse_double(f[i], "score value");
      }
      if (!v.allFinite()) throw ValidationError("score values must be finite");
      switch (table.kind()) {
        case PrecomputedScoreTable::Kind::identity:
          table.add(f[0], std::move(v));
          break;
        case PrecomputedScoreTable::Kind::pair:
          table.add(f[0], f[1], std::move(v));
          break;
        case PrecomputedScoreTable::Kind::distance:
          table.add(f[0], f[1], v[0]);
          break;
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      reader.fail(e.what());
    }
  }
  return table;
}

void save_precomputed(const PrecomputedScoreTable& table, const fs::path& path) {
  auto out = csv::open_output(path);
  auto values = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << csv::format_double(v[i]);
  };
  switch (table.kind()) {
    case PrecomputedScoreTable::Kind::identity:
      out << "path";
      for (int i = 0; i < table.width(); ++i) out << ",v" << i;
      out << '\n';
      for (const auto& [p, v] : table.identity_entries()) {
        out << csv::escape(p);
        values(v);
        out << '\n';
      }
      break;
    case PrecomputedScoreTable::Kind::pair:
    case PrecomputedScoreTable::Kind::distance:
      out << (table.kind() == PrecomputedScoreTable::Kind::pair ? "path1,path2,v0,v1\n" : "path1,path2,distance\n");
      for (const auto& [k, v] : table.pair_entries()) {
        out << csv::escape(k.first) << ',' << csv::escape(k.second);
        values(v);
        out << '\n';
      }
      break;
  }
  if (!out) throw IoError("failed writing score table '" + path.string() + "'");
}

ModelScorer::ModelScorer(ReferenceModel model, Loader loader, fusion::DistanceMetric metric)
    : model_(std::move(model)), loader_(std::move(loader)), metric_(metric) {
  mlp::validate(model_.net);
}

RasterImage ModelScorer::image(const std::string& path) const { return loader_(path); }

Eigen::VectorXd ModelScorer::activation(const std::string& path) const {
  {
    std::lock_guard lock(mutex_);
    if (const auto it = features_.find(path); it != features_.end()) return it->second;
  }
  auto act = backend_score(model_, image(path)).activation;
  std::lock_guard lock(mutex_);
  return features_.emplace(path, std::move(act)).first->second;
}

double ModelScorer::distance(const std::string& path1, const std::string& path2) const {
  if (model_.mode == Mode::identity) return fusion::softmax_distance(activation(path1), activation(path2), metric_);
  return backend_score(model_, image(path1), image(path2)).activation[1];
}

TableScorer::TableScorer(PrecomputedScoreTable table, fusion::DistanceMetric metric)
    : table_(std::move(table)), metric_(metric) {}

double TableScorer::distance(const std::string& path1, const std::string& path2) const {
  switch (table_.kind()) {
    case PrecomputedScoreTable::Kind::identity:
      return fusion::softmax_distance(table_.activation(path1), table_.activation(path2), metric_);
    case PrecomputedScoreTable::Kind::pair:
      return table_.activation(path1, path2)[1];
    case PrecomputedScoreTable::Kind::distance:
      break;
  }
  return table_.distance(path1, path2);
}

}  // namespace costfuse::backend
