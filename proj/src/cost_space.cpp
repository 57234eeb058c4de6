#include "costfuse/cost_space.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "costfuse/csv.hpp"
#include "costfuse/error.hpp"
#include "costfuse/parallel.hpp"

namespace costfuse::cost {

namespace fs = std::filesystem;
using nlohmann::json;

ClassLayout ClassLayout::with_textures(std::vector<std::string> texture_labels) {
  std::sort(texture_labels.begin(), texture_labels.end());
  return {synth::color_labels(), synth::shape_labels(), std::move(texture_labels)};
}

const std::vector<std::string>& ClassLayout::labels(Subtype s) const {
  switch (s) {
    case Subtype::color:
      return color;
    case Subtype::shape:
      return shape;
    case Subtype::texture:
      break;
  }
  return texture;
}

std::size_t ClassLayout::offset(Subtype s) const {
  switch (s) {
    case Subtype::color:
      return 0;
    case Subtype::shape:
      return color.size();
    case Subtype::texture:
      break;
  }
  return color.size() + shape.size();
}

bool ClassLayout::is_full() const {
  return color.size() == 10 && shape.size() == 7 && texture.size() == kTextureClasses;
}

CentroidSet::CentroidSet(ClassLayout layout, std::array<CentroidBlock, 3> blocks)
    : layout_(std::move(layout)), blocks_(std::move(blocks)) {
  for (auto s : synth::kSubtypes) {
    const auto& b = block(s);
    if (b.subtype != s) throw ValidationError("centroid blocks are not in colour, shape, texture order");
    if (b.labels != layout_.labels(s)) {
      throw ValidationError("centroid labels for " + std::string(synth::to_string(s)) + " do not match the layout");
    }
    if (b.centroids.cols() != static_cast<Eigen::Index>(b.labels.size())) {
      throw DimensionError("centroid matrix width does not match class count");
    }
    if (!b.centroids.allFinite()) throw NumericError("centroids contain non-finite values");
  }
}

std::size_t CentroidSet::index_of(Subtype s, const std::string& label) const {
  const auto& labels = layout_.labels(s);
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw InvalidClassError("no " + std::string(synth::to_string(s)) + " centroid for '" + label + "'");
  }
  return layout_.offset(s) + static_cast<std::size_t>(it - labels.begin());
}

CentroidSet compute_centroids(const CodeSet& codes, const ClassLayout& layout) {
  std::array<CentroidBlock, 3> blocks;
  for (auto s : synth::kSubtypes) {
    const auto& labels = layout.labels(s);
    const std::string name(synth::to_string(s));
    if (labels.empty()) throw ValidationError("layout has no " + name + " classes");
    const auto sub = codes.find(s);
    auto& block = blocks[static_cast<std::size_t>(s)];
    block.subtype = s;
    block.labels = labels;
    Eigen::Index dim = -1;
    for (std::size_t c = 0; c < labels.size(); ++c) {
      const std::vector<Eigen::VectorXd>* list = nullptr;
      if (sub != codes.end()) {
        const auto it = sub->second.find(labels[c]);
        if (it != sub->second.end() && !it->second.empty()) list = &it->second;
      }
      if (!list) throw ValidationError("incomplete centroids: no codes for " + name + " class '" + labels[c] + "'");
      if (dim < 0) {
        dim = list->front().size();
        block.centroids = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(labels.size()));
      }
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
      for (const auto& v : *list) {
        if (v.size() != dim) throw DimensionError("codes of subtype " + name + " have differing dimensions");
        sum += v;
      }
      block.centroids.col(static_cast<Eigen::Index>(c)) = sum / static_cast<double>(list->size());
    }
  }
  return CentroidSet(layout, std::move(blocks));
}

void save_centroids(const CentroidSet& set, const fs::path& path) {
  json order = json::array();
  json blocks = json::array();
  for (auto s : synth::kSubtypes) {
    const auto& b = set.block(s);
    json classes = json::array();
    for (std::size_t c = 0; c < b.labels.size(); ++c) {
      const auto col = b.centroids.col(static_cast<Eigen::Index>(c));
      order.push_back({{"subtype", synth::to_string(s)}, {"label", b.labels[c]}});
      classes.push_back({{"label", b.labels[c]}, {"centroid", std::vector<double>(col.data(), col.data() + col.size())}});
    }
    blocks.push_back({{"subtype", synth::to_string(s)}, {"dim", b.centroids.rows()}, {"classes", std::move(classes)}});
  }
  auto out = csv::open_output(path);
  out << json{{"order", std::move(order)}, {"blocks", std::move(blocks)}}.dump(1) << '\n';
  if (!out) throw IoError("failed writing centroids '" + path.string() + "'");
}

CentroidSet load_centroids(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open centroids '" + path.string() + "'");
  try {
    const json doc = json::parse(in);
    ClassLayout layout;
    for (const auto& o : doc.at("order")) {
      const Subtype s = synth::parse_subtype(o.at("subtype").get<std::string>());
      auto& labels = s == Subtype::color ? layout.color : s == Subtype::shape ? layout.shape : layout.texture;
      labels.push_back(o.at("label").get<std::string>());
    }
    // Global order must list subtypes contiguously colour, shape, texture.
    std::size_t g = 0;
    for (const auto& o : doc.at("order")) {
      const Subtype s = synth::parse_subtype(o.at("subtype").get<std::string>());
      if (g < layout.offset(s) || g >= layout.offset(s) + layout.labels(s).size()) {
        throw ValidationError("centroid order is not grouped as colour, shape, texture");
      }
      ++g;
    }
    std::array<CentroidBlock, 3> blocks;
    std::set<Subtype> seen;
    for (const auto& jb : doc.at("blocks")) {
      const Subtype s = synth::parse_subtype(jb.at("subtype").get<std::string>());
      if (!seen.insert(s).second) throw ValidationError("duplicate centroid block");
      auto& b = blocks[static_cast<std::size_t>(s)];
      b.subtype = s;
      b.labels = layout.labels(s);
      const auto dim = jb.at("dim").get<Eigen::Index>();
      b.centroids = Eigen::MatrixXd::Constant(dim, static_cast<Eigen::Index>(b.labels.size()),
                                              std::numeric_limits<double>::quiet_NaN());
      std::set<std::string> filled;
      for (const auto& jc : jb.at("classes")) {
        const auto label = jc.at("label").get<std::string>();
        const auto it = std::find(b.labels.begin(), b.labels.end(), label);
        if (it == b.labels.end()) throw ValidationError("class '" + label + "' missing from centroid order");
        if (!filled.insert(label).second) throw ValidationError("duplicate centroid for '" + label + "'");
        const auto v = jc.at("centroid").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != dim) throw DimensionError("centroid length does not match dim");
        b.centroids.col(it - b.labels.begin()) = Eigen::Map<const Eigen::VectorXd>(v.data(), dim);
      }
      if (filled.size() != b.labels.size()) throw ValidationError("centroid block is missing classes");
    }
    if (seen.size() != 3) throw ValidationError("centroid file needs colour, shape and texture blocks");
    return CentroidSet(std::move(layout), std::move(blocks));
  } catch (const json::exception& e) {
    throw ValidationError("malformed centroids '" + path.string() + "': " + e.what());
  }
}

CostEncoder::CostEncoder(DictionarySet dicts, CentroidSet centroids, std::optional<sparse::CodingParams> params)
    : dicts_(std::move(dicts)), centroids_(std::move(centroids)) {
  for (auto s : synth::kSubtypes) {
    const auto& d = dicts_[static_cast<std::size_t>(s)];
    const auto name = std::string(synth::to_string(s));
    if (d.subtype != name) throw ValidationError("dictionary slot " + name + " holds a '" + d.subtype + "' dictionary");
    if (d.signal_width < 1 || d.signal_height < 1) throw ValidationError(name + " dictionary is not image shaped");
    if (centroids_.block(s).centroids.rows() != d.size()) {
      throw DimensionError(name + " centroids have dimension " + std::to_string(centroids_.block(s).centroids.rows()) +
                           " but the dictionary has " + std::to_string(d.size()) + " atoms");
    }
    coders_.emplace_back(d.atoms, params.value_or(d.params));
  }
}

Eigen::VectorXd CostEncoder::code(const RasterImage& img, Subtype s) const {
  const auto& d = dicts_[static_cast<std::size_t>(s)];
  return coders_[static_cast<std::size_t>(s)].encode(to_signal(img, d.signal_width, d.signal_height));
}

CostVector CostEncoder::from_codes(const std::array<Eigen::VectorXd, 3>& codes) const {
  CostVector out(static_cast<Eigen::Index>(centroids_.size()));
  for (auto s : synth::kSubtypes) {
    const auto& b = centroids_.block(s);
    const auto& h = codes[static_cast<std::size_t>(s)];
    if (h.size() != b.centroids.rows()) throw DimensionError("code does not match centroid dimension");
    const auto offset = static_cast<Eigen::Index>(centroids_.layout().offset(s));
    for (Eigen::Index c = 0; c < b.centroids.cols(); ++c) out[offset + c] = (h - b.centroids.col(c)).norm();
  }
  return out;
}

CostVector CostEncoder::encode(const RasterImage& img) const {
  return from_codes({code(img, Subtype::color), code(img, Subtype::shape), code(img, Subtype::texture)});
}

CostVector encode_cost(const RasterImage& img, const DictionarySet& dicts, const CentroidSet& centroids,
                       const sparse::CodingParams& params) {
  return CostEncoder(dicts, centroids, params).encode(img);
}

BatchResult encode_batch(const std::vector<LabeledPath>& items, const CostEncoder& encoder) {
  std::vector<std::optional<CostVector>> values(items.size());
  std::vector<std::string> errors(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    try {
      values[i] = encoder.encode(read_image(items[i].path));
    } catch (const IoError& e) {
      errors[i] = e.what();
    }
  });
  BatchResult out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (values[i]) {
      out.rows.push_back({items[i].path.generic_string(), items[i].label, std::move(*values[i])});
    } else {
      out.failures.push_back({items[i].path.generic_string(), errors[i]});
    }
  }
  return out;
}

void write_features(const std::vector<FeatureRow>& rows, std::size_t dim, const fs::path& path) {
  auto out = csv::open_output(path);
  out << "path,label";
  for (std::size_t i = 0; i < dim; ++i) out << ",d" << i;
  out << '\n';
  for (const auto& r : rows) {
    if (static_cast<std::size_t>(r.values.size()) != dim) throw DimensionError("feature row has the wrong width");
    out << csv::escape(r.path) << ',' << csv::escape(r.label);
    for (Eigen::Index i = 0; i < r.values.size(); ++i) out << ',' << csv::format_double(r.values[i]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing features '" + path.string() + "'");
}

std::vector<FeatureRow> read_features(const fs::path& path) {
  csv::Reader reader(path);
  std::vector<std::string> f;
  if (!reader.next(f) || f.size() < 3 || f[0] != "path" || f[1] != "label") {
    reader.fail("feature header must be 'path,label,d0,...'");
  }
  const std::size_t dim = f.size() - 2;
  std::vector<FeatureRow> rows;
  while (reader.next(f)) {
    if (f.size() != dim + 2) reader.fail("expected " + std::to_string(dim + 2) + " fields");
    FeatureRow r{f[0], f[1], CostVector(static_cast<Eigen::Index>(dim))};
    for (std::size_t i = 0; i < dim; ++i) {
      try {
        r.values[static_cast<Eigen::Index>(i)] = csv::parse_double(f[i + 2], "feature value");
      } catch (const ValidationError& e) {
        reader.fail(e.what());
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace costfuse::cost
