#include "costfuse/mlp.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "costfuse/csv.hpp"
#include "costfuse/error.hpp"
#include "costfuse/rng.hpp"

namespace costfuse::mlp {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void validate(const MlpModel& m) {
  if (m.layer_sizes.size() < 4) throw ValidationError("an MLP needs input, two hidden and output layer sizes");
  for (int s : m.layer_sizes) {
    if (s < 1) throw ValidationError("layer sizes must be positive");
  }
  if (m.weights.size() != m.layer_sizes.size() - 1 || m.biases.size() != m.weights.size()) {
    throw ValidationError("parameter count does not match layer sizes");
  }
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    if (m.weights[l].rows() != m.layer_sizes[l] || m.weights[l].cols() != m.layer_sizes[l + 1] ||
        m.biases[l].size() != m.layer_sizes[l + 1]) {
      throw DimensionError("layer " + std::to_string(l) + " parameters have the wrong shape");
    }
    if (!m.weights[l].allFinite() || !m.biases[l].allFinite()) throw NumericError("model parameters are not finite");
  }
  if (m.activation != "relu") throw ValidationError("unsupported activation '" + m.activation + "'");
  if (!m.classes.empty() && static_cast<int>(m.classes.size()) != m.outputs()) {
    throw ValidationError("class list does not match the output layer");
  }
  if (m.input_shift.size() != m.input_scale.size() ||
      (m.input_shift.size() != 0 && m.input_shift.size() != m.inputs())) {
    throw DimensionError("input standardisation does not match the input layer");
  }
}

MlpModel init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 4) throw ValidationError("an MLP needs input, two hidden and output layer sizes");
  for (int s : layer_sizes) {
    if (s < 1) throw ValidationError("layer sizes must be positive");
  }
  MlpModel m;
  m.layer_sizes = layer_sizes;
  Rng rng(derive_seed(seed, "mlp-init"));
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_in, fan_out);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return m;
}

namespace {

// Inputs as columns, standardised.
Eigen::MatrixXd prepare(const MlpModel& m, const Eigen::MatrixXd& rows) {
  if (rows.cols() != m.inputs()) {
    throw DimensionError("inputs have " + std::to_string(rows.cols()) + " features, model expects " +
                         std::to_string(m.inputs()));
  }
  if (!rows.allFinite()) throw ValidationError("inputs contain non-finite values");
  Eigen::MatrixXd x = rows.transpose();
  if (m.input_shift.size() != 0) {
    x.colwise() -= m.input_shift;
    x.array().colwise() *= m.input_scale.array();
  }
  return x;
}

// Pre-activations of every layer for column inputs.
std::vector<Eigen::MatrixXd> forward_pass(const MlpModel& m, const Eigen::MatrixXd& x) {
  std::vector<Eigen::MatrixXd> z;
  z.reserve(m.weights.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    Eigen::MatrixXd zl = m.weights[l].transpose() * a;
    zl.colwise() += m.biases[l];
    if (l + 1 < m.weights.size()) a = zl.cwiseMax(0.0);
    z.push_back(std::move(zl));
  }
  return z;
}

Eigen::MatrixXd column_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) p.col(c) = softmax(logits.col(c));
  return p;
}

}  // namespace

Eigen::VectorXd logits(const MlpModel& m, const Eigen::VectorXd& x) {
  return forward_pass(m, prepare(m, x.transpose())).back().col(0);
}

Eigen::VectorXd forward(const MlpModel& m, const Eigen::VectorXd& x) { return softmax(logits(m, x)); }

Eigen::MatrixXd predict_proba(const MlpModel& m, const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) return Eigen::MatrixXd(0, m.outputs());
  return column_softmax(forward_pass(m, prepare(m, rows)).back()).transpose();
}

double loss_and_gradient(const MlpModel& m, const Eigen::MatrixXd& rows, std::span<const int> labels, Gradients* grad) {
  if (static_cast<std::size_t>(rows.rows()) != labels.size()) throw DimensionError("one label per input row required");
  if (labels.empty()) throw ValidationError("training data is empty");
  for (int y : labels) {
    if (y < 0 || y >= m.outputs()) throw ValidationError("class index " + std::to_string(y) + " out of range");
  }
  const Eigen::MatrixXd x = prepare(m, rows);
  const auto z = forward_pass(m, x);
  const Eigen::MatrixXd p = column_softmax(z.back());
  const auto n = static_cast<double>(labels.size());

  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    // log-softmax directly from logits for accuracy when p underflows
    const auto zc = z.back().col(col);
    const double top = zc.maxCoeff();
    loss -= zc[labels[i]] - top - std::log((zc.array() - top).exp().sum());
  }
  loss /= n;
  if (!grad) return loss;

  const std::size_t layers = m.weights.size();
  grad->weights.resize(layers);
  grad->biases.resize(layers);
  Eigen::MatrixXd delta = p;
  for (std::size_t i = 0; i < labels.size(); ++i) delta(labels[i], static_cast<Eigen::Index>(i)) -= 1.0;
  delta /= n;
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::MatrixXd a_prev = l == 0 ? x : Eigen::MatrixXd(z[l - 1].cwiseMax(0.0));
    grad->weights[l] = a_prev * delta.transpose();
    grad->biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = m.weights[l] * delta;
      delta = back.cwiseProduct((z[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

Eigen::VectorXd flatten_parameters(const MlpModel& m) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(m.parameter_count()));
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    flat.segment(o, m.weights[l].size()) = m.weights[l].reshaped();
    o += m.weights[l].size();
    flat.segment(o, m.biases[l].size()) = m.biases[l];
    o += m.biases[l].size();
  }
  return flat;
}

void assign_parameters(MlpModel& m, const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(m.parameter_count())) throw DimensionError("parameter vector size mismatch");
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    m.weights[l].reshaped() = flat.segment(o, m.weights[l].size());
    o += m.weights[l].size();
    m.biases[l] = flat.segment(o, m.biases[l].size());
    o += m.biases[l].size();
  }
}

Eigen::VectorXd flatten_gradients(const Gradients& g) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < g.weights.size(); ++l) n += g.weights[l].size() + g.biases[l].size();
  Eigen::VectorXd flat(n);
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    flat.segment(o, g.weights[l].size()) = g.weights[l].reshaped();
    o += g.weights[l].size();
    flat.segment(o, g.biases[l].size()) = g.biases[l];
    o += g.biases[l].size();
  }
  return flat;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be > 0");
  if (batch_size < 0) throw ValidationError("batch size must be >= 0");
}

TrainResult train(MlpModel model, const Eigen::MatrixXd& rows, std::span<const int> labels, const TrainConfig& cfg) {
  cfg.validate();
  validate(model);
  if (labels.empty()) throw ValidationError("training data is empty");
  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto n = static_cast<Eigen::Index>(labels.size());
  const bool full = cfg.batch_size == 0 || cfg.batch_size >= n;
  Rng rng(derive_seed(cfg.seed, "mlp-batches"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  auto step = [&](const Gradients& g) {
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      model.weights[l] -= cfg.learning_rate * g.weights[l];
      model.biases[l] -= cfg.learning_rate * g.biases[l];
    }
  };

  Gradients g;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = loss_and_gradient(model, rows, labels, full ? &g : nullptr);
    if (!std::isfinite(loss)) {
      throw NumericError("training diverged: loss is " + csv::format_double(loss) + " at epoch " +
                         std::to_string(epoch + 1) + " (try a smaller learning rate or input standardisation)");
    }
    result.loss_history.push_back(loss);
    if (full) {
      step(g);
      continue;
    }
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::MatrixXd batch(len, rows.cols());
      std::vector<int> batch_labels(static_cast<std::size_t>(len));
      for (Eigen::Index i = 0; i < len; ++i) {
        batch.row(i) = rows.row(order[static_cast<std::size_t>(start + i)]);
        batch_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
      }
      loss_and_gradient(model, batch, batch_labels, &g);
      step(g);
    }
  }
  validate(model);
  result.model = std::move(model);
  return result;
}

void fit_standardization(MlpModel& m, const Eigen::MatrixXd& rows) {
  if (rows.cols() != m.inputs()) throw DimensionError("standardisation rows do not match the input layer");
  if (rows.rows() < 1) throw ValidationError("standardisation needs at least one row");
  m.input_shift = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centred = rows.rowwise() - m.input_shift.transpose();
  const Eigen::VectorXd var = centred.array().square().colwise().mean().transpose();
  m.input_scale = var.unaryExpr([](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0; });
}

namespace {

json matrix_json(const Eigen::MatrixXd& w) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json to_json(const MlpModel& m) {
  json layers = json::array();
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const Eigen::VectorXd& b = m.biases[l];
    layers.push_back({{"weights", matrix_json(m.weights[l])}, {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  json j{{"layer_sizes", m.layer_sizes}, {"activation", m.activation}, {"classes", m.classes}, {"layers", std::move(layers)}};
  if (m.input_shift.size() != 0) {
    j["input_shift"] = std::vector<double>(m.input_shift.data(), m.input_shift.data() + m.input_shift.size());
    j["input_scale"] = std::vector<double>(m.input_scale.data(), m.input_scale.data() + m.input_scale.size());
  }
  return j;
}

MlpModel model_from_json(const json& j) {
  try {
    MlpModel m;
    m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    m.activation = j.at("activation").get<std::string>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("weights").get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != w.cols()) throw ValidationError("ragged weight matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c) w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
      m.weights.push_back(std::move(w));
      m.biases.push_back(vector_from(layer.at("bias")));
    }
    if (j.contains("input_shift")) {
      m.input_shift = vector_from(j.at("input_shift"));
      m.input_scale = vector_from(j.at("input_scale"));
    }
    validate(m);
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
}

void save_model(const MlpModel& m, const fs::path& path) {
  validate(m);
  auto out = csv::open_output(path);
  out << to_json(m).dump(1) << '\n';
  if (!out) throw IoError("failed writing model '" + path.string() + "'");
}

MlpModel load_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model '" + path.string() + "'");
  try {
    return model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed model '" + path.string() + "': " + e.what());
  }
}

}  // namespace costfuse::mlp
