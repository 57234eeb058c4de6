#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace costfuse::mlp {

/// Feed-forward classifier: rectifier hidden layers, softmax output.
/// weights[l] is fan_in x fan_out for the l-th affine map.
struct MlpModel {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::string activation = "relu";
  std::vector<std::string> classes;
  /// Optional input standardisation x' = (x - shift) .* scale; empty means none.
  Eigen::VectorXd input_shift;
  Eigen::VectorXd input_scale;

  int inputs() const { return layer_sizes.front(); }
  int outputs() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;
};

/// Throws on inconsistent shapes or non-finite parameters.
void validate(const MlpModel& m);

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
/// Needs at least four layer sizes (input, two hidden, output).
MlpModel init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed);

/// Numerically stable softmax of one logit vector.
template <typename Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd logits(const MlpModel& m, const Eigen::VectorXd& x);

/// Softmax activations for one input.
Eigen::VectorXd forward(const MlpModel& m, const Eigen::VectorXd& x);

/// One row of activations per input row, in order.
Eigen::MatrixXd predict_proba(const MlpModel& m, const Eigen::MatrixXd& rows);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Mean cross-entropy over the rows; fills `grad` by backpropagation.
double loss_and_gradient(const MlpModel& m, const Eigen::MatrixXd& rows, std::span<const int> labels,
                         Gradients* grad = nullptr);

/// Parameters in a fixed order (per layer: weights column-major, then bias).
Eigen::VectorXd flatten_parameters(const MlpModel& m);
void assign_parameters(MlpModel& m, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten_gradients(const Gradients& g);

struct TrainConfig {
  int epochs = 20000;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  /// 0 = full batch; otherwise minibatches shuffled with `seed`.
  int batch_size = 0;

  void validate() const;
};

struct TrainResult {
  MlpModel model;
  /// Full-batch loss before each epoch's update.
  std::vector<double> loss_history;
};

/// Gradient descent on mean cross-entropy. Deterministic for a given seed.
TrainResult train(MlpModel model, const Eigen::MatrixXd& rows, std::span<const int> labels, const TrainConfig& cfg);

/// Fits z-score standardisation on `rows` and stores it in the model.
void fit_standardization(MlpModel& m, const Eigen::MatrixXd& rows);

nlohmann::json to_json(const MlpModel& m);
MlpModel model_from_json(const nlohmann::json& j);

void save_model(const MlpModel& m, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace costfuse::mlp
