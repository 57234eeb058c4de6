#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "costfuse/error.hpp"
#include "costfuse/image.hpp"

namespace costfuse::sparse {

/// Sparse-coding parameters.
///
/// `step` is relative: each stagewise move changes one coefficient by
/// step * ||x||_2, so the iteration budget needed does not depend on the
/// signal's scale.
struct CodingParams {
  double lambda = 0.1;
  double step = 0.01;
  int max_iters = 1280;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("step must be finite and > 0");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  }

  friend bool operator==(const CodingParams&, const CodingParams&) = default;
};

template <typename Scalar>
struct StagewiseTrace {
  int iterations = 0;
  /// Penalised objective ||x - D h||^2 + lambda ||h||_1 after each move,
  /// preceded by the value at the starting code.
  std::vector<Scalar> objective;
};

/// Stagewise (st-LARS) coder bound to one dictionary.
///
/// Each iteration takes the single-coefficient move with the steepest descent
/// of the penalised objective. A forward move grows a coefficient toward the
/// sign of its residual correlation; a backward move shrinks an active
/// coefficient whose correlation has fallen below lambda / 2. The move is the
/// stagewise increment, clipped to the exact one-dimensional minimiser and to
/// zero, so the objective strictly decreases. Coding stops at the LASSO
/// optimality conditions (every inactive correlation at most lambda / 2, every
/// active one equal to sign(h) lambda / 2) or after max_iters moves.
template <typename Scalar>
class StagewiseCoder {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  template <typename Derived>
  StagewiseCoder(const Eigen::MatrixBase<Derived>& atoms, const CodingParams& params)
      : atoms_(atoms), gram_(atoms_.transpose() * atoms_), params_(params) {
    params_.validate();
    if (atoms_.cols() < 1 || atoms_.rows() < 1) throw DimensionError("dictionary must have at least one atom");
  }

  Eigen::Index dim() const { return atoms_.rows(); }
  Eigen::Index size() const { return atoms_.cols(); }
  const CodingParams& params() const { return params_; }

  template <typename Derived>
  Vector encode(const Eigen::MatrixBase<Derived>& x, StagewiseTrace<Scalar>* trace = nullptr) const {
    return refine(x, Vector::Zero(atoms_.cols()), trace);
  }

  /// Stagewise coding started from `h0` instead of zero. Every move still
  /// lowers the penalised objective, so the result is never worse than h0.
  template <typename Derived>
  Vector refine(const Eigen::MatrixBase<Derived>& x, Vector h, StagewiseTrace<Scalar>* trace = nullptr) const {
    if (x.size() != atoms_.rows()) {
      throw DimensionError("signal has " + std::to_string(x.size()) + " entries, dictionary atoms have " +
                           std::to_string(atoms_.rows()));
    }
    if (h.size() != atoms_.cols()) throw DimensionError("initial code length does not match the atom count");
    if (!x.allFinite() || !h.allFinite()) throw ValidationError("signal contains non-finite values");
    const Vector residual = x - atoms_ * h;
    Vector corr = atoms_.transpose() * residual;
    Scalar rss = residual.squaredNorm();
    Scalar l1 = h.template lpNorm<1>();
    const Scalar half_lambda = static_cast<Scalar>(params_.lambda) / 2;
    const Scalar norm = x.norm();
    const Scalar step = static_cast<Scalar>(params_.step) * norm;
    const Scalar slack = Scalar(1e-12) * norm;
    if (trace) {
      trace->iterations = 0;
      trace->objective.assign(1, rss + static_cast<Scalar>(params_.lambda) * l1);
    }
    if (norm == Scalar(0)) return Vector::Zero(atoms_.cols());

    int it = 0;
    for (; it < params_.max_iters; ++it) {
      Eigen::Index j = 0;
      Scalar dir = 0;
      Scalar rate = 0;
      for (Eigen::Index i = 0; i < corr.size(); ++i) {
        for (const Scalar s : {Scalar(1), Scalar(-1)}) {
          const Scalar r = s * corr[i] + (s * h[i] < 0 ? half_lambda : -half_lambda);
          if (r > rate) {
            rate = r;
            j = i;
            dir = s;
          }
        }
      }
      if (rate <= slack) break;
      const bool shrinking = dir * h[j] < 0;
      Scalar len = std::min(step, rate / gram_(j, j));
      if (shrinking) len = std::min(len, std::abs(h[j]));
      const Scalar c = corr[j];
      const Scalar delta = dir * len;
      const Scalar before = std::abs(h[j]);
      h[j] = shrinking && len == before ? Scalar(0) : h[j] + delta;
      corr.noalias() -= delta * gram_.col(j);
      rss += delta * delta * gram_(j, j) - 2 * delta * c;
      l1 += std::abs(h[j]) - before;
      if (trace) trace->objective.push_back(rss + static_cast<Scalar>(params_.lambda) * l1);
    }
    if (trace) trace->iterations = it;
    return h;
  }

 private:
  Matrix atoms_;
  Matrix gram_;
  CodingParams params_;
};

template <typename DerivedD, typename DerivedX>
auto stlars_encode(const Eigen::MatrixBase<DerivedD>& atoms, const Eigen::MatrixBase<DerivedX>& x,
                   const CodingParams& params) {
  return StagewiseCoder<typename DerivedD::Scalar>(atoms, params).encode(x);
}

template <typename DerivedD, typename DerivedH>
auto reconstruct(const Eigen::MatrixBase<DerivedD>& atoms, const Eigen::MatrixBase<DerivedH>& h) {
  if (h.size() != atoms.cols()) {
    throw DimensionError("code has " + std::to_string(h.size()) + " entries, dictionary has " +
                         std::to_string(atoms.cols()) + " atoms");
  }
  return Eigen::Matrix<typename DerivedD::Scalar, Eigen::Dynamic, 1>(atoms * h);
}

/// Single-signal coding objective ||x - D h||^2 + lambda ||h||_1.
template <typename DerivedD, typename DerivedX, typename DerivedH>
typename DerivedD::Scalar coding_objective(const Eigen::MatrixBase<DerivedD>& atoms,
                                           const Eigen::MatrixBase<DerivedX>& x,
                                           const Eigen::MatrixBase<DerivedH>& h, double lambda) {
  if (x.size() != atoms.rows()) throw DimensionError("signal/dictionary dimension mismatch");
  return (x - reconstruct(atoms, h)).squaredNorm() + static_cast<typename DerivedD::Scalar>(lambda) * h.template lpNorm<1>();
}

/// Mean dictionary-learning objective over M signals (columns of X) and their
/// codes (columns of H): (1/M) sum_i ||x_i - D h_i||^2 + lambda ||h_i||_1.
template <typename DerivedD, typename DerivedX, typename DerivedH>
typename DerivedD::Scalar objective(const Eigen::MatrixBase<DerivedD>& atoms, const Eigen::MatrixBase<DerivedX>& X,
                                    const Eigen::MatrixBase<DerivedH>& H, double lambda) {
  if (X.cols() != H.cols()) {
    throw DimensionError("objective needs one code per signal (" + std::to_string(X.cols()) + " signals, " +
                         std::to_string(H.cols()) + " codes)");
  }
  if (X.cols() < 1) throw ValidationError("objective needs at least one signal");
  if (X.rows() != atoms.rows() || H.rows() != atoms.cols()) throw DimensionError("objective dimension mismatch");
  const auto recon = (X - atoms * H).squaredNorm();
  const auto sparsity = H.cwiseAbs().sum();
  return (recon + static_cast<typename DerivedD::Scalar>(lambda) * sparsity) / static_cast<double>(X.cols());
}

/// Learned dictionary over flattened signals. Columns of `atoms` are unit norm.
struct Dictionary {
  std::string subtype;
  Eigen::MatrixXd atoms;
  CodingParams params;
  std::uint64_t seed = 0;
  /// Image shape of the signals (0 when the signals are not images).
  int signal_width = 0;
  int signal_height = 0;

  Eigen::Index dim() const { return atoms.rows(); }
  Eigen::Index size() const { return atoms.cols(); }
};

/// Throws unless every atom has unit norm within 1e-9 and the shapes agree.
void validate(const Dictionary& dict);

StagewiseCoder<double> make_coder(const Dictionary& dict);

/// Encodes every column of X; returns k x M codes. Parallel over signals.
/// With `warm`, coding of column i starts from warm->col(i).
Eigen::MatrixXd encode_all(const Dictionary& dict, const Eigen::MatrixXd& X, const Eigen::MatrixXd* warm = nullptr);

inline constexpr double kRidge = 1e-6;

struct UpdateStats {
  bool fallback = false;
  int reseeded = 0;
};

/// Method-of-optimal-directions update: D' = X H^T (H H^T + ridge I)^-1,
/// then unit-normalised. The rows of H are rescaled by the atom norms so that
/// D' H is unchanged by normalisation; rows of re-seeded atoms are zeroed.
/// Unused atoms are replaced by the worst-reconstructed signals. If the
/// system is ill-conditioned a single gradient step is taken instead.
Dictionary dict_update(const Dictionary& dict, const Eigen::MatrixXd& X, Eigen::MatrixXd& H,
                       UpdateStats* stats = nullptr);

struct LearnOptions {
  int atoms = 128;
  CodingParams params;
  int epochs = 100;
  std::uint64_t seed = 0;
  std::string subtype;
  int signal_width = 0;
  int signal_height = 0;
};

struct LearnReport {
  /// Objective of each epoch's coding pass (one entry per epoch).
  std::vector<double> objectives;
  int epochs_run = 0;
  std::string checksum;
  int fallback_updates = 0;
  int reseeded_atoms = 0;
  /// Epochs whose MOD step would have raised the objective and was replaced
  /// by a per-atom block-coordinate step.
  int block_updates = 0;
  std::vector<std::string> warnings;
};

/// Alternates stagewise coding of every signal (columns of X) with a
/// dictionary update. Initial atoms are distinct randomly chosen normalised
/// signals; when there are not enough of them, seeded random unit vectors pad
/// the rest (with a warning in the report). From the second epoch on, coding
/// resumes from the previous epoch's codes, and a MOD step that would raise
/// the objective is replaced by a per-atom block-coordinate step, so the
/// recorded objectives never increase.
std::pair<Dictionary, LearnReport> learn_dictionary(const Eigen::MatrixXd& X, const LearnOptions& opts);

/// SHA-256 over the atom values and shape.
std::string dictionary_checksum(const Dictionary& dict);

/// JSON: {subtype, d, k, atoms: k arrays of d values, params, seed, signal_width, signal_height}.
void save_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);

/// Tiles the atoms (each rescaled to [0,255] on its own range; constant atoms
/// become uniform 128) into a ceil(sqrt(k))-column grid.
RasterImage atom_grid(const Dictionary& dict);
void export_atoms(const Dictionary& dict, const std::filesystem::path& png_path);

}  // namespace costfuse::sparse
