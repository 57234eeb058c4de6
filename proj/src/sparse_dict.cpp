#include "costfuse/sparse_dict.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "costfuse/checksum.hpp"
#include "costfuse/csv.hpp"
#include "costfuse/parallel.hpp"
#include "costfuse/rng.hpp"

namespace costfuse::sparse {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const Dictionary& dict) {
  if (dict.size() < 1 || dict.dim() < 1) throw DimensionError("dictionary must have d >= 1 and k >= 1");
  if (!dict.atoms.allFinite()) throw NumericError("dictionary contains non-finite values");
  for (Eigen::Index j = 0; j < dict.size(); ++j) {
    const double n = dict.atoms.col(j).norm();
    if (std::abs(n - 1.0) > 1e-9) {
      throw NumericError("atom " + std::to_string(j) + " has norm " + csv::format_double(n) + ", expected 1");
    }
  }
  if ((dict.signal_width > 0 || dict.signal_height > 0) &&
      static_cast<Eigen::Index>(dict.signal_width) * dict.signal_height * 3 != dict.dim()) {
    throw DimensionError("signal shape " + std::to_string(dict.signal_width) + "x" +
                         std::to_string(dict.signal_height) + "x3 does not match d=" + std::to_string(dict.dim()));
  }
  dict.params.validate();
}

StagewiseCoder<double> make_coder(const Dictionary& dict) { return StagewiseCoder<double>(dict.atoms, dict.params); }

Eigen::MatrixXd encode_all(const Dictionary& dict, const Eigen::MatrixXd& X, const Eigen::MatrixXd* warm) {
  if (X.rows() != dict.dim()) throw DimensionError("signals do not match dictionary dimension");
  if (warm && (warm->rows() != dict.size() || warm->cols() != X.cols())) {
    throw DimensionError("warm-start codes must be k x M");
  }
  const auto coder = make_coder(dict);
  Eigen::MatrixXd H(dict.size(), X.cols());
  parallel_for(static_cast<std::size_t>(X.cols()), [&](std::size_t i) {
    const auto col = static_cast<Eigen::Index>(i);
    H.col(col) = warm ? coder.refine(X.col(col), Eigen::VectorXd(warm->col(col))) : coder.encode(X.col(col));
  });
  return H;
}

Dictionary dict_update(const Dictionary& dict, const Eigen::MatrixXd& X, Eigen::MatrixXd& H, UpdateStats* stats) {
  if (X.rows() != dict.dim() || H.rows() != dict.size() || X.cols() != H.cols()) {
    throw DimensionError("dict_update: X is " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                         ", H is " + std::to_string(H.rows()) + "x" + std::to_string(H.cols()) + ", D is " +
                         std::to_string(dict.dim()) + "x" + std::to_string(dict.size()));
  }
  UpdateStats local;
  if (stats) *stats = local;
  if (H.isZero(0.0)) return dict;

  const Eigen::Index k = dict.size();
  const Eigen::MatrixXd hht = H * H.transpose();
  const Eigen::MatrixXd xht = X * H.transpose();
  Eigen::MatrixXd gram = hht;
  gram.diagonal().array() += kRidge;

  Eigen::MatrixXd next;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-14) {
    next = llt.solve(xht.transpose()).transpose();
  }
  if (next.size() == 0 || !next.allFinite()) {
    // Gradient step on ||X - D H||^2 with the Lipschitz step size.
    local.fallback = true;
    const double lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hht, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    next = dict.atoms;
    if (lipschitz > 0) next += (xht - dict.atoms * hht) / lipschitz;
  }

  std::vector<Eigen::Index> dead;
  for (Eigen::Index j = 0; j < k; ++j) {
    const bool used = !H.row(j).isZero(0.0);
    const double n = next.col(j).norm();
    if (used && n > 1e-12 && std::isfinite(n)) {
      next.col(j) /= n;
      H.row(j) *= n;
    } else {
      dead.push_back(j);
    }
  }

  if (!dead.empty()) {
    for (auto j : dead) H.row(j).setZero();
    const Eigen::VectorXd residual = (X - next * H).colwise().squaredNorm().transpose();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(X.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return residual[a] > residual[b]; });
    std::size_t cursor = 0;
    for (auto j : dead) {
      bool reseeded = false;
      while (cursor < order.size()) {
        const auto i = order[cursor++];
        const double xn = X.col(i).norm();
        // Only signals that are genuinely badly reconstructed are worth an atom.
        if (xn > 0 && residual[i] > 1e-12 * xn * xn) {
          next.col(j) = X.col(i) / xn;
          reseeded = true;
          ++local.reseeded;
          break;
        }
      }
      if (!reseeded) next.col(j) = dict.atoms.col(j);
    }
  }

  if (stats) *stats = local;
  Dictionary out = dict;
  out.atoms = std::move(next);
  return out;
}

namespace {

// One sweep of exact per-atom minimisation of ||X - D H||^2 over the unit
// ball, then normalisation with H rows rescaled. Never raises the objective.
Dictionary block_update(const Dictionary& dict, const Eigen::MatrixXd& X, Eigen::MatrixXd& H) {
  const Eigen::MatrixXd hht = H * H.transpose();
  const Eigen::MatrixXd xht = X * H.transpose();
  Dictionary out = dict;
  Eigen::MatrixXd& D = out.atoms;
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    const double a = hht(j, j);
    if (a <= 0) continue;
    Eigen::VectorXd dj = D.col(j) + (xht.col(j) - D * hht.col(j)) / a;
    const double n = dj.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) continue;
    if (n > 1.0) dj /= n;
    D.col(j) = dj;
  }
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    const double n = D.col(j).norm();
    D.col(j) /= n;
    H.row(j) *= n;
  }
  return out;
}

}  // namespace

std::string dictionary_checksum(const Dictionary& dict) {
  std::string bytes;
  const auto d = static_cast<std::int64_t>(dict.dim()), k = static_cast<std::int64_t>(dict.size());
  bytes.append(reinterpret_cast<const char*>(&d), sizeof d);
  bytes.append(reinterpret_cast<const char*>(&k), sizeof k);
  bytes.append(reinterpret_cast<const char*>(dict.atoms.data()), sizeof(double) * static_cast<std::size_t>(dict.atoms.size()));
  return sha256_hex(bytes);
}

std::pair<Dictionary, LearnReport> learn_dictionary(const Eigen::MatrixXd& X, const LearnOptions& opts) {
  if (X.cols() < 1 || X.rows() < 1) throw ValidationError("learn_dictionary needs at least one non-empty signal");
  if (!X.allFinite()) throw ValidationError("training signals contain non-finite values");
  if (opts.atoms < 1) throw ValidationError("atom count must be >= 1");
  if (opts.epochs < 1) throw ValidationError("epochs must be >= 1");
  opts.params.validate();

  const Eigen::Index d = X.rows();
  const Eigen::Index k = opts.atoms;
  LearnReport report;
  Rng rng(derive_seed(opts.seed, "dictionary-init"));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }

  Dictionary dict;
  dict.subtype = opts.subtype;
  dict.params = opts.params;
  dict.seed = opts.seed;
  dict.signal_width = opts.signal_width;
  dict.signal_height = opts.signal_height;
  dict.atoms.resize(d, k);
  Eigen::Index filled = 0;
  for (auto i : order) {
    if (filled == k) break;
    const double n = X.col(i).norm();
    if (n > 0) dict.atoms.col(filled++) = X.col(i) / n;
  }
  if (filled < k) {
    report.warnings.push_back("only " + std::to_string(filled) + " usable signals for " + std::to_string(k) +
                              " atoms; padding with random unit vectors");
    for (; filled < k; ++filled) {
      Eigen::VectorXd v(d);
      for (Eigen::Index r = 0; r < d; ++r) v[r] = rng.normal();
      dict.atoms.col(filled) = v / v.norm();
    }
  }

  Eigen::MatrixXd carried;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Eigen::MatrixXd H = encode_all(dict, X, epoch > 0 ? &carried : nullptr);
    const double obj = objective(dict.atoms, X, H, dict.params.lambda);
    if (!std::isfinite(obj)) throw NumericError("non-finite objective at epoch " + std::to_string(epoch + 1));
    report.objectives.push_back(obj);
    UpdateStats stats;
    Eigen::MatrixXd rescaled = H;
    auto candidate = dict_update(dict, X, rescaled, &stats);
    if (objective(candidate.atoms, X, rescaled, dict.params.lambda) <= obj) {
      dict = std::move(candidate);
      carried = std::move(rescaled);
      report.fallback_updates += stats.fallback ? 1 : 0;
      report.reseeded_atoms += stats.reseeded;
    } else {
      dict = block_update(dict, X, H);
      carried = std::move(H);
      ++report.block_updates;
    }
    ++report.epochs_run;
  }
  report.checksum = dictionary_checksum(dict);
  return {std::move(dict), std::move(report)};
}

void save_dictionary(const Dictionary& dict, const fs::path& path) {
  validate(dict);
  json atoms = json::array();
  for (Eigen::Index j = 0; j < dict.size(); ++j) {
    std::vector<double> col(dict.atoms.col(j).data(), dict.atoms.col(j).data() + dict.dim());
    atoms.push_back(std::move(col));
  }
  json doc{{"subtype", dict.subtype},
           {"d", dict.dim()},
           {"k", dict.size()},
           {"signal_width", dict.signal_width},
           {"signal_height", dict.signal_height},
           {"seed", dict.seed},
           {"params", {{"lambda", dict.params.lambda}, {"step", dict.params.step}, {"max_iters", dict.params.max_iters}}},
           {"atoms", std::move(atoms)}};
  auto out = csv::open_output(path);
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing dictionary '" + path.string() + "'");
}

Dictionary load_dictionary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dictionary '" + path.string() + "'");
  try {
    const json doc = json::parse(in);
    Dictionary dict;
    dict.subtype = doc.at("subtype").get<std::string>();
    const auto d = doc.at("d").get<Eigen::Index>();
    const auto k = doc.at("k").get<Eigen::Index>();
    dict.signal_width = doc.at("signal_width").get<int>();
    dict.signal_height = doc.at("signal_height").get<int>();
    dict.seed = doc.at("seed").get<std::uint64_t>();
    const auto& p = doc.at("params");
    dict.params = {p.at("lambda").get<double>(), p.at("step").get<double>(), p.at("max_iters").get<int>()};
    const auto& atoms = doc.at("atoms");
    if (static_cast<Eigen::Index>(atoms.size()) != k) throw ValidationError("atom count does not match k");
    dict.atoms.resize(d, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto col = atoms[static_cast<std::size_t>(j)].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(col.size()) != d) throw ValidationError("atom length does not match d");
      dict.atoms.col(j) = Eigen::Map<const Eigen::VectorXd>(col.data(), d);
    }
    validate(dict);
    return dict;
  } catch (const json::exception& e) {
    throw ValidationError("malformed dictionary '" + path.string() + "': " + e.what());
  }
}

RasterImage atom_grid(const Dictionary& dict) {
  const int w = dict.signal_width, h = dict.signal_height;
  if (w < 1 || h < 1 || static_cast<Eigen::Index>(w) * h * 3 != dict.dim()) {
    throw DimensionError("atoms of dimension " + std::to_string(dict.dim()) + " are not image shaped");
  }
  const auto k = static_cast<int>(dict.size());
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
  const int rows = (k + cols - 1) / cols;
  RasterImage grid(cols * w, rows * h);
  for (int a = 0; a < k; ++a) {
    const auto atom = dict.atoms.col(a);
    const double lo = atom.minCoeff(), hi = atom.maxCoeff();
    const int ox = (a % cols) * w, oy = (a / cols) * h;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const double v = atom[(static_cast<Eigen::Index>(y) * w + x) * 3 + c];
          const long level = hi > lo ? std::lround((v - lo) / (hi - lo) * 255.0) : 128L;
          grid.at(ox + x, oy + y, c) = static_cast<std::uint8_t>(std::clamp(level, 0L, 255L));
        }
      }
    }
  }
  return grid;
}

void export_atoms(const Dictionary& dict, const fs::path& png_path) { write_png(atom_grid(dict), png_path); }

}  // namespace costfuse::sparse
