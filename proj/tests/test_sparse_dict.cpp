#include <doctest.h>

#include "costfuse/error.hpp"
#include "costfuse/parallel.hpp"
#include "costfuse/sparse_dict.hpp"
#include "oracles.hpp"

using namespace costfuse;
using namespace costfuse::sparse;

namespace {

Dictionary make_dict(Eigen::MatrixXd atoms, CodingParams p = {}) {
  Dictionary d;
  d.atoms = std::move(atoms);
  d.params = p;
  return d;
}

}  // namespace

TEST_CASE("coding params are validated") {
  CHECK_THROWS_AS((CodingParams{-1.0, 0.01, 10}.validate()), ValidationError);
  CHECK_THROWS_AS((CodingParams{0.1, 0.0, 10}.validate()), ValidationError);
  CHECK_THROWS_AS((CodingParams{0.1, 0.01, 0}.validate()), ValidationError);
  CHECK_NOTHROW((CodingParams{0.0, 0.5, 1}.validate()));
}

TEST_CASE("orthonormal dictionary without penalty recovers D^T x") {
  Rng rng(1);
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(oracle::random_unit_atoms(rng, 6, 6)).householderQ();
  const Eigen::VectorXd x = oracle::random_vector(rng, 6);
  const CodingParams p{0.0, 0.001, 100000};
  const Eigen::VectorXd h = stlars_encode(Q, x, p);
  CHECK((h - Q.transpose() * x).lpNorm<Eigen::Infinity>() <= 2 * p.step * x.norm());
}

TEST_CASE("a signal equal to one atom selects that atom") {
  Rng rng(2);
  const auto D = oracle::random_unit_atoms(rng, 10, 6);
  for (Eigen::Index j = 0; j < 6; ++j) {
    const Eigen::VectorXd h = stlars_encode(D, Eigen::VectorXd(D.col(j)), CodingParams{0.01, 0.01, 1000});
    Eigen::Index arg = 0;
    h.cwiseAbs().maxCoeff(&arg);
    CHECK(arg == j);
  }
}

TEST_CASE("stagewise objective is non-increasing along the iterations") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto D = oracle::random_unit_atoms(rng, 8, 5);
    const auto x = oracle::random_vector(rng, 8);
    StagewiseCoder<double> coder(D, CodingParams{0.1, 0.01, 5000});
    StagewiseTrace<double> trace;
    const auto h = coder.encode(x, &trace);
    REQUIRE(trace.objective.size() == static_cast<std::size_t>(trace.iterations) + 1);
    for (std::size_t i = 1; i < trace.objective.size(); ++i) CHECK(trace.objective[i] <= trace.objective[i - 1] + 1e-12);
    CHECK(trace.objective.back() == doctest::Approx(oracle::lasso_objective(D, x, h, 0.1)).epsilon(1e-9));
  }
}

TEST_CASE("stagewise coding is within 5% of the coordinate-descent LASSO optimum") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = rng.uniform_int(1, 10);
    const auto k = rng.uniform_int(1, 6);
    const auto D = oracle::random_unit_atoms(rng, d, k);
    const auto x = oracle::random_vector(rng, d);
    const auto h = stlars_encode(D, x, CodingParams{0.1, 0.01, 10000});
    const auto ref = oracle::lasso_cd(D, x, 0.1);
    CHECK(oracle::lasso_objective(D, x, h, 0.1) <= 1.05 * oracle::lasso_objective(D, x, ref, 0.1) + 1e-12);
  }
}

TEST_CASE("converged codes satisfy the LASSO optimality conditions") {
  Rng rng(41);
  const double lambda = 0.1;
  for (int trial = 0; trial < 50; ++trial) {
    // Overcomplete, correlated atoms: forward-only moves would stall here.
    const auto D = oracle::random_unit_atoms(rng, 4, 6);
    const auto x = oracle::random_vector(rng, 4);
    StagewiseTrace<double> trace;
    const auto h = StagewiseCoder<double>(D, CodingParams{lambda, 0.01, 100000}).encode(x, &trace);
    REQUIRE(trace.iterations < 100000);
    const Eigen::VectorXd corr = D.transpose() * (x - D * h);
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      if (h[j] == 0.0) {
        CHECK(std::abs(corr[j]) <= lambda / 2 + 1e-9);
      } else {
        CHECK(corr[j] == doctest::Approx((h[j] > 0 ? 1 : -1) * lambda / 2).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("refine never ends above its starting code") {
  Rng rng(5);
  const auto D = oracle::random_unit_atoms(rng, 12, 8);
  StagewiseCoder<double> coder(D, CodingParams{0.1, 0.01, 200});
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = oracle::random_vector(rng, 12);
    const Eigen::VectorXd h0 = oracle::random_vector(rng, 8);
    const auto h = coder.refine(x, h0);
    CHECK(oracle::lasso_objective(D, x, h, 0.1) <= oracle::lasso_objective(D, x, h0, 0.1) + 1e-12);
  }
  CHECK(coder.refine(Eigen::VectorXd::Zero(12), Eigen::VectorXd::Ones(8)).isZero(0.0));
}

TEST_CASE("coding rejects mismatched or non-finite input") {
  const Eigen::MatrixXd D = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(stlars_encode(D, Eigen::VectorXd::Ones(4), CodingParams{}), DimensionError);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(3);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(stlars_encode(D, bad, CodingParams{}), ValidationError);
}

TEST_CASE("objective and reconstruct on hand-computed cases") {
  Eigen::MatrixXd D(2, 1);
  D << 1, 0;
  Eigen::MatrixXd X(2, 1), H(1, 1);
  X << 1, 0;
  H << 0.5;
  CHECK(objective(D, X, H, 0.2) == doctest::Approx(0.35));
  H << 1.0;
  CHECK(objective(D, X, H, 0.0) == 0.0);
  CHECK_THROWS_AS(objective(D, X, Eigen::MatrixXd(1, 2), 0.1), DimensionError);

  Eigen::MatrixXd A(3, 2);
  A << 1, 2, 3, 4, 5, 6;
  Eigen::Vector2d h(0.5, -1);
  const Eigen::Vector3d expect(1 * 0.5 - 2, 3 * 0.5 - 4, 5 * 0.5 - 6);
  CHECK((reconstruct(A, h) - expect).norm() == doctest::Approx(0.0));
  CHECK(reconstruct(A, Eigen::Vector2d::Zero()).isZero(0.0));
  CHECK(reconstruct(A, Eigen::Vector2d(0, 1)) == A.col(1));
}

TEST_CASE("dict_update matches the normal-equations least-squares dictionary") {
  Rng rng(6);
  const auto D0 = oracle::random_unit_atoms(rng, 4, 2);
  Eigen::MatrixXd X(4, 10), H(2, 10);
  for (int i = 0; i < 10; ++i) {
    X.col(i) = oracle::random_vector(rng, 4);
    H.col(i) = oracle::random_vector(rng, 2);
  }
  const double before = (X - D0 * H).squaredNorm();
  const Eigen::MatrixXd star = oracle::normal_equations_dictionary(X, H, kRidge);
  Eigen::MatrixXd Hs = H;
  UpdateStats stats;
  const auto next = dict_update(make_dict(D0), X, Hs, &stats);
  CHECK_FALSE(stats.fallback);
  CHECK((next.atoms * Hs - star * H).norm() <= 1e-9 * (star * H).norm());
  CHECK((X - next.atoms * Hs).squaredNorm() <= before);
  for (Eigen::Index j = 0; j < 2; ++j) CHECK(std::abs(next.atoms.col(j).norm() - 1.0) <= 1e-9);
}

TEST_CASE("dict_update: one-hot codes pull the atom onto the signal direction") {
  Eigen::MatrixXd D(3, 2);
  D << 1, 0, 0, 1, 0, 0;
  Eigen::MatrixXd X(3, 4), H = Eigen::MatrixXd::Zero(2, 4);
  const Eigen::Vector3d dir = Eigen::Vector3d(1, 2, 2) / 3.0;
  for (int i = 0; i < 4; ++i) {
    X.col(i) = (i + 1.0) * dir;
    H(0, i) = i + 1.0;
  }
  H(1, 0) = 0.1;
  X.col(0) += 0.1 * D.col(1);
  const auto next = dict_update(make_dict(D), X, H);
  CHECK((next.atoms.col(0) - dir).norm() < 1e-3);
}

TEST_CASE("dict_update with all-zero codes leaves the dictionary unchanged") {
  Rng rng(7);
  const auto D = oracle::random_unit_atoms(rng, 5, 3);
  Eigen::MatrixXd X(5, 4);
  for (int i = 0; i < 4; ++i) X.col(i) = oracle::random_vector(rng, 5);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, 4);
  UpdateStats stats;
  CHECK(dict_update(make_dict(D), X, H, &stats).atoms == D);
  CHECK(stats.reseeded == 0);
}

TEST_CASE("dict_update reseeds unused atoms from the worst-reconstructed signal") {
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(4, 3);
  Eigen::MatrixXd X(4, 3);
  X << 1, 0, 0,  //
      0, 1, 0,   //
      0, 0, 0,   //
      0, 0, 5;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, 3);
  H(0, 0) = 1;
  H(1, 1) = 1;
  UpdateStats stats;
  const auto next = dict_update(make_dict(D), X, H, &stats);
  CHECK(stats.reseeded == 1);
  CHECK((next.atoms.col(2) - Eigen::Vector4d(0, 0, 0, 1)).norm() < 1e-12);
  CHECK(H.row(2).isZero(0.0));
}

TEST_CASE("learn_dictionary recovers orthogonal signals exactly") {
  const int k = 6;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(12, k);
  for (int j = 0; j < k; ++j) {
    X(2 * j, j) = 0.6;
    X(2 * j + 1, j) = 0.8;
  }
  LearnOptions o;
  o.atoms = k;
  o.params = {1e-4, 0.01, 2000};
  o.epochs = 10;
  o.seed = 3;
  const auto [dict, rep] = learn_dictionary(X, o);
  const Eigen::MatrixXd H = encode_all(dict, X);
  CHECK((X - dict.atoms * H).colwise().squaredNorm().mean() < 1e-3);
  CHECK(rep.epochs_run == 10);
  CHECK(rep.objectives.size() == 10);
}

TEST_CASE("learn_dictionary: unit atoms, non-increasing objective, deterministic") {
  Rng rng(8);
  Eigen::MatrixXd X(16, 40);
  const auto basis = oracle::random_unit_atoms(rng, 16, 5);
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(5);
    c[rng.uniform_int(0, 4)] = rng.uniform(0.5, 1.5);
    c[rng.uniform_int(0, 4)] += rng.uniform(-0.5, 0.5);
    X.col(i) = basis * c + 0.05 * oracle::random_vector(rng, 16);
  }
  LearnOptions o;
  o.atoms = 8;
  o.epochs = 15;
  o.seed = 11;
  const auto [a, ra] = learn_dictionary(X, o);
  const auto [b, rb] = learn_dictionary(X, o);
  CHECK(a.atoms == b.atoms);
  CHECK(ra.checksum == rb.checksum);
  CHECK(ra.checksum == dictionary_checksum(a));
  CHECK_NOTHROW(validate(a));
  for (std::size_t e = 1; e < ra.objectives.size(); ++e) CHECK(ra.objectives[e] <= ra.objectives[e - 1]);
  CHECK(ra.objectives.back() <= ra.objectives.front());

  set_thread_count(3);
  const auto [c, rc] = learn_dictionary(X, o);
  set_thread_count(1);
  CHECK(c.atoms == a.atoms);

  o.epochs = 1;
  const auto [e1, r1] = learn_dictionary(X, o);
  const auto [e2, r2] = learn_dictionary(X, o);
  CHECK(e1.atoms == e2.atoms);
}

TEST_CASE("learn_dictionary pads with random unit atoms when signals run out") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(5, 2);
  LearnOptions o;
  o.atoms = 4;
  o.epochs = 2;
  const auto [dict, rep] = learn_dictionary(X, o);
  CHECK(dict.size() == 4);
  CHECK(rep.warnings.size() == 1);
  CHECK_NOTHROW(validate(dict));
  CHECK_THROWS_AS(learn_dictionary(Eigen::MatrixXd(5, 0), o), ValidationError);
  o.epochs = 0;
  CHECK_THROWS_AS(learn_dictionary(X, o), ValidationError);
}

TEST_CASE("encode_all is independent of the thread count and honours warm starts") {
  Rng rng(9);
  const auto D = oracle::random_unit_atoms(rng, 10, 7);
  Eigen::MatrixXd X(10, 25);
  for (int i = 0; i < 25; ++i) X.col(i) = oracle::random_vector(rng, 10);
  const auto dict = make_dict(D);
  const auto one = encode_all(dict, X);
  set_thread_count(4);
  const auto four = encode_all(dict, X);
  set_thread_count(1);
  CHECK(one == four);
  const auto warm = encode_all(dict, X, &one);
  CHECK(objective(D, X, warm, dict.params.lambda) <= objective(D, X, one, dict.params.lambda));
  const Eigen::MatrixXd wrong(3, 3);
  CHECK_THROWS_AS(encode_all(dict, X, &wrong), DimensionError);
}

TEST_CASE("dictionary file round trip preserves atoms") {
  oracle::TempDir dir("dict");
  Rng rng(10);
  auto dict = make_dict(oracle::random_unit_atoms(rng, 12, 3), CodingParams{0.2, 0.02, 77});
  dict.subtype = "shape";
  dict.seed = 99;
  dict.signal_width = 2;
  dict.signal_height = 2;
  save_dictionary(dict, dir / "d.json");
  const auto back = load_dictionary(dir / "d.json");
  CHECK(back.subtype == "shape");
  CHECK(back.seed == 99);
  CHECK(back.params == dict.params);
  CHECK(back.signal_width == 2);
  CHECK((back.atoms - dict.atoms).cwiseAbs().maxCoeff() <= 1e-12);
  dict.atoms.col(0) *= 2.0;
  CHECK_THROWS_AS(save_dictionary(dict, dir / "bad.json"), NumericError);
}

TEST_CASE("atom grid tiling and per-atom rescale") {
  Dictionary one;
  one.atoms = Eigen::MatrixXd::Constant(12, 1, 0.5);
  one.signal_width = 2;
  one.signal_height = 2;
  const auto tile = atom_grid(one);
  CHECK(tile.width() == 2);
  for (auto v : tile.data()) CHECK(v == 128);

  Rng rng(12);
  Dictionary many;
  many.atoms = oracle::random_unit_atoms(rng, 3 * 3 * 3, 64);
  many.signal_width = 3;
  many.signal_height = 3;
  const auto grid = atom_grid(many);
  CHECK(grid.width() == 8 * 3);
  CHECK(grid.height() == 8 * 3);
  for (int a = 0; a < 64; ++a) {
    Eigen::Index arg = 0;
    many.atoms.col(a).maxCoeff(&arg);
    const int px = static_cast<int>(arg / 3);
    const int x = (a % 8) * 3 + px % 3, y = (a / 8) * 3 + px / 3;
    CHECK(grid.at(x, y, static_cast<int>(arg % 3)) == 255);
  }
  Dictionary flat;
  flat.atoms = Eigen::MatrixXd::Identity(5, 5);
  CHECK_THROWS_AS(atom_grid(flat), DimensionError);
}
