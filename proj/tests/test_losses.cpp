#include "doctest.h"

#include "isoimm/losses.hpp"
#include "isoimm/rng.hpp"
#include "isoimm/training.hpp"

#include <cmath>

using namespace isoimm;

namespace {

double eval(Tape& t, NodeId n) { return tape_eval(t, {}, n).item(); }

NodeId c(Tape& t, const Matrix& m) { return t.constant(Tensor::from(m)); }

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index cols, double scale = 1.0) {
  Matrix m(r, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

// Neighborhoods over a batch of latent codes plus the matching decoded points.
struct IsoSetup {
  std::vector<NeighborhoodSample> nbs;
  std::vector<Matrix> points, decoded;
  Matrix centers;
};

IsoSetup iso_setup(const Matrix& codes, const MlpParams& dec, std::size_t k) {
  IsoSetup s;
  s.nbs = knn_neighborhoods(codes, k);
  s.centers.resize(static_cast<Eigen::Index>(s.nbs.size()), codes.cols());
  for (std::size_t i = 0; i < s.nbs.size(); ++i) {
    s.points.push_back(s.nbs[i].points);
    s.decoded.push_back(mlp_forward(dec, s.nbs[i].points));
    s.centers.row(static_cast<Eigen::Index>(i)) = s.nbs[i].points.row(0);
  }
  return s;
}

MlpParams affine(const Matrix& a, const Vector& b) {
  MlpParams p;
  p.spec = {{static_cast<std::size_t>(a.cols()), static_cast<std::size_t>(a.rows())}, ActivationKind::Identity};
  p.layers.push_back({Tensor::from(a), Tensor::vector(std::vector<double>(b.data(), b.data() + b.size()))});
  return p;
}

}  // namespace

TEST_CASE("loss_re examples") {
  Tape t;
  Matrix x{{1, 2}, {3, -1}};
  CHECK(eval(t, loss_re(t, c(t, x), c(t, x))) == 0.0);

  Tape t2;
  CHECK(eval(t2, loss_re(t2, c(t2, Matrix{{1, 2}}), c(t2, Matrix{{0, 0}}))) == 2.5);

  Tape t3;
  CHECK(eval(t3, loss_re(t3, c(t3, Matrix{{1, 2}, {1, 2}}), c(t3, Matrix{{0, 0}, {0, 0}}))) == 2.5);

  Tape t4;
  NodeId bad = loss_re(t4, c(t4, Matrix{{1, 2}}), c(t4, Matrix{{1, 2, 3}}));
  CHECK_THROWS_AS(t4.forward(), ShapeError);
  (void)bad;
}

TEST_CASE("loss_tm examples") {
  Tape t;
  CHECK(eval(t, loss_tm(t, c(t, Matrix::Ones(3, 3)), all_pairs(3))) <= 1e-6);

  Tape t2;
  CHECK(eval(t2, loss_tm(t2, c(t2, Matrix{{0, 0, 0}, {1, 0, 0}}), {{0, 1}})) == doctest::Approx(1.0).epsilon(1e-12));

  Tape t3;
  NodeId d = c(t3, Matrix{{0, 0, 0}, {1, 0, 0}, {0, 3, 0}});
  CHECK(eval(t3, loss_tm(t3, d, {{0, 1}, {0, 2}})) == doctest::Approx(2.0).epsilon(1e-12));

  Tape t4;
  CHECK_THROWS(loss_tm(t4, c(t4, Matrix::Ones(2, 2)), {}));
}

TEST_CASE("loss_is examples") {
  SUBCASE("metric distance 1 against decoded distance 2") {
    IsometryPairs pairs;
    pairs.center = {0};
    pairs.displacement = Matrix{{1.0}};
    pairs.decoded_distance = Vector{{2.0}};
    Tape t;
    CHECK(eval(t, loss_is(t, {c(t, Matrix{{1.0}})}, pairs)) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("zero displacements") {
    IsometryPairs pairs;
    pairs.center = {0, 0};
    pairs.displacement = Matrix::Zero(2, 2);
    pairs.decoded_distance = Vector::Constant(2, 1e-6);
    Tape t;
    CHECK(eval(t, loss_is(t, {c(t, Matrix{{1, 0}}), c(t, Matrix{{0, 1}})}, pairs)) <= 1e-12);
  }
  SUBCASE("same affine decoder and dual map") {
    Rng rng(9, "affine");
    MlpParams f = affine(random_matrix(rng, 3, 2, 2.0), Vector{{1, -2, 0.5}});
    Matrix codes = random_matrix(rng, 20, 2);
    IsoSetup s = iso_setup(codes, f, 8);
    IsometryPairs pairs = isometry_pairs(s.nbs, s.points, s.decoded);
    CHECK(pairs.size() == 20 * 36);
    Tape t;
    MlpNodes net = place_mlp(t, f, true);
    auto cols = mlp_jacobian_columns_node(t, net, c(t, s.centers), 20);
    CHECK(eval(t, loss_is(t, cols, pairs)) <= 1e-9);
  }
  SUBCASE("the empty pair set is rejected") {
    Tape t;
    CHECK_THROWS(loss_is(t, {}, IsometryPairs{}));
  }
}

TEST_CASE("loss_dual examples") {
  Tape t;
  Matrix a{{1, 2, 3}, {4, 5, 6}};
  CHECK(eval(t, loss_dual(t, c(t, a), c(t, a))) <= 1e-6);

  Tape t2;
  CHECK(eval(t2, loss_dual(t2, c(t2, Matrix{{3, 4, 0}}), c(t2, Matrix{{0, 0, 0}}))) == doctest::Approx(5.0).epsilon(1e-12));

  Tape t3;
  CHECK(eval(t3, loss_dual(t3, c(t3, Matrix{{1, 0}, {0, 3}}), c(t3, Matrix{{0, 0}, {0, 0}}))) ==
        doctest::Approx(2.0).epsilon(1e-12));

  Rng rng(2, "sym");
  Matrix p = random_matrix(rng, 5, 3), q = random_matrix(rng, 5, 3);
  Tape t4;
  double pq = eval(t4, loss_dual(t4, c(t4, p), c(t4, q)));
  Tape t5;
  CHECK(pq == eval(t5, loss_dual(t5, c(t5, q), c(t5, p))));
}

TEST_CASE("composite objectives") {
  auto immersion = [](double re, double tm, double du, LossWeights w) {
    Tape t;
    NodeId n = loss_immersion(t, t.constant(Tensor::scalar(re)), t.constant(Tensor::scalar(tm)),
                              t.constant(Tensor::scalar(du)), w);
    return eval(t, n);
  };
  auto isometry = [](double is, double du, LossWeights w) {
    Tape t;
    return eval(t, loss_isometry(t, t.constant(Tensor::scalar(is)), t.constant(Tensor::scalar(du)), w));
  };
  CHECK(immersion(0, 0, 0, {}) == 0.0);
  CHECK(immersion(1, 2, 3, {1, 1, 1, 1}) == 6.0);
  CHECK(immersion(1, 5, 3, {2, 0, 1, 1}) == 5.0);
  CHECK(isometry(0, 0, {}) == 0.0);
  CHECK(isometry(2, 1, {1, 1, 1, 1}) == 3.0);
  CHECK(isometry(2, 1, {1, 1, 0, 0.5}) == 1.0);

  LossWeights bad{1, -0.1, 1, 1};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("gradients of the composite objectives") {
  Rng rng(11, "grad");
  MlpParams enc = init_mlp({{3, 6, 6, 2}, ActivationKind::Tanh}, 1);
  MlpParams dec = init_mlp({{2, 6, 6, 3}, ActivationKind::Tanh}, 2);
  MlpParams dual = init_mlp({{2, 6, 6, 3}, ActivationKind::Tanh}, 3);
  const LossWeights w{1.0, 0.3, 0.5, 1.0};
  Matrix x = random_matrix(rng, 10, 3);

  // The immersion objective as a function of one replaced encoder or decoder tensor.
  auto immersion_fn = [&](bool encoder_side, std::size_t tensor) {
    return [&, encoder_side, tensor](Tape& t, NodeId leaf) {
      MlpNodes e = place_mlp(t, enc, false), d = place_mlp(t, dec, false), p = place_mlp(t, dual, false);
      MlpNodes& target = encoder_side ? e : d;
      (tensor % 2 == 0 ? target.weights : target.biases)[tensor / 2] = leaf;
      NodeId xn = c(t, x);
      NodeId z = mlp_forward_node(t, e, xn);
      NodeId rec = mlp_forward_node(t, d, z);
      NodeId tm = loss_tm(t, rec, all_pairs(10));
      NodeId du = loss_dual(t, rec, mlp_forward_node(t, p, z));
      return loss_immersion(t, loss_re(t, xn, rec), tm, du, w);
    };
  };
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(gradient_check(immersion_fn(true, i), *parameter_tensors(enc)[i]) < 1e-5);
    CHECK(gradient_check(immersion_fn(false, i), *parameter_tensors(dec)[i]) < 1e-5);
  }

  Matrix codes = mlp_forward(enc, x);
  IsoSetup s = iso_setup(codes, dec, 4);
  IsometryPairs pairs = isometry_pairs(s.nbs, s.points, s.decoded);
  Matrix rec = mlp_forward(dec, codes);
  auto isometry_fn = [&](std::size_t tensor) {
    return [&, tensor](Tape& t, NodeId leaf) {
      MlpNodes p = place_mlp(t, dual, false);
      (tensor % 2 == 0 ? p.weights : p.biases)[tensor / 2] = leaf;
      auto cols = mlp_jacobian_columns_node(t, p, c(t, s.centers), 10);
      NodeId is = loss_is(t, cols, pairs);
      NodeId du = loss_dual(t, c(t, rec), mlp_forward_node(t, p, c(t, codes)));
      return loss_isometry(t, is, du, w);
    };
  };
  for (std::size_t i = 0; i < 6; ++i) CHECK(gradient_check(isometry_fn(i), *parameter_tensors(dual)[i]) < 1e-5);
}

TEST_CASE("losses are nonnegative on random inputs") {
  Rng rng(13, "nonneg");
  for (int trial = 0; trial < 25; ++trial) {
    Matrix a = random_matrix(rng, 6, 3, 5.0), b = random_matrix(rng, 6, 3, 5.0);
    Tape t;
    NodeId re = loss_re(t, c(t, a), c(t, b));
    NodeId tm = loss_tm(t, c(t, a), all_pairs(6));
    NodeId du = loss_dual(t, c(t, a), c(t, b));
    t.forward();
    CHECK(t.value(re).item() >= 0.0);
    CHECK(t.value(tm).item() >= 0.0);
    CHECK(t.value(du).item() >= 0.0);
  }
}
