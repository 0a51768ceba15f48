#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "esw/vde.hpp"

#include <cmath>
#include <random>

using namespace esw;

namespace {

VdeModel identity_model(double w = 1.0, double b = 0.0) {
  VdeModel m;
  m.activation = Activation::Identity;
  m.noise_scale = 0.0;
  DenseLayer l;
  l.W = Mat::Constant(1, 1, w);
  l.b = Vec::Constant(1, b);
  m.encoder = {l};
  m.decoder = {l};
  m.encoder.back().b[0] = b;
  return m;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
               double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

}  // namespace

TEST_CASE("pair enumeration") {
  Mat X(3, 1);
  X.col(0).setLinSpaced(3, 0.0, 2.0);
  PairSet p = make_pairs(X, 1);
  REQUIRE(p.head.rows() == 2);
  CHECK(p.head(0, 0) == 0.0);
  CHECK(p.tail(0, 0) == 1.0);
  CHECK(p.head(1, 0) == 1.0);
  CHECK(p.tail(1, 0) == 2.0);

  Mat Y(4, 1);
  Y.col(0).setLinSpaced(4, 0.0, 3.0);
  CHECK(make_pairs(Y, 3).head.rows() == 1);

  Mat A(5, 1), B(5, 1);
  A.col(0).setLinSpaced(5, 0.0, 4.0);
  B.col(0).setLinSpaced(5, 10.0, 14.0);
  PairSet two = make_pairs(std::vector<Mat>{A, B}, 2);
  CHECK(two.head.rows() == 6);
  // no pair crosses the trajectory boundary
  for (Eigen::Index i = 0; i < 6; ++i)
    CHECK(std::abs(two.tail(i, 0) - two.head(i, 0)) == 2.0);
}

TEST_CASE("encode special cases") {
  // all-zero weights and biases
  MlpSpec spec;
  spec.widths = {2, 4, 1};
  VdeModel m = init_vde(spec, 3, 0.1, 1, 1.0);
  for (auto& l : m.encoder) {
    l.W.setZero();
    l.b.setZero();
  }
  Vec x(2);
  x << 0.3, -0.7;
  CHECK(m.encode_scalar(x) == 0.0);
  CHECK(m.encoder_input_gradient(x).cwiseAbs().maxCoeff() == 0.0);

  // single identity-activation layer is affine
  VdeModel aff = identity_model(2.0, 0.5);
  CHECK(aff.encode_scalar(Vec::Constant(1, 3.0)) == doctest::Approx(6.5));
  CHECK(aff.encoder_input_gradient(Vec::Constant(1, 3.0))[0] ==
        doctest::Approx(2.0));
}

TEST_CASE("hand-computed loss on a 2-pair identity batch") {
  VdeModel m = identity_model();
  m.alpha = 1.0;
  Mat xt(2, 1), xlag(2, 1);
  xt << 1.0, 2.0;
  xlag << 2.0, 0.0;
  Mat noise = Mat::Zero(2, 1);
  LossValue lv = vde_loss(m, xt, xlag, noise);
  // recon = ((1-2)^2 + (2-0)^2)/2 = 2.5; rho = -1 exactly
  CHECK(lv.recon == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(lv.autocorr == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(lv.total == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(!lv.degenerate);
}

TEST_CASE("degenerate flag on constant data") {
  VdeModel m = identity_model();
  Mat xt = Mat::Constant(4, 1, 1.5);
  Mat xlag = Mat::Constant(4, 1, 1.5);
  LossValue lv = vde_loss(m, xt, xlag, Mat::Zero(4, 1));
  CHECK(lv.recon == doctest::Approx(0.0));
  CHECK(lv.autocorr == 0.0);
  CHECK(lv.degenerate);
}

TEST_CASE("alpha = 0 reduces the loss to reconstruction") {
  std::mt19937_64 rng(8);
  MlpSpec spec;
  spec.widths = {2, 5, 1};
  VdeModel m = init_vde(spec, 4, 0.1, 1, 0.0);
  Mat xt = random_mat(16, 2, rng);
  Mat xlag = random_mat(16, 2, rng);
  Mat noise = random_mat(16, 1, rng);
  LossValue lv = vde_loss(m, xt, xlag, noise);
  CHECK(lv.total == lv.recon);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(19);
  MlpSpec spec;
  spec.widths = {2, 3, 1};
  spec.activation = Activation::Swish;
  VdeModel m = init_vde(spec, 5, 0.1, 1, 0.7);
  Mat xt = random_mat(8, 2, rng);
  Mat xlag = xt * 0.8 + random_mat(8, 2, rng, 0.3);
  Mat noise = random_mat(8, 1, rng);

  std::vector<DenseLayer> eg, dg;
  vde_loss(m, xt, xlag, noise, &eg, &dg);

  const double h = 1e-6;
  auto fd_check = [&](std::vector<DenseLayer> VdeModel::*stack,
                      const std::vector<DenseLayer>& grads) {
    for (std::size_t l = 0; l < (m.*stack).size(); ++l) {
      for (Eigen::Index r = 0; r < (m.*stack)[l].W.rows(); ++r)
        for (Eigen::Index c = 0; c < (m.*stack)[l].W.cols(); ++c) {
          VdeModel mp = m, mm = m;
          (mp.*stack)[l].W(r, c) += h;
          (mm.*stack)[l].W(r, c) -= h;
          const double fd = (vde_loss(mp, xt, xlag, noise).total -
                             vde_loss(mm, xt, xlag, noise).total) /
                            (2.0 * h);
          CHECK(std::abs(grads[l].W(r, c) - fd) /
                    std::max(1.0, std::abs(fd)) <
                1e-5);
        }
      for (Eigen::Index r = 0; r < (m.*stack)[l].b.size(); ++r) {
        VdeModel mp = m, mm = m;
        (mp.*stack)[l].b[r] += h;
        (mm.*stack)[l].b[r] -= h;
        const double fd = (vde_loss(mp, xt, xlag, noise).total -
                           vde_loss(mm, xt, xlag, noise).total) /
                          (2.0 * h);
        CHECK(std::abs(grads[l].b[r] - fd) / std::max(1.0, std::abs(fd)) <
              1e-5);
      }
    }
  };
  fd_check(&VdeModel::encoder, eg);
  fd_check(&VdeModel::decoder, dg);
}

TEST_CASE("encoder input gradient matches finite differences") {
  std::mt19937_64 rng(23);
  MlpSpec spec;
  spec.widths = {4, 16, 16, 1};
  spec.activation = Activation::Swish;
  VdeModel m = init_vde(spec, 6, 0.1, 1, 1.0);
  for (int t = 0; t < 50; ++t) {
    Vec x = random_mat(1, 4, rng).transpose();
    Vec g = m.encoder_input_gradient(x);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd =
          (m.encode_scalar(xp) - m.encode_scalar(xm)) / (2.0 * h);
      CHECK(std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
    }
  }
}

TEST_CASE("training lowers the loss on the default architectures") {
  std::mt19937_64 rng(31);
  // slow 1-D latent process observed through 4 features
  const int n = 4000;
  Mat X(n, 4);
  double z = 0.0;
  std::normal_distribution<double> g;
  for (int t = 0; t < n; ++t) {
    z = 0.99 * z + 0.1 * g(rng);
    for (int c = 0; c < 4; ++c)
      X(t, c) = (c % 2 ? -1.0 : 1.0) * z + 0.1 * g(rng);
  }

  MlpSpec deep;
  deep.widths = {4, 16, 16, 1};
  TrainConfig tc;
  tc.epochs = 30;
  tc.lr = 1e-4;
  tc.seed = 9;
  VdeModel m1 = train_vde(X, 25, deep, tc, 0.1, 1.0);
  REQUIRE(m1.report.size() == 30);
  CHECK(m1.report.back().total < m1.report.front().total);

  MlpSpec wide;
  wide.widths = {2, 20, 20, 1};
  TrainConfig tc2;
  tc2.epochs = 100;
  tc2.lr = 1e-2;
  tc2.seed = 9;
  VdeModel m2 = train_vde(X.leftCols(2), 25, wide, tc2, 0.1, 1.0);
  REQUIRE(m2.report.size() == 100);
  CHECK(m2.report.back().total < m2.report.front().total);
}

TEST_CASE("training is bit-deterministic per seed") {
  std::mt19937_64 rng(37);
  Mat X = random_mat(500, 2, rng);
  for (int t = 1; t < 500; ++t) X.row(t) = 0.9 * X.row(t - 1) + 0.2 * X.row(t);
  MlpSpec spec;
  spec.widths = {2, 8, 1};
  TrainConfig tc;
  tc.epochs = 3;
  tc.lr = 1e-3;
  tc.seed = 77;
  VdeModel a = train_vde(X, 5, spec, tc, 0.1, 1.0);
  VdeModel b = train_vde(X, 5, spec, tc, 0.1, 1.0);
  for (std::size_t l = 0; l < a.encoder.size(); ++l)
    CHECK((a.encoder[l].W - b.encoder[l].W).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("diverging run raises an actionable error") {
  std::mt19937_64 rng(41);
  Mat X = random_mat(400, 2, rng, 10.0);
  MlpSpec spec;
  spec.widths = {2, 8, 1};
  TrainConfig tc;
  tc.epochs = 50;
  tc.lr = 1e12;
  tc.seed = 1;
  try {
    train_vde(X, 5, spec, tc, 0.1, 1.0);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
}

TEST_CASE("shape validation") {
  MlpSpec bad;
  bad.widths = {3};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  VdeModel m = identity_model();
  Mat xt = Mat::Zero(4, 1);
  CHECK_THROWS_AS(vde_loss(m, xt, Mat::Zero(3, 1), Mat::Zero(4, 1)),
                  ShapeError);
  CHECK_THROWS_AS(vde_loss(m, Mat::Zero(1, 1), Mat::Zero(1, 1),
                           Mat::Zero(1, 1)),
                  ShapeError);
}
