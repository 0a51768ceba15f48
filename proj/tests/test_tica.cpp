#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "esw/tica.hpp"
#include "esw/world.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

using namespace esw;

namespace {

// reversible 3-state chain (symmetric => uniform stationary distribution)
Eigen::Matrix3d chain_T() {
  Eigen::Matrix3d T;
  T << 0.90, 0.08, 0.02,
       0.08, 0.84, 0.08,
       0.02, 0.08, 0.90;
  return T;
}

Mat chain_means() {
  Mat mu(3, 2);
  mu << -1.0, 0.0,
         0.0, 1.0,
         1.0, 0.0;
  return mu;
}

Mat chain_emissions(int n, std::uint64_t seed, double noise) {
  const Eigen::Matrix3d T = chain_T();
  const Mat mu = chain_means();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, noise);
  int s = 0;
  Mat X(n, 2);
  for (int t = 0; t < n; ++t) {
    const double r = u(rng);
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) {
      acc += T(s, j);
      if (r < acc) {
        s = j;
        break;
      }
    }
    X(t, 0) = mu(s, 0) + g(rng);
    X(t, 1) = mu(s, 1) + g(rng);
  }
  return X;
}

double chain_lambda2() {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(chain_T());
  return es.eigenvalues()[1];  // ascending order; [2] is the Perron root 1
}

// closed-form covariances of the emission process
void chain_covariances(long tau, double noise, Mat& c00, Mat& c0t) {
  const Eigen::Matrix3d T = chain_T();
  const Mat mu = chain_means();
  Eigen::Matrix3d Tt = Eigen::Matrix3d::Identity();
  for (long i = 0; i < tau; ++i) Tt = Tt * T;
  const Vec pi = Vec::Constant(3, 1.0 / 3.0);
  Vec mbar = Vec::Zero(2);
  for (int i = 0; i < 3; ++i) mbar += pi[i] * mu.row(i).transpose();
  c00 = noise * noise * Mat::Identity(2, 2);
  c0t = Mat::Zero(2, 2);
  for (int i = 0; i < 3; ++i) {
    const Vec mi = mu.row(i).transpose() - mbar;
    c00 += pi[i] * mi * mi.transpose();
    for (int j = 0; j < 3; ++j) {
      const Vec mj = mu.row(j).transpose() - mbar;
      c0t += pi[i] * Tt(i, j) * mi * mj.transpose();
    }
  }
}

CovarianceSet manual_cov(const Mat& c00, const Mat& c0t) {
  CovarianceSet cov;
  cov.mean = Vec::Zero(c00.rows());
  cov.c00 = c00;
  cov.c0t = c0t;
  cov.n_pairs = 1000;
  return cov;
}

}  // namespace

TEST_CASE("white noise has vanishing lagged covariance") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const int n = 100000;
  Mat X(n, 3);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < 3; ++c) X(r, c) = g(rng);
  CovarianceSet cov = estimate_covariances(X, 1);
  CHECK(cov.c0t.cwiseAbs().maxCoeff() < 4.0 / std::sqrt(double(n)));
}

TEST_CASE("pooling a duplicated trajectory changes nothing") {
  Mat X = chain_emissions(5000, 9, 0.05);
  CovarianceSet one = estimate_covariances(X, 5);
  CovarianceSet two = estimate_covariances(std::vector<Mat>{X, X}, 5);
  CHECK((one.c00 - two.c00).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((one.c0t - two.c0t).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(two.n_pairs == 2 * one.n_pairs);
}

TEST_CASE("pairs never cross trajectory boundaries") {
  Mat A(5, 1), B(5, 1);
  A.col(0).setLinSpaced(5, 0.0, 4.0);
  B.col(0).setLinSpaced(5, 10.0, 14.0);
  CovarianceSet cov = estimate_covariances(std::vector<Mat>{A, B}, 2);
  CHECK(cov.n_pairs == 6);
}

TEST_CASE("chain covariances match the transition-matrix closed form") {
  const long tau = 5;
  const double noise = 0.02;
  Mat X = chain_emissions(200000, 21, noise);
  CovarianceSet cov = estimate_covariances(X, tau);
  Mat c00, c0t;
  chain_covariances(tau, noise, c00, c0t);
  CHECK((cov.c00 - c00).cwiseAbs().maxCoeff() < 0.05);
  CHECK((cov.c0t - c0t).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("degenerate generalized problems") {
  Mat c00(2, 2);
  c00 << 2.0, 0.3, 0.3, 1.0;
  TicaModel ident = solve_tica(manual_cov(c00, c00), 1, 0.0);
  for (Eigen::Index i = 0; i < ident.eigenvalues.size(); ++i)
    CHECK(ident.eigenvalues[i] == doctest::Approx(1.0).epsilon(1e-10));

  TicaModel zero = solve_tica(manual_cov(c00, Mat::Zero(2, 2)), 1, 0.0);
  for (Eigen::Index i = 0; i < zero.eigenvalues.size(); ++i)
    CHECK(zero.eigenvalues[i] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("top eigenvalue tracks the chain's second transition eigenvalue") {
  const long tau = 5;
  const double oracle = std::pow(chain_lambda2(), double(tau));
  Mat X = chain_emissions(200000, 33, 0.02);
  CovarianceSet cov = estimate_covariances(X, tau);
  TicaModel m = solve_tica(cov, tau, default_shrinkage(cov.c00));
  CHECK(std::abs(m.eigenvalues[0] - oracle) < 0.02);
}

TEST_CASE("zero-penalty sparse tica reproduces the dense solution") {
  Mat X = chain_emissions(50000, 12, 0.02);
  CovarianceSet cov = estimate_covariances(X, 5);
  const double eps = default_shrinkage(cov.c00);
  TicaModel dense = solve_tica(cov, 5, eps);
  TicaModel sparse = solve_sparse_tica(cov, 5, eps, 0.0, 2);
  CHECK(leading_subspace_angle(dense, sparse) < 1e-4);
}

TEST_CASE("retained feature count is non-increasing in the penalty") {
  // chain emissions embedded among noise features through a fixed mixing
  std::mt19937_64 rng(44);
  std::normal_distribution<double> g;
  Mat X = chain_emissions(50000, 13, 0.02);
  Mat W(50000, 8);
  W.leftCols(2) = X;
  for (int r = 0; r < 50000; ++r)
    for (int c = 2; c < 8; ++c) W(r, c) = 0.3 * g(rng);
  Mat mix(8, 8);
  std::mt19937_64 mrng(7);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      mix(r, c) = (r == c ? 1.0 : 0.05 * std::normal_distribution<double>()(mrng));
  Mat Y = W * mix.transpose();
  CovarianceSet cov = estimate_covariances(Y, 5);
  const double eps = default_shrinkage(cov.c00);
  int prev = 9;
  for (double rho : {1e-4, 1e-3, 1e-2, 0.1, 0.3}) {
    TicaModel m = solve_sparse_tica(cov, 5, eps, rho, 1);
    CHECK(m.n_features_retained[0] <= prev);
    prev = m.n_features_retained[0];
  }
}

TEST_CASE("planted sparse block stays confined") {
  // informative 3-feature block with a sparse leading eigenvector
  Mat c00 = Mat::Identity(6, 6);
  Mat c0t = Mat::Zero(6, 6);
  Vec v = Vec::Zero(6);
  v[0] = 0.8;
  v[1] = 0.6;
  c0t.topLeftCorner(3, 3) = 0.9 * v.head(3) * v.head(3).transpose();
  c0t.bottomRightCorner(3, 3) = 0.1 * Mat::Identity(3, 3);
  TicaModel m = solve_sparse_tica(manual_cov(c00, c0t), 1, 1e-8, 0.05, 1);
  for (int i = 3; i < 6; ++i) CHECK(m.components(i, 0) == 0.0);
  CHECK(m.n_features_retained[0] <= 3);
}

TEST_CASE("over-penalization raises an error") {
  Mat X = chain_emissions(20000, 15, 0.02);
  CovarianceSet cov = estimate_covariances(X, 5);
  CHECK_THROWS_AS(
      solve_sparse_tica(cov, 5, default_shrinkage(cov.c00), 1.01, 1),
      OverPenalizationError);
}

TEST_CASE("projection properties") {
  const long tau = 5;
  Mat X = chain_emissions(200000, 55, 0.02);
  CovarianceSet cov = estimate_covariances(X, tau);
  TicaModel m = solve_tica(cov, tau, 0.0);

  // frame exactly at the mean projects to zero
  Mat at_mean = m.mean.transpose();
  CHECK(project(m, at_mean, 2).cwiseAbs().maxCoeff() < 1e-12);

  // C00-orthonormality: covariance of the projections is the identity
  Mat Y = project(m, X, 2);
  CovarianceSet pcov = estimate_covariances(Y, tau);
  CHECK((pcov.c00 - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-6);
  // and the lagged autocorrelations recover the eigenvalues
  CHECK(std::abs(pcov.c0t(0, 0) - m.eigenvalues[0]) < 1e-6);
  CHECK(std::abs(pcov.c0t(1, 1) - m.eigenvalues[1]) < 1e-6);
}

TEST_CASE("timescale arithmetic") {
  TicaModel m;
  m.lag = 1;
  m.eigenvalues = Vec(4);
  m.eigenvalues << 1.0 / std::exp(1.0), 0.5, 1.2, -0.1;
  Vec t = timescales(m);
  CHECK(t[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isnan(t[2]));
  CHECK(std::isnan(t[3]));

  m.lag = 25;
  m.eigenvalues = Vec::Constant(1, 0.5);
  CHECK(timescales(m)[0] == doctest::Approx(25.0 / std::log(2.0)));
}

TEST_CASE("chain timescale matches the transition-matrix oracle") {
  const long tau = 5;
  Mat X = chain_emissions(200000, 71, 0.02);
  CovarianceSet cov = estimate_covariances(X, tau);
  TicaModel m = solve_tica(cov, tau, default_shrinkage(cov.c00));
  const double oracle = -1.0 / std::log(chain_lambda2());  // frames
  CHECK(timescales(m)[0] == doctest::Approx(oracle).epsilon(0.10));
}

TEST_CASE("convergence study on double-well data") {
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  p.a = 2.0;
  Thermostat th;
  Trajectory traj = simulate(p, th, Vec::Constant(1, -1.0), 2000000, 20, 5);
  Mat X(traj.n_frames(), 2);
  X.col(0) = traj.frames.col(0);
  X.col(1) = traj.frames.col(0).array().square();

  const std::vector<double> fracs{0.2, 0.4, 0.6, 0.8, 1.0};
  auto pts = convergence_study(X, 25, fracs);
  REQUIRE(pts.size() == fracs.size());
  CHECK(pts.back().subspace_angle == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(pts.back().timescale_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(!pts.back().low_data_flag);

  // non-increasing trend: pool-adjacent-violators fit stays close to the raw
  // angles and ends below where it starts
  std::vector<double> fit;
  std::vector<int> len;
  for (const auto& pt : pts) {
    fit.push_back(pt.subspace_angle);
    len.push_back(1);
    while (fit.size() > 1 && fit[fit.size() - 2] < fit.back()) {
      const double merged =
          (fit[fit.size() - 2] * len[len.size() - 2] + fit.back() * len.back()) /
          (len[len.size() - 2] + len.back());
      len[len.size() - 2] += len.back();
      fit.pop_back();
      len.pop_back();
      fit.back() = merged;
    }
  }
  double rss = 0.0;
  std::size_t at = 0;
  for (std::size_t b = 0; b < fit.size(); ++b)
    for (int i = 0; i < len[b]; ++i, ++at) {
      const double d = pts[at].subspace_angle - fit[b];
      rss += d * d;
    }
  CHECK(std::sqrt(rss / pts.size()) < 0.1);
  CHECK(pts.front().subspace_angle >= pts.back().subspace_angle);
}

TEST_CASE("prefix without a barrier crossing is flagged") {
  PotentialSpec p;
  p.kind = PotentialKind::DoubleWell1D;
  p.a = 6.0;  // high barrier: first crossing comes late
  Thermostat th;
  Trajectory traj = simulate(p, th, Vec::Constant(1, -1.0), 6000000, 20, 2);
  const Vec x = traj.frames.col(0);
  Eigen::Index first_cross = x.size();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] > 0.5) {
      first_cross = i;
      break;
    }
  REQUIRE(first_cross > 2000);  // the prefix below really has no crossing
  REQUIRE(first_cross < x.size());
  Mat X(x.size(), 2);
  X.col(0) = x;
  X.col(1) = x.array().square();
  const double frac = 0.5 * double(first_cross) / double(x.size());
  auto pts = convergence_study(X, 25, {frac, 1.0});
  CHECK(pts[0].low_data_flag);
  CHECK(!pts[1].low_data_flag);
}

TEST_CASE("lag validation") {
  Mat X = Mat::Zero(10, 2);
  CHECK_THROWS_AS(estimate_covariances(X, 10), LagError);
  CHECK_THROWS_AS(estimate_covariances(X, 0), LagError);
}
