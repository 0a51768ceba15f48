#include "esw/tica.hpp"

#include "esw/featurize.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace esw {

namespace {

// orientation convention: first loading with |v_i| > tol is positive
void fix_sign(Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

Eigen::LLT<Mat> whitener(const Mat& c00, double shrinkage) {
  const Eigen::Index d = c00.rows();
  Mat s = c00 + shrinkage * Mat::Identity(d, d);
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    throw ConditioningError(
        "C00 + eps*I not positive definite; increase shrinkage");
  return llt;
}

}  // namespace

CovarianceSet estimate_covariances(const std::vector<Mat>& trajs, long tau) {
  if (trajs.empty()) throw LagError("no trajectories");
  const Eigen::Index d = trajs.front().cols();
  if (tau < 1) throw LagError("lag must be >= 1");
  for (const auto& X : trajs)
    if (X.rows() < tau + 1)
      throw LagError("lag >= trajectory length");

  Vec sum = Vec::Zero(d);
  Mat s00 = Mat::Zero(d, d);
  Mat s0t = Mat::Zero(d, d);
  long pairs = 0;
  for (const auto& X : trajs) {
    const Eigen::Index n = X.rows() - tau;
    const Mat a = X.topRows(n);
    const Mat b = X.bottomRows(n);
    sum += 0.5 * (a.colwise().sum() + b.colwise().sum()).transpose();
    s00 += 0.5 * (a.transpose() * a + b.transpose() * b);
    s0t += 0.5 * (a.transpose() * b + b.transpose() * a);
    pairs += n;
  }
  CovarianceSet cov;
  cov.n_pairs = pairs;
  cov.mean = sum / static_cast<double>(pairs);
  cov.c00 = s00 / static_cast<double>(pairs) - cov.mean * cov.mean.transpose();
  cov.c0t = s0t / static_cast<double>(pairs) - cov.mean * cov.mean.transpose();
  // enforce exact symmetry against round-off
  cov.c00 = 0.5 * (cov.c00 + cov.c00.transpose()).eval();
  cov.c0t = 0.5 * (cov.c0t + cov.c0t.transpose()).eval();
  return cov;
}

CovarianceSet estimate_covariances(const Mat& X, long tau) {
  return estimate_covariances(std::vector<Mat>{X}, tau);
}

double default_shrinkage(const Mat& c00) {
  return 1e-6 * c00.trace() / static_cast<double>(c00.rows());
}

TicaModel solve_tica(const CovarianceSet& cov, long tau, double shrinkage) {
  if (shrinkage < 0.0) shrinkage = default_shrinkage(cov.c00);
  const Eigen::Index d = cov.c00.rows();
  auto llt = whitener(cov.c00, shrinkage);
  const Mat L = llt.matrixL();
  // whitened symmetric problem: L^-1 C0t L^-T
  Mat m = llt.matrixL().solve(cov.c0t);
  m = llt.matrixL().solve(m.transpose()).transpose();
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> eig(m);
  if (eig.info() != Eigen::Success) throw ConditioningError("eigensolver failed");

  TicaModel model;
  model.lag = tau;
  model.mean = cov.mean;
  model.c00 = cov.c00;
  model.c0t = cov.c0t;
  model.shrinkage = shrinkage;
  model.eigenvalues.resize(d);
  model.components.resize(d, d);
  // ascending from Eigen -> descending
  for (Eigen::Index i = 0; i < d; ++i) {
    model.eigenvalues[i] = eig.eigenvalues()[d - 1 - i];
    Vec v = L.transpose().triangularView<Eigen::Upper>().solve(
        eig.eigenvectors().col(d - 1 - i));
    fix_sign(v);
    model.components.col(i) = v;
  }
  model.n_features_retained.assign(d, static_cast<int>(d));
  return model;
}

TicaModel solve_sparse_tica(const CovarianceSet& cov, long tau,
                            double shrinkage, double penalty,
                            int n_components) {
  if (penalty < 0.0) throw SpecError("penalty must be >= 0");
  if (shrinkage < 0.0) shrinkage = default_shrinkage(cov.c00);
  const Eigen::Index d = cov.c00.rows();
  n_components = std::min<int>(n_components, static_cast<int>(d));
  const Mat s = cov.c00 + shrinkage * Mat::Identity(d, d);

  TicaModel model;
  model.lag = tau;
  model.mean = cov.mean;
  model.c00 = cov.c00;
  model.c0t = cov.c0t;
  model.shrinkage = shrinkage;
  model.penalty = penalty;
  model.eigenvalues.resize(n_components);
  model.components.resize(d, n_components);
  model.n_features_retained.assign(n_components, 0);

  Mat c = cov.c0t;
  Eigen::LLT<Mat> llt = whitener(cov.c00, shrinkage);
  const int max_iter = 10000;
  const double tol = 1e-8;
  for (int comp = 0; comp < n_components; ++comp) {
    // start from the dense leading eigenvector of the deflated problem
    CovarianceSet sub{cov.mean, cov.c00, c, cov.n_pairs};
    TicaModel dense = solve_tica(sub, tau, shrinkage);
    Vec v = dense.components.col(0);
    double lambda = dense.eigenvalues[0];
    for (int it = 0; it < max_iter; ++it) {
      Vec w = llt.solve(c * v);  // generalized power step S^-1 C0t v
      if (penalty > 0.0) {
        const double thr = penalty * w.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < d; ++i) {
          const double a = std::abs(w[i]) - thr;
          w[i] = a > 0.0 ? (w[i] > 0.0 ? a : -a) : 0.0;
        }
      }
      const double norm2 = w.dot(s * w);
      if (!(norm2 > 0.0))
        throw OverPenalizationError(
            "sparse component collapsed to zero; reduce penalty rho_s=" +
            std::to_string(penalty));
      w /= std::sqrt(norm2);
      const double delta = std::min((w - v).norm(), (w + v).norm());
      v = w;
      lambda = v.dot(c * v);
      if (delta < tol) break;
    }
    fix_sign(v);
    model.eigenvalues[comp] = lambda;
    model.components.col(comp) = v;
    int retained = 0;
    for (Eigen::Index i = 0; i < d; ++i)
      if (std::abs(v[i]) > 1e-12) ++retained;
    model.n_features_retained[comp] = retained;
    // generalized (Schur-complement style) deflation of the found direction
    const Vec sv = s * v;
    c -= lambda * sv * sv.transpose();
    c = 0.5 * (c + c.transpose()).eval();
  }
  return model;
}

Mat project(const TicaModel& m, const Mat& X, int n_tics) {
  if (X.cols() != m.n_features()) throw SpecError("feature width mismatch");
  if (n_tics > m.n_components()) throw SpecError("n_tics exceeds components");
  return (X.rowwise() - m.mean.transpose()) * m.components.leftCols(n_tics);
}

Vec timescales(const TicaModel& m, double dt_record) {
  Vec t(m.eigenvalues.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double lam = m.eigenvalues[i];
    t[i] = (lam > 0.0 && lam < 1.0)
               ? -static_cast<double>(m.lag) * dt_record / std::log(lam)
               : std::numeric_limits<double>::quiet_NaN();
  }
  return t;
}

double leading_subspace_angle(const TicaModel& ref, const TicaModel& other) {
  const Vec a = ref.components.col(0).normalized();
  const Vec b = other.components.col(0).normalized();
  const double c = std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
  return std::acos(c);
}

std::vector<ConvergencePoint> convergence_study(
    const Mat& X, long tau, const std::vector<double>& fractions,
    double shrinkage, double penalty) {
  auto fit = [&](const Mat& data) {
    CovarianceSet cov = estimate_covariances(data, tau);
    return penalty > 0.0 ? solve_sparse_tica(cov, tau, shrinkage, penalty, 2)
                         : solve_tica(cov, tau, shrinkage);
  };
  TicaModel full = fit(X);
  const double t1_full = timescales(full)[0];
  std::vector<ConvergencePoint> out;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw LagError("fraction outside (0,1]");
    const Eigen::Index n = static_cast<Eigen::Index>(
        std::floor(f * static_cast<double>(X.rows())));
    if (n < tau + 1) throw LagError("fraction yields fewer than tau+1 frames");
    TicaModel part = fit(X.topRows(n));
    ConvergencePoint p;
    p.fraction = f;
    p.subspace_angle = leading_subspace_angle(full, part);
    const double t1 = timescales(part)[0];
    p.timescale_ratio = t1 / t1_full;
    p.low_data_flag = !std::isfinite(p.timescale_ratio) ||
                      p.subspace_angle > 1.0 ||
                      p.timescale_ratio < 0.2 || p.timescale_ratio > 5.0;
    out.push_back(p);
  }
  return out;
}

}  // namespace esw
