#pragma once

#include "esw/world.hpp"

#include <vector>

namespace esw {

struct LagError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConditioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OverPenalizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CovarianceSet {
  Vec mean;
  Mat c00;     // symmetric instantaneous covariance
  Mat c0t;     // symmetrized time-lagged covariance
  long n_pairs = 0;
};

struct TicaModel {
  long lag = 0;                 // frames
  Vec mean;
  Mat c00;
  Mat c0t;
  Vec eigenvalues;              // descending
  Mat components;               // columns, C00-orthonormal (dense case)
  double penalty = 0.0;         // L1 weight, 0 = dense
  std::vector<int> n_features_retained;
  double shrinkage = 0.0;

  int n_features() const { return static_cast<int>(mean.size()); }
  int n_components() const { return static_cast<int>(components.cols()); }
};

// Pooled symmetrized covariances at lag tau; pairs never cross trajectory
// boundaries.
CovarianceSet estimate_covariances(const std::vector<Mat>& trajs, long tau);
CovarianceSet estimate_covariances(const Mat& X, long tau);

double default_shrinkage(const Mat& c00);

TicaModel solve_tica(const CovarianceSet& cov, long tau, double shrinkage);
TicaModel solve_sparse_tica(const CovarianceSet& cov, long tau,
                            double shrinkage, double penalty,
                            int n_components);

Mat project(const TicaModel& m, const Mat& X, int n_tics);

// -tau/ln(lambda) in frame units times dt_record; NaN where lambda <= 0.
Vec timescales(const TicaModel& m, double dt_record = 1.0);

struct ConvergencePoint {
  double fraction = 0.0;
  double subspace_angle = 0.0;  // rad, leading component vs full-data model
  double timescale_ratio = 0.0; // t1(fraction)/t1(full)
  bool low_data_flag = false;   // no usable timescale, angle > 1 rad, or
                                // t1 ratio outside [0.2, 5]
};

std::vector<ConvergencePoint> convergence_study(
    const Mat& X, long tau, const std::vector<double>& fractions,
    double shrinkage = -1.0, double penalty = 0.0);

// principal angle between the leading eigenvector subspaces (C00 metric of
// the reference model)
double leading_subspace_angle(const TicaModel& ref, const TicaModel& other);

}  // namespace esw
