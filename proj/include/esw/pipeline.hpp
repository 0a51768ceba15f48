#pragma once

#include "esw/featurize.hpp"
#include "esw/tica.hpp"
#include "esw/vde.hpp"

#include <optional>

namespace esw {

// featurize -> scale -> (optional) tICA projection -> deterministic encoder.
// input_permutation, when set, reorders raw coordinates first: slot i of the
// pipeline reads coordinate input_permutation[i] of the target system.
struct CvPipeline {
  int raw_dim = 1;  // coordinate dimensionality of the system
  FeatureSpec features = FeatureSpec::identity();
  std::optional<Scaler> scaler;
  std::optional<TicaModel> tica;
  int n_tics = 0;
  VdeModel encoder;
  std::vector<int> input_permutation;

  int input_dim() const;
  void validate() const;

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;  // dz/dx
  Vec encoder_inputs(const Vec& x) const;
  // CV values for every row of a raw-coordinate trajectory
  Vec values(const Mat& frames) const;
};

}  // namespace esw
