#pragma once

#include "esw/world.hpp"

#include <string>
#include <utility>
#include <vector>

namespace esw {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateFeatureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FeatureKind { Identity, SinCos, PairDistances };

struct FeatureBlock {
  FeatureKind kind = FeatureKind::Identity;
  std::vector<std::pair<int, int>> pairs;  // PairDistances only
  double scale = 1.0;
};

// Ordered concatenation of feature blocks applied to raw coordinates.
struct FeatureSpec {
  std::vector<FeatureBlock> blocks;

  static FeatureSpec identity() { return {{FeatureBlock{}}}; }
  static FeatureSpec sincos() {
    return {{FeatureBlock{FeatureKind::SinCos, {}, 1.0}}};
  }

  int out_dim(int in_dim) const;
  std::vector<std::string> names(int in_dim) const;
  Vec apply(const Vec& x) const;
  Mat apply(const Mat& X) const;          // frames x features
  Mat jacobian(const Vec& x) const;       // out_dim x in_dim
};

struct Scaler {
  Vec mean;
  Vec std;
  bool fitted = false;

  Vec apply(const Vec& x) const;
  Mat apply(const Mat& X) const;
  Vec unscale(const Vec& z) const;
  Mat unscale(const Mat& Z) const;
};

// Population (1/N) variance; throws DegenerateFeatureError naming the column
// if any feature has zero variance.
Scaler fit_scaler(const Mat& X);

}  // namespace esw
