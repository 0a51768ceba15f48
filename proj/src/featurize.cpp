#include "esw/featurize.hpp"

#include <cmath>

namespace esw {

namespace {

int block_out_dim(const FeatureBlock& b, int in_dim) {
  switch (b.kind) {
    case FeatureKind::Identity: return in_dim;
    case FeatureKind::SinCos: return 2 * in_dim;
    case FeatureKind::PairDistances: return static_cast<int>(b.pairs.size());
  }
  return 0;
}

void check_pairs(const FeatureBlock& b, int in_dim) {
  for (auto [i, j] : b.pairs)
    if (i < 0 || j < 0 || i >= in_dim || j >= in_dim)
      throw SpecError("pair distance index out of range");
}

}  // namespace

int FeatureSpec::out_dim(int in_dim) const {
  int d = 0;
  for (const auto& b : blocks) d += block_out_dim(b, in_dim);
  return d;
}

std::vector<std::string> FeatureSpec::names(int in_dim) const {
  std::vector<std::string> out;
  for (const auto& b : blocks) {
    switch (b.kind) {
      case FeatureKind::Identity:
        for (int i = 0; i < in_dim; ++i) out.push_back("x" + std::to_string(i));
        break;
      case FeatureKind::SinCos:
        for (int i = 0; i < in_dim; ++i) {
          out.push_back("sin_x" + std::to_string(i));
          out.push_back("cos_x" + std::to_string(i));
        }
        break;
      case FeatureKind::PairDistances:
        for (auto [i, j] : b.pairs)
          out.push_back("d_" + std::to_string(i) + "_" + std::to_string(j));
        break;
    }
  }
  return out;
}

Vec FeatureSpec::apply(const Vec& x) const {
  const int in_dim = static_cast<int>(x.size());
  Vec out(out_dim(in_dim));
  int at = 0;
  for (const auto& b : blocks) {
    switch (b.kind) {
      case FeatureKind::Identity:
        for (int i = 0; i < in_dim; ++i) out[at++] = b.scale * x[i];
        break;
      case FeatureKind::SinCos:
        for (int i = 0; i < in_dim; ++i) {
          out[at++] = b.scale * std::sin(x[i]);
          out[at++] = b.scale * std::cos(x[i]);
        }
        break;
      case FeatureKind::PairDistances:
        check_pairs(b, in_dim);
        for (auto [i, j] : b.pairs) out[at++] = b.scale * std::abs(x[i] - x[j]);
        break;
    }
  }
  return out;
}

Mat FeatureSpec::apply(const Mat& X) const {
  Mat out(X.rows(), out_dim(static_cast<int>(X.cols())));
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    out.row(r) = apply(Vec(X.row(r))).transpose();
  return out;
}

Mat FeatureSpec::jacobian(const Vec& x) const {
  const int in_dim = static_cast<int>(x.size());
  Mat J = Mat::Zero(out_dim(in_dim), in_dim);
  int at = 0;
  for (const auto& b : blocks) {
    switch (b.kind) {
      case FeatureKind::Identity:
        for (int i = 0; i < in_dim; ++i) J(at++, i) = b.scale;
        break;
      case FeatureKind::SinCos:
        for (int i = 0; i < in_dim; ++i) {
          J(at++, i) = b.scale * std::cos(x[i]);
          J(at++, i) = -b.scale * std::sin(x[i]);
        }
        break;
      case FeatureKind::PairDistances:
        check_pairs(b, in_dim);
        for (auto [i, j] : b.pairs) {
          const double s = x[i] >= x[j] ? 1.0 : -1.0;
          J(at, i) = b.scale * s;
          J(at, j) = -b.scale * s;
          ++at;
        }
        break;
    }
  }
  return J;
}

Scaler fit_scaler(const Mat& X) {
  if (X.rows() < 2) throw SpecError("fit_scaler needs at least 2 frames");
  Scaler s;
  s.mean = X.colwise().mean();
  s.std.resize(X.cols());
  const double n = static_cast<double>(X.rows());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - s.mean[c]).square().sum() / n;
    if (var <= 0.0)
      throw DegenerateFeatureError("zero-variance feature column " +
                                   std::to_string(c));
    s.std[c] = std::sqrt(var);
  }
  s.fitted = true;
  return s;
}

namespace {
void check_scaler(const Scaler& s, Eigen::Index width) {
  if (!s.fitted) throw SpecError("scaler not fitted");
  if (s.mean.size() != width) throw SpecError("scaler width mismatch");
}
}  // namespace

Vec Scaler::apply(const Vec& x) const {
  check_scaler(*this, x.size());
  return (x - mean).cwiseQuotient(std);
}

Mat Scaler::apply(const Mat& X) const {
  check_scaler(*this, X.cols());
  return (X.rowwise() - mean.transpose()).array().rowwise() /
         std.transpose().array();
}

Vec Scaler::unscale(const Vec& z) const {
  check_scaler(*this, z.size());
  return z.cwiseProduct(std) + mean;
}

Mat Scaler::unscale(const Mat& Z) const {
  check_scaler(*this, Z.cols());
  return (Z.array().rowwise() * std.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

}  // namespace esw
