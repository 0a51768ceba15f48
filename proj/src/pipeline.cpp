#include "esw/pipeline.hpp"

namespace esw {

int CvPipeline::input_dim() const { return raw_dim; }

void CvPipeline::validate() const {
  const int d = input_dim();
  const int f = features.out_dim(d);
  if (scaler && scaler->mean.size() != f)
    throw ShapeError("scaler width does not match feature width");
  if (tica) {
    if (tica->n_features() != f)
      throw ShapeError("tICA width does not match feature width");
    if (n_tics < 1 || n_tics > tica->n_components())
      throw ShapeError("n_tics out of range");
    if (encoder.input_width() != n_tics)
      throw ShapeError("encoder width does not match n_tics");
  } else if (encoder.input_width() != f) {
    throw ShapeError("encoder width does not match feature width");
  }
  if (!input_permutation.empty() &&
      static_cast<int>(input_permutation.size()) != d)
    throw ShapeError("input permutation width mismatch");
}

Vec CvPipeline::encoder_inputs(const Vec& x_raw) const {
  Vec x = x_raw;
  if (!input_permutation.empty()) {
    if (x_raw.size() != static_cast<Eigen::Index>(input_permutation.size()))
      throw ShapeError("input width does not match permutation");
    for (std::size_t i = 0; i < input_permutation.size(); ++i)
      x[i] = x_raw[input_permutation[i]];
  }
  Vec f = features.apply(x);
  if (scaler) f = scaler->apply(f);
  if (tica)
    return (f - tica->mean).transpose() * tica->components.leftCols(n_tics);
  return f;
}

double CvPipeline::value(const Vec& x) const {
  return encoder.encode_scalar(encoder_inputs(x));
}

Vec CvPipeline::values(const Mat& frames) const {
  Vec out(frames.rows());
  for (Eigen::Index r = 0; r < frames.rows(); ++r)
    out[r] = value(frames.row(r).transpose());
  return out;
}

Vec CvPipeline::gradient(const Vec& x_raw) const {
  Vec x = x_raw;
  if (!input_permutation.empty())
    for (std::size_t i = 0; i < input_permutation.size(); ++i)
      x[i] = x_raw[input_permutation[i]];

  Vec g_enc = encoder.encoder_input_gradient(encoder_inputs(x_raw));
  Vec g_feat;  // gradient w.r.t. scaled features
  if (tica)
    g_feat = tica->components.leftCols(n_tics) * g_enc;
  else
    g_feat = g_enc;
  if (scaler) g_feat = g_feat.cwiseQuotient(scaler->std);
  Vec g = features.jacobian(x).transpose() * g_feat;

  if (input_permutation.empty()) return g;
  Vec out = Vec::Zero(x_raw.size());
  for (std::size_t i = 0; i < input_permutation.size(); ++i)
    out[input_permutation[i]] += g[i];
  return out;
}

}  // namespace esw
