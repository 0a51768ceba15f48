#pragma once

#include "esw/world.hpp"

#include <vector>

namespace esw {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { Swish, Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

double activate(Activation a, double u);
double activate_deriv(Activation a, double u);

struct MlpSpec {
  std::vector<int> widths;  // input ... latent, e.g. {4,16,16,1}
  Activation activation = Activation::Swish;

  void validate() const;
  int input_width() const { return widths.front(); }
  int latent_width() const { return widths.back(); }
};

struct DenseLayer {
  Mat W;  // out x in
  Vec b;
};

struct EpochStats {
  double recon = 0.0;
  double autocorr = 0.0;
  double total = 0.0;
};

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-4;
  int batch_size = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct VdeModel {
  std::vector<DenseLayer> encoder;  // hidden layers activated, last affine
  std::vector<DenseLayer> decoder;  // mirror; consumes the (noisy) latent
  Activation activation = Activation::Swish;
  double noise_scale = 0.1;  // latent-space std used during training
  long lag = 1;
  double alpha = 1.0;        // autocorrelation loss weight
  std::uint64_t seed = 0;
  std::vector<EpochStats> report;

  int input_width() const { return static_cast<int>(encoder.front().W.cols()); }
  int latent_width() const { return static_cast<int>(encoder.back().W.rows()); }

  // deterministic forward pass, no noise
  Vec encode(const Vec& x) const;
  Mat encode(const Mat& X) const;  // rowwise
  double encode_scalar(const Vec& x) const;  // latent width 1
  Vec decode(const Vec& z) const;

  // exact reverse-mode d z0/dx of the deterministic encode (latent width 1)
  Vec encoder_input_gradient(const Vec& x) const;
};

struct PairSet {
  Mat head;  // x_t, rows
  Mat tail;  // x_{t+tau}
};

PairSet make_pairs(const std::vector<Mat>& trajs, long tau);
PairSet make_pairs(const Mat& X, long tau);

struct LossValue {
  double total = 0.0;
  double recon = 0.0;
  double autocorr = 0.0;
  bool degenerate = false;  // zero-variance latent over the batch
};

// Loss with externally supplied latent noise (rows aligned with the batch);
// grads, when non-null, receive dLoss/dparam for every layer.
LossValue vde_loss(const VdeModel& m, const Mat& xt, const Mat& xlag,
                   const Mat& noise,
                   std::vector<DenseLayer>* enc_grads = nullptr,
                   std::vector<DenseLayer>* dec_grads = nullptr);

VdeModel init_vde(const MlpSpec& spec, std::uint64_t seed, double noise_scale,
                  long tau, double alpha);

VdeModel train_vde(const std::vector<Mat>& trajs, long tau,
                   const MlpSpec& spec, const TrainConfig& cfg,
                   double noise_scale, double alpha);
VdeModel train_vde(const Mat& X, long tau, const MlpSpec& spec,
                   const TrainConfig& cfg, double noise_scale, double alpha);

}  // namespace esw
