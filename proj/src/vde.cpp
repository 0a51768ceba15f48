#include "esw/vde.hpp"

#include "esw/tica.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace esw {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Swish: return "swish";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "swish") return Activation::Swish;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw ShapeError("unknown activation: " + s);
}

double activate(Activation a, double u) {
  switch (a) {
    case Activation::Swish: return u / (1.0 + std::exp(-u));
    case Activation::Tanh: return std::tanh(u);
    case Activation::Identity: return u;
  }
  return u;
}

double activate_deriv(Activation a, double u) {
  switch (a) {
    case Activation::Swish: {
      const double s = 1.0 / (1.0 + std::exp(-u));
      return s + u * s * (1.0 - s);
    }
    case Activation::Tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ShapeError("MlpSpec needs input and latent widths");
  for (int w : widths)
    if (w < 1) throw ShapeError("layer widths must be >= 1");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ShapeError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ShapeError("learning rate must be > 0");
  if (batch_size < 2) throw ShapeError("batch size must be >= 2");
}

namespace {

struct ForwardCache {
  std::vector<Mat> pre;   // pre-activations per layer
  std::vector<Mat> act;   // act[0] = input, act[l+1] = output of layer l
};

Mat forward_batch(const std::vector<DenseLayer>& layers, Activation f,
                  const Mat& X, ForwardCache* cache) {
  Mat a = X;
  if (cache) {
    cache->pre.clear();
    cache->act.clear();
    cache->act.push_back(a);
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Mat u = (a * layers[l].W.transpose()).rowwise() + layers[l].b.transpose();
    if (l + 1 < layers.size())
      a = u.unaryExpr([f](double v) { return activate(f, v); });
    else
      a = u;  // last layer affine
    if (cache) {
      cache->pre.push_back(std::move(u));
      cache->act.push_back(a);
    }
  }
  return a;
}

// returns dL/dinput; accumulates parameter grads when grads != nullptr
Mat backward_batch(const std::vector<DenseLayer>& layers, Activation f,
                   const ForwardCache& cache, const Mat& d_out,
                   std::vector<DenseLayer>* grads) {
  Mat delta = d_out;
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    if (l + 1 < static_cast<int>(layers.size())) {
      delta = delta.cwiseProduct(cache.pre[l].unaryExpr(
          [f](double v) { return activate_deriv(f, v); }));
    }
    if (grads) {
      (*grads)[l].W += delta.transpose() * cache.act[l];
      (*grads)[l].b += delta.colwise().sum().transpose();
    }
    delta = (delta * layers[l].W).eval();
  }
  return delta;
}

std::vector<DenseLayer> zero_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> g;
  g.reserve(layers.size());
  for (const auto& l : layers)
    g.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
  return g;
}

}  // namespace

Vec VdeModel::encode(const Vec& x) const {
  if (x.size() != input_width()) throw ShapeError("encode width mismatch");
  return forward_batch(encoder, activation, x.transpose(), nullptr)
      .row(0)
      .transpose();
}

Mat VdeModel::encode(const Mat& X) const {
  if (X.cols() != input_width()) throw ShapeError("encode width mismatch");
  return forward_batch(encoder, activation, X, nullptr);
}

double VdeModel::encode_scalar(const Vec& x) const {
  if (latent_width() != 1) throw ShapeError("latent width must be 1");
  return encode(x)[0];
}

Vec VdeModel::decode(const Vec& z) const {
  if (z.size() != latent_width()) throw ShapeError("decode width mismatch");
  return forward_batch(decoder, activation, z.transpose(), nullptr)
      .row(0)
      .transpose();
}

Vec VdeModel::encoder_input_gradient(const Vec& x) const {
  if (latent_width() != 1) throw ShapeError("latent width must be 1");
  if (x.size() != input_width()) throw ShapeError("encode width mismatch");
  ForwardCache cache;
  forward_batch(encoder, activation, x.transpose(), &cache);
  Mat d_out = Mat::Ones(1, 1);
  Mat d_in = backward_batch(encoder, activation, cache, d_out, nullptr);
  return d_in.row(0).transpose();
}

PairSet make_pairs(const std::vector<Mat>& trajs, long tau) {
  if (tau < 1) throw LagError("lag must be >= 1");
  Eigen::Index total = 0;
  Eigen::Index d = trajs.empty() ? 0 : trajs.front().cols();
  for (const auto& X : trajs) {
    if (X.rows() < tau + 1) throw LagError("lag >= trajectory length");
    total += X.rows() - tau;
  }
  PairSet p;
  p.head.resize(total, d);
  p.tail.resize(total, d);
  Eigen::Index at = 0;
  for (const auto& X : trajs) {
    const Eigen::Index n = X.rows() - tau;
    p.head.middleRows(at, n) = X.topRows(n);
    p.tail.middleRows(at, n) = X.bottomRows(n);
    at += n;
  }
  return p;
}

PairSet make_pairs(const Mat& X, long tau) {
  return make_pairs(std::vector<Mat>{X}, tau);
}

LossValue vde_loss(const VdeModel& m, const Mat& xt, const Mat& xlag,
                   const Mat& noise, std::vector<DenseLayer>* enc_grads,
                   std::vector<DenseLayer>* dec_grads) {
  const Eigen::Index B = xt.rows();
  if (B < 2) throw ShapeError("loss batch needs >= 2 pairs");
  if (xlag.rows() != B || noise.rows() != B)
    throw ShapeError("batch row mismatch");

  ForwardCache cache_t, cache_l, cache_d;
  const Mat zt = forward_batch(m.encoder, m.activation, xt, &cache_t);
  const Mat zl = forward_batch(m.encoder, m.activation, xlag, &cache_l);
  const Mat znoisy = zt + m.noise_scale * noise;
  const Mat xhat = forward_batch(m.decoder, m.activation, znoisy, &cache_d);

  const double denom = static_cast<double>(B * xhat.cols());
  LossValue out;
  out.recon = (xhat - xlag).squaredNorm() / denom;

  // Pearson autocorrelation between z_t and z_{t+tau}, averaged over latent dims
  const int K = static_cast<int>(zt.cols());
  Mat d_zt = Mat::Zero(B, K);
  Mat d_zl = Mat::Zero(B, K);
  double rho = 0.0;
  bool degenerate = false;
  for (int k = 0; k < K; ++k) {
    Vec u = zt.col(k).array() - zt.col(k).mean();
    Vec v = zl.col(k).array() - zl.col(k).mean();
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu <= 1e-300 || nv <= 1e-300) {
      degenerate = true;
      continue;
    }
    const double r = u.dot(v) / (nu * nv);
    rho += r;
    // both vectors below are zero-mean, so centering is already accounted for
    d_zt.col(k) = (v / (nu * nv) - r * u / (nu * nu)) / K;
    d_zl.col(k) = (u / (nu * nv) - r * v / (nv * nv)) / K;
  }
  rho /= K;
  out.autocorr = rho;
  out.degenerate = degenerate;
  out.total = out.recon - m.alpha * rho;

  if (enc_grads || dec_grads) {
    std::vector<DenseLayer> eg = zero_like(m.encoder);
    std::vector<DenseLayer> dg = zero_like(m.decoder);
    Mat d_xhat = 2.0 * (xhat - xlag) / denom;
    Mat d_znoisy =
        backward_batch(m.decoder, m.activation, cache_d, d_xhat, &dg);
    Mat g_zt = d_znoisy - m.alpha * d_zt;
    Mat g_zl = -m.alpha * d_zl;
    backward_batch(m.encoder, m.activation, cache_t, g_zt, &eg);
    backward_batch(m.encoder, m.activation, cache_l, g_zl, &eg);
    if (enc_grads) *enc_grads = std::move(eg);
    if (dec_grads) *dec_grads = std::move(dg);
  }
  return out;
}

VdeModel init_vde(const MlpSpec& spec, std::uint64_t seed, double noise_scale,
                  long tau, double alpha) {
  spec.validate();
  VdeModel m;
  m.activation = spec.activation;
  m.noise_scale = noise_scale;
  m.lag = tau;
  m.alpha = alpha;
  m.seed = seed;

  std::mt19937_64 rng(seed);
  auto glorot = [&rng](int out, int in) {
    const double bound = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer l;
    l.W.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) l.W(r, c) = dist(rng);
    l.b = Vec::Zero(out);
    return l;
  };

  const auto& w = spec.widths;
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    m.encoder.push_back(glorot(w[l + 1], w[l]));
  for (std::size_t l = w.size() - 1; l > 0; --l)
    m.decoder.push_back(glorot(w[l - 1], w[l]));
  return m;
}

namespace {

struct AdamState {
  std::vector<DenseLayer> m1, m2;
  long t = 0;
};

void adam_step(std::vector<DenseLayer>& params,
               const std::vector<DenseLayer>& grads, AdamState& st,
               const TrainConfig& cfg) {
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto upd = [&](Mat& p, const Mat& g, Mat& m1, Mat& m2) {
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      p -= cfg.lr * (m1 / c1)
               .cwiseQuotient(((m2 / c2).cwiseSqrt().array() + cfg.eps)
                                  .matrix());
    };
    upd(params[l].W, grads[l].W, st.m1[l].W, st.m2[l].W);
    Mat pb = params[l].b, gb = grads[l].b, m1b = st.m1[l].b, m2b = st.m2[l].b;
    upd(pb, gb, m1b, m2b);
    params[l].b = pb;
    st.m1[l].b = m1b;
    st.m2[l].b = m2b;
  }
}

}  // namespace

VdeModel train_vde(const std::vector<Mat>& trajs, long tau,
                   const MlpSpec& spec, const TrainConfig& cfg,
                   double noise_scale, double alpha) {
  cfg.validate();
  PairSet pairs = make_pairs(trajs, tau);
  VdeModel m = init_vde(spec, cfg.seed, noise_scale, tau, alpha);
  if (pairs.head.cols() != spec.input_width())
    throw ShapeError("training data width does not match encoder input");

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = pairs.head.rows();
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});

  AdamState enc_adam{zero_like(m.encoder), zero_like(m.encoder), 0};
  AdamState dec_adam{zero_like(m.decoder), zero_like(m.decoder), 0};

  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  Mat bx(bs, pairs.head.cols()), by(bs, pairs.head.cols());
  Mat noise(bs, m.latent_width());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    EpochStats stats;
    long n_seen = 0;
    for (Eigen::Index start = 0; start + 1 < n; start += bs) {
      const Eigen::Index count = std::min<Eigen::Index>(bs, n - start);
      if (count < 2) break;
      for (Eigen::Index i = 0; i < count; ++i) {
        bx.row(i) = pairs.head.row(idx[start + i]);
        by.row(i) = pairs.tail.row(idx[start + i]);
        for (Eigen::Index k = 0; k < noise.cols(); ++k)
          noise(i, k) = normal(rng);
      }
      std::vector<DenseLayer> eg, dg;
      LossValue lv = vde_loss(m, bx.topRows(count), by.topRows(count),
                              noise.topRows(count), &eg, &dg);
      if (!std::isfinite(lv.total) || std::abs(lv.total) > 1e100)
        throw DivergenceError("training diverged at epoch " +
                              std::to_string(epoch) + " (lr=" +
                              std::to_string(cfg.lr) + ")");
      adam_step(m.encoder, eg, enc_adam, cfg);
      adam_step(m.decoder, dg, dec_adam, cfg);
      stats.recon += lv.recon * count;
      stats.autocorr += lv.autocorr * count;
      stats.total += lv.total * count;
      n_seen += count;
    }
    stats.recon /= n_seen;
    stats.autocorr /= n_seen;
    stats.total /= n_seen;
    m.report.push_back(stats);
  }
  return m;
}

VdeModel train_vde(const Mat& X, long tau, const MlpSpec& spec,
                   const TrainConfig& cfg, double noise_scale, double alpha) {
  return train_vde(std::vector<Mat>{X}, tau, spec, cfg, noise_scale, alpha);
}

}  // namespace esw
