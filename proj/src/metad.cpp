#include "esw/metad.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace esw {

void MetadConfig::validate() const {
  if (!(gamma > 1.0)) throw ConfigError("bias factor gamma must be > 1");
  if (!(sigma > 0.0)) throw ConfigError("hill width sigma must be > 0");
  if (h0 < 0.0) throw ConfigError("hill height must be >= 0");
  if (drop_period < 1) throw ConfigError("drop period must be >= 1");
  if (n_bins < 2) throw ConfigError("grid needs at least 2 bins");
  if (!(grid_hi > grid_lo)) throw ConfigError("empty grid");
  if (a() < grid_lo || b() > grid_hi || !(b() > a()))
    throw ConfigError("interval must lie inside the grid");
  if (n_walkers < 1) throw ConfigError("n_walkers must be >= 1");
  if (read_stride < 1) throw ConfigError("read stride must be >= 1");
}

MetadConfig MetadConfig::from_training_range(double cv_min, double cv_max) {
  MetadConfig cfg;
  const double span = cv_max - cv_min;
  cfg.grid_lo = cv_min - 0.3 * span;
  cfg.grid_hi = cv_max + 0.3 * span;
  cfg.interval_lo = cv_min;
  cfg.interval_hi = cv_max;
  return cfg;
}

BiasState::BiasState(const MetadConfig& cfg, double kT) : cfg_(cfg), kT_(kT) {
  cfg_.validate();
  if (!(kT > 0.0)) throw ConfigError("kT must be > 0");
  grid_ = Vec::Zero(cfg_.n_bins + 1);
  dgrid_ = Vec::Zero(cfg_.n_bins + 1);
}

double BiasState::node_position(int i) const {
  const double h = (cfg_.grid_hi - cfg_.grid_lo) / cfg_.n_bins;
  return cfg_.grid_lo + h * i;
}

// cubic Hermite cell interpolation of node values and analytic node slopes;
// exact at nodes, smooth slope across cells
double BiasState::energy(double s) const {
  double se = std::clamp(s, cfg_.a(), cfg_.b());
  se = std::clamp(se, cfg_.grid_lo, cfg_.grid_hi);
  const double h = (cfg_.grid_hi - cfg_.grid_lo) / cfg_.n_bins;
  int i = static_cast<int>((se - cfg_.grid_lo) / h);
  i = std::clamp(i, 0, cfg_.n_bins - 1);
  const double t = (se - node_position(i)) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2.0 * t3 - 3.0 * t2 + 1.0) * grid_[i] +
         (t3 - 2.0 * t2 + t) * h * dgrid_[i] +
         (-2.0 * t3 + 3.0 * t2) * grid_[i + 1] +
         (t3 - t2) * h * dgrid_[i + 1];
}

double BiasState::dVds(double s) const {
  if (s < cfg_.a() || s > cfg_.b()) return 0.0;  // interval semantics
  if (s < cfg_.grid_lo || s > cfg_.grid_hi) return 0.0;
  const double h = (cfg_.grid_hi - cfg_.grid_lo) / cfg_.n_bins;
  int i = static_cast<int>((s - cfg_.grid_lo) / h);
  i = std::clamp(i, 0, cfg_.n_bins - 1);
  const double t = (s - node_position(i)) / h;
  const double t2 = t * t;
  return (6.0 * t2 - 6.0 * t) * (grid_[i] - grid_[i + 1]) / h +
         (3.0 * t2 - 4.0 * t + 1.0) * dgrid_[i] +
         (3.0 * t2 - 2.0 * t) * dgrid_[i + 1];
}

void BiasState::add_hill(const Hill& hill) {
  hills_.push_back(hill);
  total_ += hill.height;
  const double h = (cfg_.grid_hi - cfg_.grid_lo) / cfg_.n_bins;
  const double cut = 6.0 * hill.sigma;
  int i0 = static_cast<int>(std::ceil((hill.center - cut - cfg_.grid_lo) / h));
  int i1 = static_cast<int>(std::floor((hill.center + cut - cfg_.grid_lo) / h));
  i0 = std::max(i0, 0);
  i1 = std::min(i1, cfg_.n_bins);
  const double inv2s2 = 1.0 / (2.0 * hill.sigma * hill.sigma);
  for (int i = i0; i <= i1; ++i) {
    const double d = node_position(i) - hill.center;
    const double g = hill.height * std::exp(-d * d * inv2s2);
    grid_[i] += g;
    dgrid_[i] += -g * d / (hill.sigma * hill.sigma);
  }
}

std::optional<Hill> BiasState::deposit(double s, long t, int walker) {
  if (s < cfg_.grid_lo || s > cfg_.grid_hi) {
    ++skipped_;
    return std::nullopt;
  }
  if (s < cfg_.a() || s > cfg_.b()) return std::nullopt;
  const double height =
      cfg_.h0 * std::exp(-energy(s) / ((cfg_.gamma - 1.0) * kT_));
  Hill hill{s, height, cfg_.sigma, t, walker};
  add_hill(hill);
  return hill;
}

double BiasState::direct_sum_at_node(int i) const {
  const double x = node_position(i);
  double v = 0.0;
  for (const auto& hill : hills_) {
    const double d = x - hill.center;
    if (std::abs(d) > 6.0 * hill.sigma) continue;
    v += hill.height * std::exp(-d * d / (2.0 * hill.sigma * hill.sigma));
  }
  return v;
}

Vec bias_force_on_coords(const CvPipeline& cv, const BiasState& bias,
                         const Vec& x) {
  if (bias.hills().empty()) return Vec::Zero(x.size());
  const double s = cv.value(x);
  const double d = bias.dVds(s);
  if (d == 0.0) return Vec::Zero(x.size());
  return (-d) * cv.gradient(x);
}

namespace {

struct Walker {
  Vec x;
  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  BiasState bias;
  std::vector<Hill> own;
  BiasedTrajectory out;
  Eigen::Index saved = 0;
};

bool hill_order(const Hill& a, const Hill& b) {
  return a.t != b.t ? a.t < b.t : a.walker < b.walker;
}

}  // namespace

MetadResult run_walkers(const PotentialSpec& p, const Thermostat& th,
                        const CvPipeline& cv, const MetadConfig& cfg,
                        const Vec& x0, std::int64_t n_steps,
                        std::int64_t save_stride, std::uint64_t seed) {
  th.validate();
  cfg.validate();
  cv.validate();
  if (n_steps < 1 || save_stride < 1)
    throw ConfigError("n_steps and save_stride must be >= 1");

  Vec lo, hi;
  p.domain_box(lo, hi);
  const double box = (hi - lo).maxCoeff();
  const double drift = th.D / th.kT * th.dt;
  const double noise = std::sqrt(2.0 * th.D * th.dt);
  const std::int64_t n_saved = n_steps / save_stride;

  const int W = cfg.n_walkers;
  std::vector<Walker> walkers;
  walkers.reserve(W);
  for (int w = 0; w < W; ++w) {
    Walker wk;
    wk.x = x0;
    wk.rng.seed(seed + static_cast<std::uint64_t>(w));
    wk.bias = BiasState(cfg, th.kT);
    wk.out.frames.resize(n_saved, x0.size());
    wk.out.s.resize(n_saved);
    wk.out.v_bias.resize(n_saved);
    wk.out.frame_steps.resize(n_saved);
    wk.out.dt_record = th.dt * static_cast<double>(save_stride);
    wk.out.seed = seed + static_cast<std::uint64_t>(w);
    wk.out.walker = w;
    walkers.push_back(std::move(wk));
  }
  // how many hills of walker v have been merged into walker w's bias
  std::vector<std::vector<std::size_t>> synced(W, std::vector<std::size_t>(W, 0));

  auto advance = [&](int w, std::int64_t begin, std::int64_t end) {
    Walker& wk = walkers[w];
    for (std::int64_t step = begin; step < end; ++step) {
      if (step > 0 && step % cfg.drop_period == 0) {
        const double s = cv.value(wk.x);
        if (auto hill = wk.bias.deposit(s, step, w)) wk.own.push_back(*hill);
      }
      Vec g = p.gradient(wk.x);
      g -= bias_force_on_coords(cv, wk.bias, wk.x);
      for (Eigen::Index i = 0; i < wk.x.size(); ++i)
        wk.x[i] += -drift * g[i] + noise * wk.normal(wk.rng);
      for (Eigen::Index i = 0; i < wk.x.size(); ++i) {
        if (!std::isfinite(wk.x[i]) || wk.x[i] < lo[i] - 10.0 * box ||
            wk.x[i] > hi[i] + 10.0 * box)
          throw BlowUpError("metadynamics walker escaped domain box");
      }
      if ((step + 1) % save_stride == 0 && wk.saved < n_saved) {
        wk.out.frames.row(wk.saved) = wk.x;
        const double s = cv.value(wk.x);
        wk.out.s[wk.saved] = s;
        wk.out.v_bias[wk.saved] = wk.bias.energy(s);
        wk.out.frame_steps[wk.saved] = step + 1;
        ++wk.saved;
      }
    }
  };

  auto sync = [&]() {
    for (int w = 0; w < W; ++w) {
      std::vector<Hill> incoming;
      for (int v = 0; v < W; ++v) {
        if (v == w) continue;
        for (std::size_t i = synced[w][v]; i < walkers[v].own.size(); ++i)
          incoming.push_back(walkers[v].own[i]);
        synced[w][v] = walkers[v].own.size();
      }
      std::sort(incoming.begin(), incoming.end(), hill_order);
      for (const auto& hill : incoming) walkers[w].bias.add_hill(hill);
    }
  };

  std::int64_t at = 0;
  while (at < n_steps) {
    const std::int64_t end = std::min<std::int64_t>(at + cfg.read_stride, n_steps);
    for (int w = 0; w < W; ++w) advance(w, at, end);
    if (W > 1) sync();
    at = end;
  }

  MetadResult res;
  for (auto& wk : walkers) {
    res.walkers.push_back(std::move(wk.out));
    res.final_bias.push_back(std::move(wk.bias));
  }
  for (const auto& wk : walkers)
    res.hills.insert(res.hills.end(), wk.own.begin(), wk.own.end());
  std::sort(res.hills.begin(), res.hills.end(), hill_order);
  return res;
}

MetadResult run_metad(const PotentialSpec& p, const Thermostat& th,
                      const CvPipeline& cv, const MetadConfig& cfg,
                      const Vec& x0, std::int64_t n_steps,
                      std::int64_t save_stride, std::uint64_t seed) {
  MetadConfig single = cfg;
  single.n_walkers = 1;
  return run_walkers(p, th, cv, single, x0, n_steps, save_stride, seed);
}

}  // namespace esw
