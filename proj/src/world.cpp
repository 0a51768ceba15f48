#include "esw/world.hpp"

#include <cmath>
#include <random>

namespace esw {

namespace {

// standard Mueller-Brown constants
constexpr double mb_A[4] = {-200.0, -100.0, -170.0, 15.0};
constexpr double mb_a[4] = {-1.0, -1.0, -6.5, 0.7};
constexpr double mb_b[4] = {0.0, 0.0, 11.0, 0.6};
constexpr double mb_c[4] = {-10.0, -10.0, -6.5, 0.7};
constexpr double mb_x0[4] = {1.0, 0.0, -0.5, -1.0};
constexpr double mb_y0[4] = {0.0, 0.5, 1.5, 1.0};

constexpr double triple_centers[3] = {-2.0, 0.0, 2.0};
constexpr double triple_width2 = 0.5 * 0.5;

void check_finite(const Vec& x) {
  if (!x.allFinite()) throw DomainError("non-finite coordinates");
}

}  // namespace

std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::DoubleWell1D: return "double_well";
    case PotentialKind::TiltedDoubleWell1D: return "tilted_double_well";
    case PotentialKind::TripleWell1D: return "triple_well";
    case PotentialKind::MuellerBrown2D: return "mueller_brown";
    case PotentialKind::Harmonic: return "harmonic";
  }
  return "?";
}

PotentialKind potential_kind_from_string(const std::string& s) {
  if (s == "double_well") return PotentialKind::DoubleWell1D;
  if (s == "tilted_double_well") return PotentialKind::TiltedDoubleWell1D;
  if (s == "triple_well") return PotentialKind::TripleWell1D;
  if (s == "mueller_brown") return PotentialKind::MuellerBrown2D;
  if (s == "harmonic") return PotentialKind::Harmonic;
  throw DomainError("unknown potential kind: " + s);
}

void PotentialSpec::domain_box(Vec& lo, Vec& hi) const {
  if (kind == PotentialKind::MuellerBrown2D) {
    lo = Vec(2);
    hi = Vec(2);
    lo << -2.5, -1.0;
    hi << 1.5, 3.0;
  } else {
    lo = Vec::Constant(1, -4.0);
    hi = Vec::Constant(1, 4.0);
  }
}

Vec PotentialSpec::basin_center(int index) const {
  switch (kind) {
    case PotentialKind::DoubleWell1D:
    case PotentialKind::TiltedDoubleWell1D:
      return Vec::Constant(1, index == 0 ? -1.0 : 1.0);
    case PotentialKind::TripleWell1D:
      if (index < 0 || index > 2) throw DomainError("triple well basin index");
      return Vec::Constant(1, triple_centers[index]);
    case PotentialKind::Harmonic:
      return center.size() ? center : Vec::Zero(1);
    case PotentialKind::MuellerBrown2D: {
      // approximate minima of the standard surface
      Vec m(2);
      if (index == 0)
        m << -0.558, 1.442;
      else if (index == 1)
        m << 0.623, 0.028;
      else
        m << -0.050, 0.467;
      return m;
    }
  }
  throw DomainError("bad basin index");
}

double PotentialSpec::energy(const Vec& x) const {
  check_finite(x);
  double u = 0.0;
  switch (kind) {
    case PotentialKind::DoubleWell1D: {
      const double t = x[0] * x[0] - 1.0;
      u = a * t * t;
      break;
    }
    case PotentialKind::TiltedDoubleWell1D: {
      const double t = x[0] * x[0] - 1.0;
      u = a * t * t + c * x[0];
      break;
    }
    case PotentialKind::TripleWell1D: {
      const double d[3] = {d1, d2, d3};
      for (int i = 0; i < 3; ++i) {
        const double dx = x[0] - triple_centers[i];
        u -= d[i] * std::exp(-dx * dx / (2.0 * triple_width2));
      }
      u += 0.05 * std::pow(x[0], 4);
      break;
    }
    case PotentialKind::MuellerBrown2D: {
      for (int i = 0; i < 4; ++i) {
        const double dx = x[0] - mb_x0[i];
        const double dy = x[1] - mb_y0[i];
        u += mb_A[i] * std::exp(mb_a[i] * dx * dx + mb_b[i] * dx * dy +
                                mb_c[i] * dy * dy);
      }
      break;
    }
    case PotentialKind::Harmonic: {
      Vec c0 = center.size() ? center : Vec::Zero(x.size());
      u = 0.5 * k * (x - c0).squaredNorm();
      break;
    }
  }
  if (perturbation && perturbation->delta != 0.0) {
    const Vec bc = basin_center(perturbation->basin);
    const double w2 = perturbation->width * perturbation->width;
    u += perturbation->delta * std::exp(-(x - bc).squaredNorm() / (2.0 * w2));
  }
  return u;
}

Vec PotentialSpec::gradient(const Vec& x) const {
  check_finite(x);
  Vec g = Vec::Zero(x.size());
  switch (kind) {
    case PotentialKind::DoubleWell1D:
      g[0] = 4.0 * a * x[0] * (x[0] * x[0] - 1.0);
      break;
    case PotentialKind::TiltedDoubleWell1D:
      g[0] = 4.0 * a * x[0] * (x[0] * x[0] - 1.0) + c;
      break;
    case PotentialKind::TripleWell1D: {
      const double d[3] = {d1, d2, d3};
      for (int i = 0; i < 3; ++i) {
        const double dx = x[0] - triple_centers[i];
        g[0] += d[i] * (dx / triple_width2) *
                std::exp(-dx * dx / (2.0 * triple_width2));
      }
      g[0] += 0.2 * std::pow(x[0], 3);
      break;
    }
    case PotentialKind::MuellerBrown2D: {
      for (int i = 0; i < 4; ++i) {
        const double dx = x[0] - mb_x0[i];
        const double dy = x[1] - mb_y0[i];
        const double e = mb_A[i] * std::exp(mb_a[i] * dx * dx +
                                            mb_b[i] * dx * dy +
                                            mb_c[i] * dy * dy);
        g[0] += e * (2.0 * mb_a[i] * dx + mb_b[i] * dy);
        g[1] += e * (mb_b[i] * dx + 2.0 * mb_c[i] * dy);
      }
      break;
    }
    case PotentialKind::Harmonic: {
      Vec c0 = center.size() ? center : Vec::Zero(x.size());
      g = k * (x - c0);
      break;
    }
  }
  if (perturbation && perturbation->delta != 0.0) {
    const Vec bc = basin_center(perturbation->basin);
    const double w2 = perturbation->width * perturbation->width;
    const double e =
        perturbation->delta * std::exp(-(x - bc).squaredNorm() / (2.0 * w2));
    g += e * (-(x - bc) / w2);
  }
  return g;
}

void Thermostat::validate() const {
  if (kT <= 0.0 || D < 0.0 || dt <= 0.0)
    throw DomainError("thermostat requires kT > 0, D >= 0, dt > 0");
}

Trajectory simulate(const PotentialSpec& p, const Thermostat& th, const Vec& x0,
                    std::int64_t n_steps, std::int64_t save_stride,
                    std::uint64_t seed, const BiasHook* bias) {
  th.validate();
  if (n_steps < 1 || save_stride < 1)
    throw DomainError("n_steps and save_stride must be >= 1");
  if (x0.size() != p.dim()) throw DomainError("x0 dimension mismatch");
  check_finite(x0);

  Vec lo, hi;
  p.domain_box(lo, hi);
  const double box = (hi - lo).maxCoeff();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double drift = th.D / th.kT * th.dt;
  const double noise = std::sqrt(2.0 * th.D * th.dt);

  Trajectory traj;
  traj.dt_record = th.dt * static_cast<double>(save_stride);
  traj.seed = seed;
  traj.potential = p;
  const std::int64_t n_saved = n_steps / save_stride;
  traj.frames.resize(n_saved, x0.size());

  Vec x = x0;
  Vec bias_force = Vec::Zero(x.size());
  std::int64_t saved = 0;
  for (std::int64_t step = 0; step < n_steps; ++step) {
    Vec g = p.gradient(x);
    if (bias) {
      bias_force.setZero();
      (*bias)(step, x, bias_force);
      g -= bias_force;  // hook returns the force, i.e. -dV/dx
    }
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x[i] += -drift * g[i] + noise * normal(rng);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || x[i] < lo[i] - 10.0 * box ||
          x[i] > hi[i] + 10.0 * box)
        throw BlowUpError("trajectory escaped domain box (dt too large?)");
    }
    if ((step + 1) % save_stride == 0) traj.frames.row(saved++) = x;
  }
  return traj;
}

}  // namespace esw
