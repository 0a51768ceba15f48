#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace esw {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BlowUpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PotentialKind {
  DoubleWell1D,
  TiltedDoubleWell1D,
  TripleWell1D,
  MuellerBrown2D,
  Harmonic,
};

std::string to_string(PotentialKind k);
PotentialKind potential_kind_from_string(const std::string& s);

// Gaussian bump added to the base potential: delta * exp(-(x-c)^2/(2 w^2)),
// centered on a named basin minimum. delta < 0 deepens the basin.
struct Perturbation {
  int basin = 0;
  double delta = 0.0;      // kT
  double width = 0.5;      // fixed bump width
};

struct PotentialSpec {
  PotentialKind kind = PotentialKind::DoubleWell1D;
  double a = 5.0;          // barrier scale (double wells)
  double c = 0.0;          // linear tilt (tilted double well)
  double d1 = 4.0, d2 = 4.0, d3 = 4.0;  // triple-well depths
  double k = 1.0;          // harmonic stiffness
  Vec center;              // harmonic center (defaults to origin)
  std::optional<Perturbation> perturbation;

  int dim() const { return kind == PotentialKind::MuellerBrown2D ? 2 : 1; }
  // [lo, hi] per coordinate
  void domain_box(Vec& lo, Vec& hi) const;
  // location of the minimum of basin `index` (for perturbation bumps)
  Vec basin_center(int index) const;

  double energy(const Vec& x) const;
  Vec gradient(const Vec& x) const;
};

struct Thermostat {
  double kT = 1.0;
  double D = 1.0;
  double dt = 1e-3;
  void validate() const;
};

struct Trajectory {
  Mat frames;              // n_frames x dim
  double dt_record = 0.0;  // time between saved frames
  std::uint64_t seed = 0;
  PotentialSpec potential;

  Eigen::Index n_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

// Bias callback used by the biased integrator: fills force (same dim as x)
// with -dV/ds * dz/dx and is also notified of the step index so hill
// deposition can happen on schedule. Returns the instantaneous CV value.
using BiasHook =
    std::function<double(std::int64_t step, const Vec& x, Vec& force)>;

Trajectory simulate(const PotentialSpec& p, const Thermostat& th, const Vec& x0,
                    std::int64_t n_steps, std::int64_t save_stride,
                    std::uint64_t seed, const BiasHook* bias = nullptr);

}  // namespace esw
