#pragma once

#include "esw/pipeline.hpp"
#include "esw/world.hpp"

#include <optional>

namespace esw {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MetadConfig {
  double h0 = 1.0;          // initial hill height (kT)
  double sigma = 0.1;       // hill width (CV units)
  double gamma = 6.0;       // bias factor
  long drop_period = 500;   // steps between depositions
  double grid_lo = -2.0;
  double grid_hi = 2.0;
  int n_bins = 512;
  std::optional<double> interval_lo;  // defaults to grid edges
  std::optional<double> interval_hi;
  int n_walkers = 1;
  long read_stride = 10000;           // integrator steps between hill syncs
  long equilibration_discard = 0;     // frames dropped before reweighting

  double a() const { return interval_lo.value_or(grid_lo); }
  double b() const { return interval_hi.value_or(grid_hi); }
  void validate() const;
  // grid from the training-data CV range extended 30% each side
  static MetadConfig from_training_range(double cv_min, double cv_max);
};

struct Hill {
  double center = 0.0;
  double height = 0.0;
  double sigma = 0.0;
  long t = 0;        // deposit step
  int walker = 0;
};

class BiasState {
 public:
  BiasState() = default;
  BiasState(const MetadConfig& cfg, double kT);

  double energy(double s) const;
  double dVds(double s) const;
  // well-tempered deposit; returns the hill, or nullopt when s lies outside
  // the interval (no hill) or outside the grid (skip counter)
  std::optional<Hill> deposit(double s, long t, int walker);
  void add_hill(const Hill& h);  // replay path (multi-walker merge)

  const std::vector<Hill>& hills() const { return hills_; }
  const Vec& grid_values() const { return grid_; }
  double node_position(int i) const;
  // direct summation over hills at a grid node, same 6-sigma truncation as
  // the incremental cache
  double direct_sum_at_node(int i) const;
  long skipped_deposits() const { return skipped_; }
  double total_deposited() const { return total_; }
  const MetadConfig& config() const { return cfg_; }
  double kT() const { return kT_; }

 private:
  MetadConfig cfg_;
  double kT_ = 1.0;
  std::vector<Hill> hills_;
  Vec grid_;
  Vec dgrid_;  // analytic bias slope at the grid nodes
  long skipped_ = 0;
  double total_ = 0.0;
};

struct BiasedTrajectory {
  Mat frames;
  Vec s;       // CV value per frame
  Vec v_bias;  // instantaneous bias V(s(t), t) per frame
  std::vector<long> frame_steps;
  double dt_record = 0.0;
  std::uint64_t seed = 0;
  int walker = 0;
};

struct MetadResult {
  std::vector<BiasedTrajectory> walkers;
  std::vector<Hill> hills;           // merged, sorted by (t, walker)
  std::vector<BiasState> final_bias; // per walker (all hills merged at end)
};

// bias force on raw coordinates: -dV/ds * dz/dx
Vec bias_force_on_coords(const CvPipeline& cv, const BiasState& bias,
                         const Vec& x);

MetadResult run_metad(const PotentialSpec& p, const Thermostat& th,
                      const CvPipeline& cv, const MetadConfig& cfg,
                      const Vec& x0, std::int64_t n_steps,
                      std::int64_t save_stride, std::uint64_t seed);

// multi-walker variant with deterministic (t, walker) hill merge every
// read_stride steps; n_walkers = 1 is bit-identical to run_metad
MetadResult run_walkers(const PotentialSpec& p, const Thermostat& th,
                        const CvPipeline& cv, const MetadConfig& cfg,
                        const Vec& x0, std::int64_t n_steps,
                        std::int64_t save_stride, std::uint64_t seed);

}  // namespace esw
