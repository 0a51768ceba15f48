#pragma once

#include "esw/metad.hpp"

#include <string>
#include <vector>

namespace esw {

struct EstimatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WeightedSamples {
  Mat frames;          // post-discard raw coordinates
  Vec s;               // CV values aligned with frames
  Vec weights;         // normalized, sum to 1
  std::string estimator;
};

WeightedSamples last_bias_weights(const BiasedTrajectory& traj,
                                  const BiasState& final_bias, double kT,
                                  long discard_frames = 0);
// pooled over walkers, each reweighted with its own final bias
WeightedSamples last_bias_weights(const MetadResult& run, double kT,
                                  long discard_frames = 0);

// time-independent estimator: w ~ exp((V(s,t) - c(t))/kT) with c(t) updated
// at each deposit epoch from the grid-cached bias
WeightedSamples tiwary_weights(const BiasedTrajectory& traj,
                               const std::vector<Hill>& hills,
                               const MetadConfig& cfg, double kT,
                               long discard_frames = 0);
// c(t) trace for diagnostics/tests: (step, c) per deposit epoch
std::vector<std::pair<long, double>> tiwary_offset_trace(
    const std::vector<Hill>& hills, const MetadConfig& cfg, double kT);

struct MbarInput {
  Mat u_kn;                  // K x N reduced energies
  std::vector<long> counts;  // N_k, sum = N
  Vec u_target;              // reduced energy of the target (unbiased) state
};

struct MbarResult {
  Vec f;                // free energies, f[0] == 0
  Vec target_weights;   // normalized per-sample weights in the target state
  double residual = 0.0;
  int iterations = 0;
};

MbarResult mbar_solve(const MbarInput& in, double tol = 1e-10,
                      int max_iter = 100000, bool aitken = true);

// one state per run (its final bias) plus samples pooled across runs
MbarInput metad_to_mbar(const std::vector<const BiasedTrajectory*>& runs,
                        const std::vector<const BiasState*>& biases,
                        const PotentialSpec& p, double kT,
                        long discard_frames = 0);

struct FesEstimate {
  Vec edges;       // n_bins + 1
  Vec free_energy; // kT units, min 0; NaN for empty bins
  std::string estimator;
};

FesEstimate fes_project(const WeightedSamples& w, const Vec& observable,
                        int n_bins, double lo, double hi);
FesEstimate fes_project(const Vec& weights, const Vec& observable, int n_bins,
                        double lo, double hi, const std::string& tag);

struct KmeansResult {
  std::vector<int> labels;
  Mat centers;  // k x dim
  double inertia = 0.0;
};

KmeansResult kmeans_cluster(const Mat& Y, int k, std::uint64_t seed,
                            int max_iter = 300);

struct StatePopulations {
  Vec populations;   // sum to 1
  Vec delta_g;       // -kT ln(p_i / p_ref), ref = most populated state
  int reference_state = 0;
};

StatePopulations state_populations(const std::vector<int>& labels,
                                   const Vec& weights, int k, double kT,
                                   int reference_state = -1);

// free-energy difference between two halves of a 1-D observable split at
// `divider`: F(right) - F(left) in kT
double basin_delta_f(const Vec& weights, const Vec& observable, double divider,
                     double kT);

}  // namespace esw
