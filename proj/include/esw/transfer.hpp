#pragma once

#include "esw/reweight.hpp"

#include <string>
#include <vector>

namespace esw {

struct MapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SystemMap {
  std::string source_id;
  std::string target_id;
  // slot i of the pipeline reads target coordinate index_map[i];
  // empty = identity
  std::vector<int> index_map;
};

// permutes target coordinates per the map, then applies the unchanged
// scaler/tICA/encoder stages
CvPipeline transfer_cv(const CvPipeline& p, const SystemMap& m);

struct TransferConfig {
  FeatureSpec features = FeatureSpec::identity();
  long tau = 50;
  MlpSpec mlp;
  TrainConfig train;
  double noise_scale = 0.1;
  double alpha = 1.0;
  Thermostat thermostat;
  MetadConfig metad;
  std::int64_t unbiased_steps = 2'000'000;
  std::int64_t metad_steps = 2'000'000;
  std::int64_t save_stride = 10;
  int n_states = 2;
  double target_basin_observable = 1.0;  // observable value of the "folded" analog
  std::uint64_t seed = 1;
};

struct SystemReport {
  FesEstimate fes;
  Vec populations;
  Vec delta_g;
  int folded_walkers = 0;  // walkers that reached the target basin
};

struct TransferReport {
  SystemReport source;
  SystemReport target;
  Vec delta_delta_g;       // per matched state, target - source
  Mat state_centers;       // shared k-means centers on the pooled observable
  double flatness = 0.0;   // max dev of gamma/(gamma-1) V + F_est over interval
  CvPipeline pipeline;     // CV trained on the source system
};

TransferReport run_transfer_experiment(const PotentialSpec& source,
                                       const PotentialSpec& target,
                                       const Vec& x0,
                                       const TransferConfig& cfg);

}  // namespace esw
