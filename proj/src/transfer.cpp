#include "esw/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace esw {

CvPipeline transfer_cv(const CvPipeline& p, const SystemMap& m) {
  const int d = p.input_dim();
  if (m.index_map.empty()) return p;  // identity map
  if (static_cast<int>(m.index_map.size()) != d)
    throw MapError("map must cover all pipeline inputs");
  std::set<int> seen;
  for (int idx : m.index_map) {
    if (idx < 0 || idx >= d) throw MapError("map index out of range");
    if (!seen.insert(idx).second) throw MapError("map must be injective");
  }
  CvPipeline out = p;
  out.input_permutation.resize(d);
  for (int i = 0; i < d; ++i) {
    const int src_slot = p.input_permutation.empty() ? i
                                                     : p.input_permutation[i];
    out.input_permutation[i] = m.index_map[src_slot];
  }
  return out;
}

namespace {

SystemReport make_system_report(const MetadResult& run,
                                const WeightedSamples& ws, const Mat& centers,
                                double kT, int ref_state, double fes_lo,
                                double fes_hi, double folded_obs) {
  SystemReport rep;
  const Vec obs = ws.frames.col(0);
  rep.fes = fes_project(ws, obs, 60, fes_lo, fes_hi);

  const int k = static_cast<int>(centers.rows());
  std::vector<int> labels(obs.size());
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    int best = 0;
    double bestd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = std::abs(obs[i] - centers(c, 0));
      if (d < bestd) {
        bestd = d;
        best = c;
      }
    }
    labels[i] = best;
  }
  auto sp = state_populations(labels, ws.weights, k, kT, ref_state);
  rep.populations = sp.populations;
  rep.delta_g = sp.delta_g;

  for (const auto& w : run.walkers) {
    const Vec wobs = w.frames.col(0);
    for (Eigen::Index i = 0; i < wobs.size(); ++i) {
      if (std::abs(wobs[i] - folded_obs) < 0.3) {
        ++rep.folded_walkers;
        break;
      }
    }
  }
  return rep;
}

}  // namespace

TransferReport run_transfer_experiment(const PotentialSpec& source,
                                       const PotentialSpec& target,
                                       const Vec& x0,
                                       const TransferConfig& cfg) {
  if (source.dim() != target.dim())
    throw MapError("source and target must share dimensionality");
  const double kT = cfg.thermostat.kT;

  // CV trained on source unbiased data only
  Trajectory train_traj = simulate(source, cfg.thermostat, x0,
                                   cfg.unbiased_steps, cfg.save_stride,
                                   cfg.seed);
  Mat feats = cfg.features.apply(train_traj.frames);
  Scaler scaler = fit_scaler(feats);
  Mat scaled = scaler.apply(feats);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  VdeModel vde = train_vde(scaled, cfg.tau, cfg.mlp, tc, cfg.noise_scale,
                           cfg.alpha);

  CvPipeline pipeline;
  pipeline.raw_dim = source.dim();
  pipeline.features = cfg.features;
  pipeline.scaler = scaler;
  pipeline.encoder = vde;
  pipeline.validate();

  // metad grid/interval from the training-data CV range (+30% margin)
  Vec cv_train = pipeline.values(train_traj.frames);
  MetadConfig mc = cfg.metad;
  MetadConfig auto_grid =
      MetadConfig::from_training_range(cv_train.minCoeff(), cv_train.maxCoeff());
  mc.grid_lo = auto_grid.grid_lo;
  mc.grid_hi = auto_grid.grid_hi;
  mc.interval_lo = auto_grid.interval_lo;
  mc.interval_hi = auto_grid.interval_hi;

  CvPipeline target_cv = transfer_cv(pipeline, SystemMap{});  // identity map

  MetadResult src_run = run_walkers(source, cfg.thermostat, pipeline, mc, x0,
                                    cfg.metad_steps, cfg.save_stride,
                                    cfg.seed + 1001);
  MetadResult tgt_run = run_walkers(target, cfg.thermostat, target_cv, mc, x0,
                                    cfg.metad_steps, cfg.save_stride,
                                    cfg.seed + 2002);

  const long discard = mc.equilibration_discard;
  WeightedSamples src_w = last_bias_weights(src_run, kT, discard);
  WeightedSamples tgt_w = last_bias_weights(tgt_run, kT, discard);

  // shared state definitions from pooled samples
  Mat pooled(src_w.frames.rows() + tgt_w.frames.rows(), 1);
  pooled.topRows(src_w.frames.rows()) = src_w.frames.col(0);
  pooled.bottomRows(tgt_w.frames.rows()) = tgt_w.frames.col(0);
  KmeansResult km = kmeans_cluster(pooled, cfg.n_states, cfg.seed + 7);

  // reference state: most populated state of the source ensemble
  {
    const Vec obs = src_w.frames.col(0);
    Vec pops = Vec::Zero(cfg.n_states);
    for (Eigen::Index i = 0; i < obs.size(); ++i) {
      int best = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < cfg.n_states; ++c) {
        const double d = std::abs(obs[i] - km.centers(c, 0));
        if (d < bestd) {
          bestd = d;
          best = c;
        }
      }
      pops[best] += src_w.weights[i];
    }
    Eigen::Index ref = 0;
    pops.maxCoeff(&ref);

    const double lo = pooled.minCoeff();
    const double hi = pooled.maxCoeff();
    TransferReport rep;
    rep.pipeline = pipeline;
    rep.state_centers = km.centers;
    rep.source = make_system_report(src_run, src_w, km.centers, kT,
                                    static_cast<int>(ref), lo, hi,
                                    cfg.target_basin_observable);
    rep.target = make_system_report(tgt_run, tgt_w, km.centers, kT,
                                    static_cast<int>(ref), lo, hi,
                                    cfg.target_basin_observable);
    rep.delta_delta_g = rep.target.delta_g - rep.source.delta_g;

    // convergence diagnostic: gamma/(gamma-1) V(s) + F_est(s) over interval
    const BiasState& bias = src_run.final_bias.front();
    FesEstimate fes_s = fes_project(src_w.weights, src_w.s, 40, mc.a(), mc.b(),
                                    "last_bias");
    const double g1 = mc.gamma / (mc.gamma - 1.0);
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (int b = 0; b < 40; ++b) {
      if (!std::isfinite(fes_s.free_energy[b])) continue;
      const double mid = 0.5 * (fes_s.edges[b] + fes_s.edges[b + 1]);
      const double v = g1 * bias.energy(mid) + fes_s.free_energy[b] * kT;
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    rep.flatness = mx - mn;
    return rep;
  }
}

}  // namespace esw
