#include "esw/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace esw {

namespace {

Vec normalize_log_weights(Vec logw) {
  const double m = logw.maxCoeff();
  Vec w = (logw.array() - m).exp();
  w /= w.sum();
  return w;
}

double logsumexp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

WeightedSamples last_bias_weights(const BiasedTrajectory& traj,
                                  const BiasState& final_bias, double kT,
                                  long discard_frames) {
  const Eigen::Index n = traj.frames.rows() - discard_frames;
  if (n <= 0) throw EstimatorError("no frames left after discard");
  WeightedSamples out;
  out.frames = traj.frames.bottomRows(n);
  out.s = traj.s.tail(n);
  Vec logw(n);
  for (Eigen::Index i = 0; i < n; ++i)
    logw[i] = final_bias.energy(out.s[i]) / kT;
  out.weights = normalize_log_weights(std::move(logw));
  out.estimator = "last_bias";
  return out;
}

WeightedSamples last_bias_weights(const MetadResult& run, double kT,
                                  long discard_frames) {
  std::vector<WeightedSamples> parts;
  Eigen::Index total = 0;
  for (std::size_t w = 0; w < run.walkers.size(); ++w) {
    parts.push_back(last_bias_weights(run.walkers[w], run.final_bias[w], kT,
                                      discard_frames));
    total += parts.back().frames.rows();
  }
  WeightedSamples out;
  out.frames.resize(total, run.walkers.front().frames.cols());
  out.s.resize(total);
  out.weights.resize(total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    const Eigen::Index n = p.frames.rows();
    out.frames.middleRows(at, n) = p.frames;
    out.s.segment(at, n) = p.s;
    // per-walker normalized weights pooled with equal walker mass
    out.weights.segment(at, n) = p.weights / static_cast<double>(parts.size());
    at += n;
  }
  out.estimator = "last_bias";
  return out;
}

std::vector<std::pair<long, double>> tiwary_offset_trace(
    const std::vector<Hill>& hills, const MetadConfig& cfg, double kT) {
  if (!(cfg.gamma > 1.0)) throw ConfigError("gamma must be > 1");
  BiasState replay(cfg, kT);
  const double g1 = cfg.gamma / (cfg.gamma - 1.0);
  const double g2 = 1.0 / (cfg.gamma - 1.0);
  const int n_nodes = cfg.n_bins + 1;
  auto c_of_bias = [&]() {
    Vec a(n_nodes), b(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      const double v = replay.grid_values()[i];
      a[i] = g1 * v / kT;
      b[i] = g2 * v / kT;
    }
    return kT * (logsumexp(a) - logsumexp(b));
  };
  std::vector<std::pair<long, double>> trace;
  trace.emplace_back(0, c_of_bias());
  for (const auto& h : hills) {
    replay.add_hill(h);
    trace.emplace_back(h.t, c_of_bias());
  }
  return trace;
}

WeightedSamples tiwary_weights(const BiasedTrajectory& traj,
                               const std::vector<Hill>& hills,
                               const MetadConfig& cfg, double kT,
                               long discard_frames) {
  const Eigen::Index n = traj.frames.rows() - discard_frames;
  if (n <= 0) throw EstimatorError("no frames left after discard");
  auto trace = tiwary_offset_trace(hills, cfg, kT);
  WeightedSamples out;
  out.frames = traj.frames.bottomRows(n);
  out.s = traj.s.tail(n);
  Vec logw(n);
  const Eigen::Index offset = traj.frames.rows() - n;
  for (Eigen::Index i = 0; i < n; ++i) {
    const long step = traj.frame_steps[offset + i];
    // c(t) is piecewise constant between deposit epochs
    double c = trace.front().second;
    for (const auto& [t, cv] : trace) {
      if (t <= step) c = cv;
      else break;
    }
    logw[i] = (traj.v_bias[offset + i] - c) / kT;
  }
  out.weights = normalize_log_weights(std::move(logw));
  out.estimator = "tiwary";
  return out;
}

MbarResult mbar_solve(const MbarInput& in, double tol, int max_iter,
                      bool aitken) {
  const Eigen::Index K = in.u_kn.rows();
  const Eigen::Index N = in.u_kn.cols();
  if (K < 1 || N < 1) throw EstimatorError("empty MBAR input");
  if (static_cast<Eigen::Index>(in.counts.size()) != K)
    throw EstimatorError("counts size mismatch");
  long total = 0;
  for (long c : in.counts) {
    if (c <= 0) throw EstimatorError("every state needs N_k > 0");
    total += c;
  }
  if (total != N) throw EstimatorError("counts do not sum to sample count");
  if (!in.u_kn.allFinite()) throw EstimatorError("non-finite reduced energies");

  Vec log_n(K);
  for (Eigen::Index k = 0; k < K; ++k)
    log_n[k] = std::log(static_cast<double>(in.counts[k]));

  Vec f = Vec::Zero(K);
  auto update = [&](const Vec& fk) {
    // log denominator per sample: ln sum_k N_k exp(f_k - u_kn)
    Vec log_denom(N);
    Vec col(K);
    for (Eigen::Index n = 0; n < N; ++n) {
      col = log_n + fk - in.u_kn.col(n);
      log_denom[n] = logsumexp(col);
    }
    Vec fnew(K);
    Vec t(N);
    for (Eigen::Index k = 0; k < K; ++k) {
      t = -in.u_kn.row(k).transpose() - log_denom;
      fnew[k] = -logsumexp(t);
    }
    fnew.array() -= fnew[0];
    return fnew;
  };

  double residual = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < max_iter) {
    Vec f1 = update(f);
    ++it;
    residual = (f1 - f).cwiseAbs().maxCoeff();
    if (aitken && residual > tol && it + 1 < max_iter) {
      // vector Aitken extrapolation on the fixed-point sequence
      Vec f2 = update(f1);
      ++it;
      Vec d1 = f1 - f;
      Vec d2 = f2 - f1;
      const double den = (d2 - d1).squaredNorm();
      if (den > 0.0) {
        Vec fa = f - d1.squaredNorm() / den * d1;
        Vec fa1 = update(fa);
        ++it;
        if ((fa1 - fa).cwiseAbs().maxCoeff() < (f2 - f1).cwiseAbs().maxCoeff())
          f2 = fa1;
      }
      residual = (f2 - f1).cwiseAbs().maxCoeff();
      f = f2;
    } else {
      f = f1;
    }
    if (residual < tol) break;
  }
  if (residual >= tol)
    throw EstimatorError("MBAR did not converge; residual " +
                         std::to_string(residual));

  MbarResult res;
  res.f = f;
  res.residual = residual;
  res.iterations = it;
  // per-sample weights in the target state
  Vec logw(N);
  Vec col(K);
  for (Eigen::Index n = 0; n < N; ++n) {
    col = log_n + f - in.u_kn.col(n);
    logw[n] = -in.u_target[n] - logsumexp(col);
  }
  res.target_weights = normalize_log_weights(std::move(logw));
  return res;
}

MbarInput metad_to_mbar(const std::vector<const BiasedTrajectory*>& runs,
                        const std::vector<const BiasState*>& biases,
                        const PotentialSpec& p, double kT,
                        long discard_frames) {
  if (runs.empty() || runs.size() != biases.size())
    throw EstimatorError("runs/biases mismatch");
  Eigen::Index N = 0;
  for (const auto* r : runs) {
    if (r->frames.rows() <= discard_frames)
      throw EstimatorError("no frames left after discard");
    N += r->frames.rows() - discard_frames;
  }
  const Eigen::Index K = static_cast<Eigen::Index>(runs.size());
  MbarInput in;
  in.u_kn.resize(K, N);
  in.u_target.resize(N);
  in.counts.resize(K);
  for (Eigen::Index r = 0; r < K; ++r)
    in.counts[r] = runs[r]->frames.rows() - discard_frames;
  Eigen::Index at = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& traj = *runs[r];
    const Eigen::Index n = traj.frames.rows() - discard_frames;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = discard_frames + i;
      const Vec x = traj.frames.row(row).transpose();
      const double u0 = p.energy(x) / kT;
      in.u_target[at] = u0;
      const double s = traj.s[row];
      for (std::size_t k = 0; k < biases.size(); ++k)
        in.u_kn(static_cast<Eigen::Index>(k), at) =
            u0 + biases[k]->energy(s) / kT;
      ++at;
    }
  }
  return in;
}

FesEstimate fes_project(const Vec& weights, const Vec& observable, int n_bins,
                        double lo, double hi, const std::string& tag) {
  if (n_bins < 2) throw EstimatorError("need at least 2 bins");
  if (weights.size() != observable.size())
    throw EstimatorError("weights/observable size mismatch");
  FesEstimate fes;
  fes.estimator = tag;
  fes.edges.resize(n_bins + 1);
  const double h = (hi - lo) / n_bins;
  for (int i = 0; i <= n_bins; ++i) fes.edges[i] = lo + h * i;
  Vec mass = Vec::Zero(n_bins);
  for (Eigen::Index i = 0; i < observable.size(); ++i) {
    int b = static_cast<int>((observable[i] - lo) / h);
    if (b < 0 || b >= n_bins) continue;
    mass[b] += weights[i];
  }
  if (mass.sum() <= 0.0) throw EstimatorError("all bins empty");
  fes.free_energy.resize(n_bins);
  double fmin = std::numeric_limits<double>::infinity();
  for (int b = 0; b < n_bins; ++b) {
    fes.free_energy[b] = mass[b] > 0.0
                             ? -std::log(mass[b])
                             : std::numeric_limits<double>::quiet_NaN();
    if (mass[b] > 0.0) fmin = std::min(fmin, fes.free_energy[b]);
  }
  for (int b = 0; b < n_bins; ++b) fes.free_energy[b] -= fmin;
  return fes;
}

FesEstimate fes_project(const WeightedSamples& w, const Vec& observable,
                        int n_bins, double lo, double hi) {
  return fes_project(w.weights, observable, n_bins, lo, hi, w.estimator);
}

KmeansResult kmeans_cluster(const Mat& Y, int k, std::uint64_t seed,
                            int max_iter) {
  const Eigen::Index n = Y.rows();
  if (k < 1 || k > n) throw EstimatorError("k out of range");
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  Mat centers(k, Y.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = Y.row(pick(rng));
  Vec d2 = (Y.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = Y.row(chosen);
    d2 = d2.cwiseMin(
        (Y.rowwise() - centers.row(c)).rowwise().squaredNorm().eval());
  }

  std::vector<int> labels(n, 0);
  double inertia = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (Y.row(i) - centers.row(c)).squaredNorm();
        if (d < bestd) {
          bestd = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
      inertia += bestd;
    }
    Mat sums = Mat::Zero(k, Y.cols());
    std::vector<long> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[i]) += Y.row(i);
      ++counts[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
      } else {
        // re-seed an empty cluster from the farthest point
        Eigen::Index far = 0;
        double fard = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (Y.row(i) - centers.row(labels[i])).squaredNorm();
          if (d > fard) {
            fard = d;
            far = i;
          }
        }
        centers.row(c) = Y.row(far);
        changed = true;
      }
    }
    if (!changed && it > 0) break;
  }
  return {std::move(labels), std::move(centers), inertia};
}

StatePopulations state_populations(const std::vector<int>& labels,
                                   const Vec& weights, int k, double kT,
                                   int reference_state) {
  if (static_cast<Eigen::Index>(labels.size()) != weights.size())
    throw EstimatorError("labels/weights size mismatch");
  StatePopulations sp;
  sp.populations = Vec::Zero(k);
  for (std::size_t i = 0; i < labels.size(); ++i)
    sp.populations[labels[i]] += weights[i];
  if (reference_state < 0) {
    Eigen::Index ref = 0;
    sp.populations.maxCoeff(&ref);
    reference_state = static_cast<int>(ref);
  }
  sp.reference_state = reference_state;
  sp.delta_g.resize(k);
  const double pref = sp.populations[reference_state];
  for (int c = 0; c < k; ++c)
    sp.delta_g[c] = -kT * std::log(sp.populations[c] / pref);
  return sp;
}

double basin_delta_f(const Vec& weights, const Vec& observable, double divider,
                     double kT) {
  double left = 0.0, right = 0.0;
  for (Eigen::Index i = 0; i < observable.size(); ++i) {
    (observable[i] < divider ? left : right) += weights[i];
  }
  if (left <= 0.0 || right <= 0.0)
    throw EstimatorError("empty basin in delta-F estimate");
  return -kT * std::log(right / left);
}

}  // namespace esw
