// esw: enhanced-sampling workbench driver.
// Stages read their inputs from the output directory of prior stages and
// write one artifact set plus a manifest each; run-all chains them with
// content-hash caching.

#include "esw/cvexpr.hpp"
#include "esw/io.hpp"
#include "esw/metad.hpp"
#include "esw/reweight.hpp"
#include "esw/transfer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using esw::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw SchemaError(path + ": expected an object");
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (!allowed.count(key))
      throw SchemaError("unknown key " + path + "." + key);
  }
}

void validate_system(const json& j, const std::string& path) {
  check_keys(j, path, {"kind", "a", "c", "d1", "d2", "d3", "k", "center",
                       "perturbation"});
  if (!j.contains("kind")) throw SchemaError(path + ".kind is required");
  if (j.contains("perturbation"))
    check_keys(j["perturbation"], path + ".perturbation",
               {"basin", "delta", "width"});
}

void validate_config(const json& j) {
  check_keys(j, "config",
             {"output_dir", "seed", "system", "target_system", "thermostat",
              "simulate", "features", "tica", "vde", "metad", "reweight",
              "transfer"});
  if (!j.contains("system")) throw SchemaError("config.system is required");
  validate_system(j["system"], "config.system");
  if (j.contains("target_system"))
    validate_system(j["target_system"], "config.target_system");
  if (j.contains("thermostat"))
    check_keys(j["thermostat"], "config.thermostat", {"kT", "D", "dt"});
  if (j.contains("simulate"))
    check_keys(j["simulate"], "config.simulate",
               {"n_steps", "save_stride", "x0"});
  if (j.contains("features")) {
    check_keys(j["features"], "config.features", {"blocks"});
    for (const auto& b : j["features"].at("blocks"))
      check_keys(b, "config.features.blocks[]", {"kind", "scale", "pairs"});
  }
  if (j.contains("tica"))
    check_keys(j["tica"], "config.tica",
               {"tau", "shrinkage", "penalty", "n_tics"});
  if (j.contains("vde"))
    check_keys(j["vde"], "config.vde",
               {"widths", "activation", "tau", "epochs", "lr", "batch_size",
                "noise_scale", "alpha"});
  if (j.contains("metad"))
    check_keys(j["metad"], "config.metad",
               {"h0", "sigma", "gamma", "drop_period", "grid_lo", "grid_hi",
                "n_bins", "interval_lo", "interval_hi", "n_walkers",
                "read_stride", "equilibration_discard", "n_steps",
                "save_stride"});
  if (j.contains("reweight"))
    check_keys(j["reweight"], "config.reweight",
               {"estimators", "n_bins", "k", "discard"});
  if (j.contains("transfer"))
    check_keys(j["transfer"], "config.transfer",
               {"index_map", "n_states", "target_basin_observable"});
}

struct Ctx {
  json cfg;
  fs::path out;
  std::uint64_t seed = 1;
  bool force = false;
  int jobs = 1;

  fs::path art(const std::string& name) const { return out / name; }

  void require(const fs::path& p, const std::string& stage) const {
    if (!fs::exists(p))
      throw MissingArtifactError("missing artifact " + p.string() +
                                 "; run the " + stage + " stage first");
  }
};

Ctx load_ctx(const std::string& config_path, const std::string& out_override,
             long seed_override, bool force, int jobs) {
  if (!fs::exists(config_path))
    throw std::runtime_error("config file not found: " + config_path);
  Ctx c;
  c.cfg = json::parse(esw::read_text(config_path));
  validate_config(c.cfg);
  c.out = out_override.empty()
              ? fs::path(c.cfg.value("output_dir", std::string("out")))
              : fs::path(out_override);
  c.seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override)
                              : c.cfg.value("seed", 1ULL);
  c.force = force;
  c.jobs = jobs;
  fs::create_directories(c.out);
  return c;
}

esw::PotentialSpec system_spec(const Ctx& c, const char* key = "system") {
  return esw::potential_from_json(c.cfg.at(key));
}

esw::Thermostat thermostat(const Ctx& c) {
  return c.cfg.contains("thermostat")
             ? esw::thermostat_from_json(c.cfg["thermostat"])
             : esw::Thermostat{};
}

esw::FeatureSpec features(const Ctx& c) {
  return c.cfg.contains("features")
             ? esw::feature_spec_from_json(c.cfg["features"])
             : esw::FeatureSpec::identity();
}

// stage key = hash of version, stage config, seed and input-file hashes;
// a matching manifest with all outputs present is a cache hit
std::string stage_key(const Ctx& c, const json& stage_cfg,
                      const std::vector<fs::path>& inputs) {
  std::string s = std::string(kVersion) + "|" + stage_cfg.dump() + "|" +
                  std::to_string(c.seed);
  for (const auto& p : inputs) s += "|" + esw::file_sha_like_hash(p);
  return esw::string_hash(s);
}

bool cache_hit(const Ctx& c, const std::string& stage, const std::string& key,
               const std::vector<fs::path>& outputs) {
  if (c.force) return false;
  const fs::path mpath = c.art(stage + ".manifest.json");
  if (!fs::exists(mpath)) return false;
  json m = json::parse(esw::read_text(mpath));
  if (m.value("key", std::string()) != key) return false;
  for (const auto& p : outputs)
    if (!fs::exists(p)) return false;
  std::cout << "[" << stage << "] cached\n";
  return true;
}

void write_manifest(const Ctx& c, const std::string& stage,
                    const std::string& key,
                    const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  json m{{"stage", stage},
         {"version", kVersion},
         {"seed", c.seed},
         {"key", key}};
  json jin = json::object();
  for (const auto& p : inputs) jin[p.string()] = esw::file_sha_like_hash(p);
  m["inputs"] = jin;
  json jout = json::array();
  for (const auto& p : outputs) jout.push_back(p.string());
  m["outputs"] = jout;
  esw::write_text(c.art(stage + ".manifest.json"), m.dump(2));
}

esw::Vec start_point(const Ctx& c, const esw::PotentialSpec& p) {
  if (c.cfg.contains("simulate") && c.cfg["simulate"].contains("x0")) {
    const auto& jx = c.cfg["simulate"]["x0"];
    esw::Vec x0(jx.size());
    for (std::size_t i = 0; i < jx.size(); ++i) x0[i] = jx[i].get<double>();
    return x0;
  }
  return p.basin_center(0);
}

// ---- stages -------------------------------------------------------------

void stage_simulate(const Ctx& c) {
  const json scfg = c.cfg.value("simulate", json::object());
  const std::string key = stage_key(c, scfg, {});
  const std::vector<fs::path> outs{c.art("traj.csv"), c.art("traj.meta.json")};
  if (cache_hit(c, "simulate", key, outs)) return;

  const esw::PotentialSpec p = system_spec(c);
  const esw::Thermostat th = thermostat(c);
  const long n_steps = scfg.value("n_steps", 200000L);
  const long stride = scfg.value("save_stride", 10L);
  esw::Trajectory traj =
      esw::simulate(p, th, start_point(c, p), n_steps, stride, c.seed);
  esw::write_trajectory_csv(outs[0], traj);
  esw::write_trajectory_sidecar(outs[1], traj, th, stride);
  write_manifest(c, "simulate", key, {}, outs);
  std::cout << "[simulate] " << traj.n_frames() << " frames\n";
}

void stage_featurize(const Ctx& c) {
  const std::vector<fs::path> ins{c.art("traj.csv"), c.art("traj.meta.json")};
  for (const auto& p : ins) c.require(p, "simulate");
  const json scfg = c.cfg.value("features", json::object());
  const std::string key = stage_key(c, scfg, ins);
  const std::vector<fs::path> outs{c.art("features.csv"),
                                   c.art("scaler.json")};
  if (cache_hit(c, "featurize", key, outs)) return;

  esw::Trajectory traj = esw::read_trajectory_csv(ins[0], ins[1]);
  const esw::FeatureSpec fs_ = features(c);
  esw::Mat F = fs_.apply(traj.frames);
  esw::write_matrix_csv(outs[0], F,
                        fs_.names(static_cast<int>(traj.dim())));
  esw::Scaler scaler = esw::fit_scaler(F);
  esw::write_text(outs[1], esw::to_json(scaler).dump(2));
  write_manifest(c, "featurize", key, ins, outs);
  std::cout << "[featurize] " << F.cols() << " features\n";
}

void stage_tica(const Ctx& c) {
  if (!c.cfg.contains("tica")) {
    std::cout << "[tica] not configured, skipped\n";
    return;
  }
  const std::vector<fs::path> ins{c.art("features.csv"), c.art("scaler.json")};
  for (const auto& p : ins) c.require(p, "featurize");
  const json scfg = c.cfg["tica"];
  const std::string key = stage_key(c, scfg, ins);
  const std::vector<fs::path> outs{c.art("tica.json"),
                                   c.art("timescales.csv")};
  if (cache_hit(c, "tica", key, outs)) return;

  esw::Mat F = esw::read_matrix_csv(ins[0]);
  esw::Scaler scaler =
      esw::scaler_from_json(json::parse(esw::read_text(ins[1])));
  esw::Mat Z = scaler.apply(F);
  const long tau = scfg.value("tau", 50L);
  const double penalty = scfg.value("penalty", 0.0);
  double shrink = scfg.value("shrinkage", -1.0);
  esw::CovarianceSet cov = esw::estimate_covariances(Z, tau);
  if (shrink < 0) shrink = esw::default_shrinkage(cov.c00);
  esw::TicaModel model =
      penalty > 0
          ? esw::solve_sparse_tica(cov, tau, shrink, penalty,
                                   scfg.value("n_tics", 1))
          : esw::solve_tica(cov, tau, shrink);
  esw::write_text(outs[0], esw::to_json(model).dump(2));

  esw::Vec ts = esw::timescales(model);
  esw::Mat T(ts.size(), 2);
  for (Eigen::Index i = 0; i < ts.size(); ++i) {
    T(i, 0) = model.eigenvalues[i];
    T(i, 1) = ts[i];
  }
  esw::write_matrix_csv(outs[1], T, {"eigenvalue", "timescale_frames"});
  write_manifest(c, "tica", key, ins, outs);
  std::cout << "[tica] top eigenvalue " << model.eigenvalues[0] << "\n";
}

esw::CvPipeline load_pipeline(const Ctx& c) {
  c.require(c.art("pipeline.json"), "train-vde");
  return esw::pipeline_from_json(
      json::parse(esw::read_text(c.art("pipeline.json"))));
}

void stage_train_vde(const Ctx& c) {
  std::vector<fs::path> ins{c.art("features.csv"), c.art("scaler.json")};
  for (const auto& p : ins) c.require(p, "featurize");
  const bool with_tica = c.cfg.contains("tica");
  if (with_tica) {
    c.require(c.art("tica.json"), "tica");
    ins.push_back(c.art("tica.json"));
  }
  const json scfg = c.cfg.value("vde", json::object());
  const std::string key = stage_key(c, scfg, ins);
  const std::vector<fs::path> outs{c.art("vde.json"), c.art("train_curve.csv"),
                                   c.art("pipeline.json")};
  if (cache_hit(c, "train-vde", key, outs)) return;

  esw::Mat F = esw::read_matrix_csv(ins[0]);
  esw::Scaler scaler =
      esw::scaler_from_json(json::parse(esw::read_text(ins[1])));
  esw::Mat X = scaler.apply(F);

  esw::CvPipeline pipe;
  pipe.raw_dim = system_spec(c).dim();
  pipe.features = features(c);
  pipe.scaler = scaler;
  if (with_tica) {
    pipe.tica = esw::tica_from_json(json::parse(esw::read_text(ins[2])));
    pipe.n_tics = c.cfg["tica"].value("n_tics", 1);
    X = esw::project(*pipe.tica, X, pipe.n_tics);
  }

  esw::MlpSpec mlp;
  mlp.widths = scfg.value("widths", std::vector<int>{});
  if (mlp.widths.empty())
    mlp.widths = {static_cast<int>(X.cols()), 16, 16, 1};
  mlp.activation = esw::activation_from_string(
      scfg.value("activation", std::string("swish")));
  esw::TrainConfig tc;
  tc.epochs = scfg.value("epochs", 30);
  tc.lr = scfg.value("lr", 1e-4);
  tc.batch_size = scfg.value("batch_size", 200);
  tc.seed = c.seed;
  const long tau = scfg.value("tau", 50L);
  esw::VdeModel vde =
      esw::train_vde(X, tau, mlp, tc, scfg.value("noise_scale", 0.1),
                     scfg.value("alpha", 1.0));
  pipe.encoder = vde;
  pipe.validate();

  esw::write_text(outs[0], esw::to_json(vde).dump(2));
  esw::Mat curve(vde.report.size(), 3);
  for (std::size_t e = 0; e < vde.report.size(); ++e) {
    curve(e, 0) = vde.report[e].recon;
    curve(e, 1) = vde.report[e].autocorr;
    curve(e, 2) = vde.report[e].total;
  }
  esw::write_matrix_csv(outs[1], curve, {"recon", "autocorr", "total"});
  esw::write_text(outs[2], esw::to_json(pipe).dump(2));
  write_manifest(c, "train-vde", key, ins, outs);
  std::cout << "[train-vde] final loss "
            << (vde.report.empty() ? 0.0 : vde.report.back().total) << "\n";
}

void stage_export_cv(const Ctx& c) {
  const std::vector<fs::path> ins{c.art("pipeline.json")};
  c.require(ins[0], "train-vde");
  const std::string key = stage_key(c, json::object(), ins);
  const std::vector<fs::path> outs{c.art("cv_expression.txt")};

  esw::CvPipeline pipe = load_pipeline(c);
  esw::CvExpression expr = esw::compile_pipeline(pipe);
  std::cout << expr.text << "\n";
  if (cache_hit(c, "export-cv", key, outs)) return;
  esw::write_text(outs[0], expr.text + "\n");
  write_manifest(c, "export-cv", key, ins, outs);
}

esw::MetadConfig effective_metad_config(const Ctx& c,
                                        const esw::CvPipeline& pipe) {
  const json scfg = c.cfg.value("metad", json::object());
  esw::MetadConfig mc = esw::metad_config_from_json(scfg);
  if (!scfg.contains("grid_lo") || !scfg.contains("grid_hi")) {
    // grid from the training-data CV range
    esw::Trajectory traj =
        esw::read_trajectory_csv(c.art("traj.csv"), c.art("traj.meta.json"));
    esw::Vec s = pipe.values(traj.frames);
    esw::MetadConfig autoc =
        esw::MetadConfig::from_training_range(s.minCoeff(), s.maxCoeff());
    mc.grid_lo = autoc.grid_lo;
    mc.grid_hi = autoc.grid_hi;
    if (!scfg.contains("interval_lo")) mc.interval_lo = autoc.interval_lo;
    if (!scfg.contains("interval_hi")) mc.interval_hi = autoc.interval_hi;
  }
  mc.validate();
  return mc;
}

void stage_metad(const Ctx& c) {
  const std::vector<fs::path> ins{c.art("pipeline.json"), c.art("traj.csv"),
                                  c.art("traj.meta.json")};
  c.require(ins[0], "train-vde");
  const json scfg = c.cfg.value("metad", json::object());
  const std::string key = stage_key(c, scfg, ins);
  esw::CvPipeline pipe = load_pipeline(c);
  const esw::MetadConfig mc = effective_metad_config(c, pipe);

  std::vector<fs::path> outs{c.art("hills.csv"), c.art("bias_grid.csv"),
                             c.art("metad_config.json")};
  for (int w = 0; w < mc.n_walkers; ++w)
    outs.push_back(c.art("walker_" + std::to_string(w) + ".csv"));
  if (cache_hit(c, "metad", key, outs)) return;

  const esw::PotentialSpec p = system_spec(c);
  const esw::Thermostat th = thermostat(c);
  const long n_steps = scfg.value("n_steps", 500000L);
  const long stride = scfg.value("save_stride", 10L);
  esw::MetadResult res = esw::run_walkers(p, th, pipe, mc,
                                          start_point(c, p), n_steps, stride,
                                          c.seed);
  esw::write_hills_csv(outs[0], res.hills, th.dt);
  const esw::BiasState& bias = res.final_bias.front();
  esw::Mat G(mc.n_bins + 1, 2);
  for (int i = 0; i <= mc.n_bins; ++i) {
    G(i, 0) = bias.node_position(i);
    G(i, 1) = bias.grid_values()[i];
  }
  esw::write_matrix_csv(outs[1], G, {"s", "V_bias"});
  json mj = esw::to_json(mc);
  mj["n_steps"] = n_steps;
  mj["save_stride"] = stride;
  esw::write_text(outs[2], mj.dump(2));
  for (int w = 0; w < mc.n_walkers; ++w)
    esw::write_biased_trajectory_csv(outs[3 + w], res.walkers[w]);
  write_manifest(c, "metad", key, ins, outs);
  std::cout << "[metad] " << res.hills.size() << " hills, "
            << bias.skipped_deposits() << " skipped deposits\n";
}

// reconstruct the metad result from the stage artifacts
esw::MetadResult load_metad_result(const Ctx& c, esw::MetadConfig* mc_out,
                                   long* save_stride) {
  c.require(c.art("hills.csv"), "metad");
  c.require(c.art("metad_config.json"), "metad");
  json mj = json::parse(esw::read_text(c.art("metad_config.json")));
  esw::MetadConfig mc = esw::metad_config_from_json(mj);
  const long stride = mj.value("save_stride", 10L);
  const esw::Thermostat th = thermostat(c);

  esw::MetadResult res;
  res.hills = esw::read_hills_csv(c.art("hills.csv"), th.dt);
  esw::BiasState bias(mc, th.kT);
  for (const auto& h : res.hills) bias.add_hill(h);
  for (int w = 0; w < mc.n_walkers; ++w) {
    const fs::path wp = c.art("walker_" + std::to_string(w) + ".csv");
    c.require(wp, "metad");
    esw::Mat M = esw::read_matrix_csv(wp);
    esw::BiasedTrajectory bt;
    const Eigen::Index dim = M.cols() - 3;  // t, x..., s, V_bias
    bt.frames = M.middleCols(1, dim);
    bt.s = M.col(M.cols() - 2);
    bt.v_bias = M.col(M.cols() - 1);
    bt.dt_record = th.dt * static_cast<double>(stride);
    bt.walker = w;
    for (Eigen::Index r = 0; r < M.rows(); ++r)
      bt.frame_steps.push_back(static_cast<long>(r + 1) * stride);
    res.walkers.push_back(std::move(bt));
    res.final_bias.push_back(bias);
  }
  if (mc_out) *mc_out = mc;
  if (save_stride) *save_stride = stride;
  return res;
}

void stage_reweight(const Ctx& c) {
  std::vector<fs::path> ins{c.art("hills.csv"), c.art("metad_config.json")};
  for (const auto& p : ins) c.require(p, "metad");
  const json scfg = c.cfg.value("reweight", json::object());
  const std::string key = stage_key(c, scfg, ins);

  esw::MetadConfig mc;
  long stride = 0;
  esw::MetadResult res = load_metad_result(c, &mc, &stride);
  const esw::Thermostat th = thermostat(c);
  const esw::PotentialSpec pot = system_spec(c);
  const long discard = scfg.value("discard", mc.equilibration_discard);
  const int n_bins = scfg.value("n_bins", 60);
  const int k = scfg.value("k", 2);
  const std::vector<std::string> ests = scfg.value(
      "estimators",
      std::vector<std::string>{"last_bias", "tiwary", "mbar"});

  std::vector<fs::path> outs{c.art("populations.json")};
  for (const auto& e : ests) outs.push_back(c.art("fes_" + e + ".csv"));
  if (cache_hit(c, "reweight", key, outs)) return;

  auto pool = [&](std::vector<esw::WeightedSamples> parts,
                  const std::string& tag) {
    Eigen::Index n = 0;
    for (const auto& p : parts) n += p.weights.size();
    esw::WeightedSamples w;
    w.frames.resize(n, parts.front().frames.cols());
    w.s.resize(n);
    w.weights.resize(n);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      const Eigen::Index m = p.weights.size();
      w.frames.middleRows(at, m) = p.frames;
      w.s.segment(at, m) = p.s;
      w.weights.segment(at, m) =
          p.weights / static_cast<double>(parts.size());
      at += m;
    }
    w.estimator = tag;
    return w;
  };

  std::optional<esw::WeightedSamples> first;
  for (const auto& est : ests) {
    esw::WeightedSamples w;
    if (est == "last_bias") {
      w = esw::last_bias_weights(res, th.kT, discard);
    } else if (est == "tiwary") {
      std::vector<esw::WeightedSamples> parts;
      for (const auto& bt : res.walkers)
        parts.push_back(
            esw::tiwary_weights(bt, res.hills, mc, th.kT, discard));
      w = pool(std::move(parts), "tiwary");
    } else if (est == "mbar") {
      std::vector<const esw::BiasedTrajectory*> runs;
      std::vector<const esw::BiasState*> biases;
      for (std::size_t i = 0; i < res.walkers.size(); ++i) {
        runs.push_back(&res.walkers[i]);
        biases.push_back(&res.final_bias[i]);
      }
      esw::MbarInput in = esw::metad_to_mbar(runs, biases, pot, th.kT,
                                             discard);
      esw::MbarResult mr = esw::mbar_solve(in);
      w = esw::last_bias_weights(res, th.kT, discard);  // frames/s layout
      w.weights = mr.target_weights;
      w.estimator = "mbar";
    } else {
      throw SchemaError("unknown estimator: " + est);
    }
    esw::FesEstimate fes =
        esw::fes_project(w, w.s, n_bins, mc.grid_lo, mc.grid_hi);
    esw::write_fes_csv(c.art("fes_" + est + ".csv"), fes);
    if (!first) first = w;
  }

  esw::Mat Y = first->frames.col(0);
  esw::KmeansResult km = esw::kmeans_cluster(Y, k, c.seed + 7);
  esw::StatePopulations sp =
      esw::state_populations(km.labels, first->weights, k, th.kT);
  json pj{{"estimator", first->estimator},
          {"reference_state", sp.reference_state}};
  json centers = json::array(), pops = json::array(), dg = json::array();
  for (int i = 0; i < k; ++i) {
    centers.push_back(km.centers(i, 0));
    pops.push_back(sp.populations[i]);
    dg.push_back(sp.delta_g[i]);
  }
  pj["centers"] = centers;
  pj["populations"] = pops;
  pj["delta_g_kT"] = dg;
  esw::write_text(c.art("populations.json"), pj.dump(2));
  write_manifest(c, "reweight", key, ins, outs);
  std::cout << "[reweight] " << ests.size() << " estimators\n";
}

void stage_transfer(const Ctx& c) {
  if (!c.cfg.contains("transfer") || !c.cfg.contains("target_system")) {
    std::cout << "[transfer] not configured, skipped\n";
    return;
  }
  const json scfg = c.cfg["transfer"];
  const std::string key = stage_key(c, scfg, {});
  const std::vector<fs::path> outs{c.art("transfer_report.json"),
                                   c.art("fes_source.csv"),
                                   c.art("fes_target.csv")};
  if (cache_hit(c, "transfer", key, outs)) return;

  const esw::PotentialSpec src = system_spec(c, "system");
  const esw::PotentialSpec tgt = system_spec(c, "target_system");

  esw::TransferConfig tc;
  tc.features = features(c);
  const json vcfg = c.cfg.value("vde", json::object());
  tc.tau = vcfg.value("tau", 50L);
  tc.mlp.widths = vcfg.value("widths", std::vector<int>{});
  if (tc.mlp.widths.empty())
    tc.mlp.widths = {tc.features.out_dim(src.dim()), 16, 16, 1};
  tc.mlp.activation = esw::activation_from_string(
      vcfg.value("activation", std::string("swish")));
  tc.train.epochs = vcfg.value("epochs", 30);
  tc.train.lr = vcfg.value("lr", 1e-4);
  tc.train.batch_size = vcfg.value("batch_size", 200);
  tc.noise_scale = vcfg.value("noise_scale", 0.1);
  tc.alpha = vcfg.value("alpha", 1.0);
  tc.thermostat = thermostat(c);
  const json mcfg = c.cfg.value("metad", json::object());
  tc.metad = esw::metad_config_from_json(mcfg);
  tc.unbiased_steps =
      c.cfg.value("simulate", json::object()).value("n_steps", 200000L);
  tc.metad_steps = mcfg.value("n_steps", 500000L);
  tc.save_stride =
      c.cfg.value("simulate", json::object()).value("save_stride", 10L);
  tc.n_states = scfg.value("n_states", 2);
  tc.target_basin_observable = scfg.value("target_basin_observable", 1.0);
  tc.seed = c.seed;

  esw::TransferReport rep =
      esw::run_transfer_experiment(src, tgt, start_point(c, src), tc);

  json jr{{"flatness_kT", rep.flatness},
          {"source_folded_walkers", rep.source.folded_walkers},
          {"target_folded_walkers", rep.target.folded_walkers}};
  json jc = json::array(), jd = json::array(), js = json::array(),
       jt = json::array();
  for (Eigen::Index i = 0; i < rep.delta_delta_g.size(); ++i) {
    jc.push_back(rep.state_centers(i, 0));
    jd.push_back(rep.delta_delta_g[i]);
    js.push_back(rep.source.delta_g[i]);
    jt.push_back(rep.target.delta_g[i]);
  }
  jr["state_centers"] = jc;
  jr["delta_delta_g_kT"] = jd;
  jr["source_delta_g_kT"] = js;
  jr["target_delta_g_kT"] = jt;
  esw::write_text(outs[0], jr.dump(2));
  esw::write_fes_csv(outs[1], rep.source.fes);
  esw::write_fes_csv(outs[2], rep.target.fes);
  write_manifest(c, "transfer", key, {}, outs);
  std::cout << "[transfer] flatness " << rep.flatness << " kT\n";
}

esw::Mat fes_to_points(const esw::FesEstimate& fes) {
  esw::Mat pts(fes.free_energy.size(), 2);
  for (Eigen::Index b = 0; b < fes.free_energy.size(); ++b) {
    pts(b, 0) = 0.5 * (fes.edges[b] + fes.edges[b + 1]);
    pts(b, 1) = fes.free_energy[b];
  }
  return pts;
}

esw::Mat fes_csv_points(const fs::path& p) {
  esw::Mat M = esw::read_matrix_csv(p);
  esw::Mat pts(M.rows(), 2);
  pts.col(0) = 0.5 * (M.col(0) + M.col(1));
  pts.col(1) = M.col(2);
  return pts;
}

void stage_report(const Ctx& c) {
  std::vector<std::pair<std::string, esw::Mat>> series;
  std::string table;
  std::vector<fs::path> ins;
  if (fs::exists(c.art("transfer_report.json"))) {
    ins = {c.art("transfer_report.json"), c.art("fes_source.csv"),
           c.art("fes_target.csv")};
    series.emplace_back("source", fes_csv_points(ins[1]));
    series.emplace_back("target", fes_csv_points(ins[2]));
    json jr = json::parse(esw::read_text(ins[0]));
    // values rendered through the same serializer as the JSON report so the
    // two artifacts agree byte for byte
    table = "state_center,delta_delta_g_kT\n";
    for (std::size_t i = 0; i < jr["state_centers"].size(); ++i)
      table += jr["state_centers"][i].dump() + "," +
               jr["delta_delta_g_kT"][i].dump() + "\n";
  } else {
    const std::vector<std::string> ests = c.cfg.value("reweight", json::object())
        .value("estimators",
               std::vector<std::string>{"last_bias", "tiwary", "mbar"});
    for (const auto& e : ests) {
      const fs::path p = c.art("fes_" + e + ".csv");
      c.require(p, "reweight");
      ins.push_back(p);
      series.emplace_back(e, fes_csv_points(p));
    }
    table = "estimator,fes_file\n";
    for (std::size_t i = 0; i < ests.size(); ++i)
      table += ests[i] + "," + ins[i].string() + "\n";
  }
  const std::string key = stage_key(c, json::object(), ins);
  const std::vector<fs::path> outs{c.art("report.svg"), c.art("report.txt")};
  if (cache_hit(c, "report", key, outs)) return;
  esw::write_svg_lines(outs[0], series, "observable", "free energy (kT)");
  esw::write_text(outs[1], table);
  write_manifest(c, "report", key, ins, outs);
  std::cout << "[report] " << outs[0].string() << "\n";
}

void stage_run_all(const Ctx& c) {
  stage_simulate(c);
  stage_featurize(c);
  stage_tica(c);
  stage_train_vde(c);
  stage_export_cv(c);
  stage_metad(c);
  stage_reweight(c);
  stage_transfer(c);
  stage_report(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"enhanced-sampling workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_override;
  long seed_override = -1;
  bool force = false;
  int jobs = 1;
  app.add_option("--config", config_path, "experiment config (json)")
      ->required();
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--jobs", jobs, "max parallel walkers");
  app.add_option("--out", out_override, "override the output directory");
  app.add_flag("--force", force, "recompute even on cache hit");

  std::map<std::string, void (*)(const Ctx&)> stages{
      {"simulate", stage_simulate}, {"featurize", stage_featurize},
      {"tica", stage_tica},         {"train-vde", stage_train_vde},
      {"export-cv", stage_export_cv}, {"metad", stage_metad},
      {"reweight", stage_reweight}, {"transfer", stage_transfer},
      {"report", stage_report},     {"run-all", stage_run_all}};
  for (const auto& [name, fn] : stages) {
    (void)fn;
    app.add_subcommand(name, "run the " + name + " stage");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  try {
    Ctx c = load_ctx(config_path, out_override, seed_override, force, jobs);
    for (const auto& [name, fn] : stages)
      if (app.get_subcommand(name)->parsed()) fn(c);
    return 0;
  } catch (const esw::BlowUpError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const esw::DivergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const esw::ConditioningError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const esw::EstimatorError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const esw::OverPenalizationError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const esw::DegenerateFeatureError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
