#include "esw/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace esw {

namespace {

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

json mat_to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

Mat mat_from_json(const json& j) {
  const Eigen::Index rows = j.size();
  const Eigen::Index cols = rows ? j[0].size() : 0;
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

}  // namespace

json to_json(const PotentialSpec& p) {
  json j{{"kind", to_string(p.kind)}, {"a", p.a},   {"c", p.c},
         {"d1", p.d1},               {"d2", p.d2}, {"d3", p.d3},
         {"k", p.k}};
  if (p.center.size()) j["center"] = vec_to_json(p.center);
  if (p.perturbation) {
    j["perturbation"] = {{"basin", p.perturbation->basin},
                         {"delta", p.perturbation->delta},
                         {"width", p.perturbation->width}};
  }
  return j;
}

PotentialSpec potential_from_json(const json& j) {
  PotentialSpec p;
  p.kind = potential_kind_from_string(j.at("kind").get<std::string>());
  p.a = j.value("a", 5.0);
  p.c = j.value("c", 0.0);
  p.d1 = j.value("d1", 4.0);
  p.d2 = j.value("d2", 4.0);
  p.d3 = j.value("d3", 4.0);
  p.k = j.value("k", 1.0);
  if (j.contains("center")) p.center = vec_from_json(j["center"]);
  if (j.contains("perturbation")) {
    Perturbation pert;
    pert.basin = j["perturbation"].value("basin", 0);
    pert.delta = j["perturbation"].value("delta", 0.0);
    pert.width = j["perturbation"].value("width", 0.5);
    p.perturbation = pert;
  }
  return p;
}

json to_json(const Thermostat& t) {
  return {{"kT", t.kT}, {"D", t.D}, {"dt", t.dt}};
}

Thermostat thermostat_from_json(const json& j) {
  Thermostat t;
  t.kT = j.value("kT", 1.0);
  t.D = j.value("D", 1.0);
  t.dt = j.value("dt", 1e-3);
  return t;
}

json to_json(const FeatureSpec& f) {
  json blocks = json::array();
  for (const auto& b : f.blocks) {
    json jb;
    jb["kind"] = b.kind == FeatureKind::Identity   ? "identity"
                 : b.kind == FeatureKind::SinCos   ? "sincos"
                                                   : "pair_distances";
    jb["scale"] = b.scale;
    if (!b.pairs.empty()) {
      json pp = json::array();
      for (auto [i, jdx] : b.pairs) pp.push_back({i, jdx});
      jb["pairs"] = pp;
    }
    blocks.push_back(jb);
  }
  return {{"blocks", blocks}};
}

FeatureSpec feature_spec_from_json(const json& j) {
  FeatureSpec f;
  f.blocks.clear();
  for (const auto& jb : j.at("blocks")) {
    FeatureBlock b;
    const std::string kind = jb.at("kind").get<std::string>();
    if (kind == "identity")
      b.kind = FeatureKind::Identity;
    else if (kind == "sincos")
      b.kind = FeatureKind::SinCos;
    else if (kind == "pair_distances")
      b.kind = FeatureKind::PairDistances;
    else
      throw SpecError("unknown feature kind: " + kind);
    b.scale = jb.value("scale", 1.0);
    if (jb.contains("pairs"))
      for (const auto& pp : jb["pairs"])
        b.pairs.emplace_back(pp[0].get<int>(), pp[1].get<int>());
    f.blocks.push_back(b);
  }
  return f;
}

json to_json(const Scaler& s) {
  return {{"mean", vec_to_json(s.mean)},
          {"std", vec_to_json(s.std)},
          {"fitted", s.fitted}};
}

Scaler scaler_from_json(const json& j) {
  Scaler s;
  s.mean = vec_from_json(j.at("mean"));
  s.std = vec_from_json(j.at("std"));
  s.fitted = j.value("fitted", true);
  return s;
}

json to_json(const TicaModel& m) {
  return {{"lag", m.lag},
          {"mean", vec_to_json(m.mean)},
          {"c00", mat_to_json(m.c00)},
          {"c0t", mat_to_json(m.c0t)},
          {"eigenvalues", vec_to_json(m.eigenvalues)},
          {"components", mat_to_json(m.components)},
          {"penalty", m.penalty},
          {"n_features_retained", m.n_features_retained},
          {"shrinkage", m.shrinkage}};
}

TicaModel tica_from_json(const json& j) {
  TicaModel m;
  m.lag = j.at("lag").get<long>();
  m.mean = vec_from_json(j.at("mean"));
  m.c00 = mat_from_json(j.at("c00"));
  m.c0t = mat_from_json(j.at("c0t"));
  m.eigenvalues = vec_from_json(j.at("eigenvalues"));
  m.components = mat_from_json(j.at("components"));
  m.penalty = j.value("penalty", 0.0);
  m.n_features_retained =
      j.value("n_features_retained", std::vector<int>{});
  m.shrinkage = j.value("shrinkage", 0.0);
  return m;
}

namespace {
json layers_to_json(const std::vector<DenseLayer>& layers) {
  json a = json::array();
  for (const auto& l : layers)
    a.push_back({{"W", mat_to_json(l.W)}, {"b", vec_to_json(l.b)}});
  return a;
}

std::vector<DenseLayer> layers_from_json(const json& j) {
  std::vector<DenseLayer> out;
  for (const auto& jl : j)
    out.push_back({mat_from_json(jl.at("W")), vec_from_json(jl.at("b"))});
  return out;
}
}  // namespace

json to_json(const VdeModel& m) {
  json report = json::array();
  for (const auto& e : m.report)
    report.push_back(
        {{"recon", e.recon}, {"autocorr", e.autocorr}, {"total", e.total}});
  return {{"encoder", layers_to_json(m.encoder)},
          {"decoder", layers_to_json(m.decoder)},
          {"activation", to_string(m.activation)},
          {"noise_scale", m.noise_scale},
          {"lag", m.lag},
          {"alpha", m.alpha},
          {"seed", m.seed},
          {"report", report}};
}

VdeModel vde_from_json(const json& j) {
  VdeModel m;
  m.encoder = layers_from_json(j.at("encoder"));
  m.decoder = layers_from_json(j.at("decoder"));
  m.activation = activation_from_string(j.at("activation").get<std::string>());
  m.noise_scale = j.value("noise_scale", 0.1);
  m.lag = j.value("lag", 1L);
  m.alpha = j.value("alpha", 1.0);
  m.seed = j.value("seed", 0ULL);
  if (j.contains("report"))
    for (const auto& je : j["report"])
      m.report.push_back({je.value("recon", 0.0), je.value("autocorr", 0.0),
                          je.value("total", 0.0)});
  return m;
}

json to_json(const CvPipeline& p) {
  json j{{"raw_dim", p.raw_dim},
         {"features", to_json(p.features)},
         {"encoder", to_json(p.encoder)}};
  if (p.scaler) j["scaler"] = to_json(*p.scaler);
  if (p.tica) {
    j["tica"] = to_json(*p.tica);
    j["n_tics"] = p.n_tics;
  }
  if (!p.input_permutation.empty())
    j["input_permutation"] = p.input_permutation;
  return j;
}

CvPipeline pipeline_from_json(const json& j) {
  CvPipeline p;
  p.raw_dim = j.at("raw_dim").get<int>();
  p.features = feature_spec_from_json(j.at("features"));
  p.encoder = vde_from_json(j.at("encoder"));
  if (j.contains("scaler")) p.scaler = scaler_from_json(j["scaler"]);
  if (j.contains("tica")) {
    p.tica = tica_from_json(j["tica"]);
    p.n_tics = j.value("n_tics", 1);
  }
  if (j.contains("input_permutation"))
    p.input_permutation = j["input_permutation"].get<std::vector<int>>();
  return p;
}

json to_json(const MetadConfig& c) {
  json j{{"h0", c.h0},
         {"sigma", c.sigma},
         {"gamma", c.gamma},
         {"drop_period", c.drop_period},
         {"grid_lo", c.grid_lo},
         {"grid_hi", c.grid_hi},
         {"n_bins", c.n_bins},
         {"n_walkers", c.n_walkers},
         {"read_stride", c.read_stride},
         {"equilibration_discard", c.equilibration_discard}};
  if (c.interval_lo) j["interval_lo"] = *c.interval_lo;
  if (c.interval_hi) j["interval_hi"] = *c.interval_hi;
  return j;
}

MetadConfig metad_config_from_json(const json& j) {
  MetadConfig c;
  c.h0 = j.value("h0", 1.0);
  c.sigma = j.value("sigma", 0.1);
  c.gamma = j.value("gamma", 6.0);
  c.drop_period = j.value("drop_period", 500L);
  c.grid_lo = j.value("grid_lo", -2.0);
  c.grid_hi = j.value("grid_hi", 2.0);
  c.n_bins = j.value("n_bins", 512);
  c.n_walkers = j.value("n_walkers", 1);
  c.read_stride = j.value("read_stride", 10000L);
  c.equilibration_discard = j.value("equilibration_discard", 0L);
  if (j.contains("interval_lo")) c.interval_lo = j["interval_lo"].get<double>();
  if (j.contains("interval_hi")) c.interval_hi = j["interval_hi"].get<double>();
  return c;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory& traj) {
  std::ostringstream os;
  os << "t";
  for (Eigen::Index c = 0; c < traj.dim(); ++c) os << ",x" << c;
  os << "\n";
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < traj.n_frames(); ++r) {
    os << (static_cast<double>(r + 1) * traj.dt_record);
    for (Eigen::Index c = 0; c < traj.dim(); ++c) os << "," << traj.frames(r, c);
    os << "\n";
  }
  write_text(path, os.str());
}

void write_trajectory_sidecar(const std::filesystem::path& path,
                              const Trajectory& traj, const Thermostat& th,
                              long save_stride) {
  json j{{"potential", to_json(traj.potential)},
         {"thermostat", to_json(th)},
         {"seed", traj.seed},
         {"save_stride", save_stride},
         {"dt_record", traj.dt_record}};
  write_text(path, j.dump(2));
}

Mat read_matrix_csv(const std::filesystem::path& path,
                    std::vector<std::string>* header) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty csv");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (header) *header = cols;
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    rows.push_back(std::move(row));
  }
  Mat m(rows.size(), cols.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) m(r, c) = rows[r][c];
  return m;
}

Trajectory read_trajectory_csv(const std::filesystem::path& csv,
                               const std::filesystem::path& sidecar) {
  Mat m = read_matrix_csv(csv);
  json j = json::parse(read_text(sidecar));
  Trajectory traj;
  traj.frames = m.rightCols(m.cols() - 1);
  traj.dt_record = j.value("dt_record", 0.0);
  traj.seed = j.value("seed", 0ULL);
  traj.potential = potential_from_json(j.at("potential"));
  return traj;
}

void write_matrix_csv(const std::filesystem::path& path, const Mat& X,
                      const std::vector<std::string>& header) {
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i)
    os << (i ? "," : "") << header[i];
  os << "\n" << std::setprecision(17);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      os << (c ? "," : "") << X(r, c);
    os << "\n";
  }
  write_text(path, os.str());
}

void write_hills_csv(const std::filesystem::path& path,
                     const std::vector<Hill>& hills, double dt) {
  std::ostringstream os;
  os << "t,walker,center,sigma,height\n" << std::setprecision(17);
  for (const auto& h : hills)
    os << (static_cast<double>(h.t) * dt) << "," << h.walker << "," << h.center
       << "," << h.sigma << "," << h.height << "\n";
  write_text(path, os.str());
}

std::vector<Hill> read_hills_csv(const std::filesystem::path& path,
                                 double dt) {
  Mat m = read_matrix_csv(path);
  std::vector<Hill> hills;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Hill h;
    h.t = static_cast<long>(std::llround(m(r, 0) / dt));
    h.walker = static_cast<int>(m(r, 1));
    h.center = m(r, 2);
    h.sigma = m(r, 3);
    h.height = m(r, 4);
    hills.push_back(h);
  }
  return hills;
}

void write_biased_trajectory_csv(const std::filesystem::path& path,
                                 const BiasedTrajectory& traj) {
  std::ostringstream os;
  os << "t";
  for (Eigen::Index c = 0; c < traj.frames.cols(); ++c) os << ",x" << c;
  os << ",s,V_bias\n" << std::setprecision(17);
  for (Eigen::Index r = 0; r < traj.frames.rows(); ++r) {
    os << (static_cast<double>(r + 1) * traj.dt_record);
    for (Eigen::Index c = 0; c < traj.frames.cols(); ++c)
      os << "," << traj.frames(r, c);
    os << "," << traj.s[r] << "," << traj.v_bias[r] << "\n";
  }
  write_text(path, os.str());
}

void write_fes_csv(const std::filesystem::path& path, const FesEstimate& fes) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,free_energy_kT\n" << std::setprecision(17);
  for (Eigen::Index b = 0; b + 1 < fes.edges.size(); ++b)
    os << fes.edges[b] << "," << fes.edges[b + 1] << "," << fes.free_energy[b]
       << "\n";
  write_text(path, os.str());
}

void write_svg_lines(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Mat>>& series,
                     const std::string& x_label, const std::string& y_label) {
  const int W = 720, H = 480, M = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [name, pts] : series) {
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      if (!std::isfinite(pts(r, 0)) || !std::isfinite(pts(r, 1))) continue;
      xmin = std::min(xmin, pts(r, 0));
      xmax = std::max(xmax, pts(r, 0));
      ymin = std::min(ymin, pts(r, 1));
      ymax = std::max(ymax, pts(r, 1));
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto sx = [&](double x) {
    return M + (x - xmin) / (xmax - xmin) * (W - 2 * M);
  };
  auto sy = [&](double y) {
    return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M);
  };
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
     << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<line x1='" << M << "' y1='" << H - M << "' x2='" << W - M
     << "' y2='" << H - M << "' stroke='black'/>\n";
  os << "<line x1='" << M << "' y1='" << M << "' x2='" << M << "' y2='"
     << H - M << "' stroke='black'/>\n";
  os << "<text x='" << W / 2 << "' y='" << H - 15 << "'>" << x_label
     << "</text>\n";
  os << "<text x='15' y='" << H / 2 << "' transform='rotate(-90 15 "
     << H / 2 << ")'>" << y_label << "</text>\n";
  int ci = 0;
  for (const auto& [name, pts] : series) {
    os << "<!-- series: " << name << " -->\n";
    os << "<polyline fill='none' stroke='" << colors[ci % 6]
       << "' stroke-width='1.5' points='";
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      if (!std::isfinite(pts(r, 1))) continue;
      os << sx(pts(r, 0)) << "," << sy(pts(r, 1)) << " ";
    }
    os << "'/>\n";
    os << "<text x='" << W - M + 4 << "' y='" << M + 16 * ci << "' fill='"
       << colors[ci % 6] << "' font-size='11'>" << name << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  write_text(path, os.str());
}

std::string string_hash(const std::string& content) {
  std::uint64_t h1 = 14695981039346656037ull, h2 = 0x27d4eb2f165667c5ull;
  for (unsigned char c : content) {
    h1 = (h1 ^ c) * 1099511628211ull;
    h2 = (h2 ^ (c * 0x9e3779b97f4a7c15ull)) * 0xc2b2ae3d27d4eb4full;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h1 << std::setw(16)
     << h2;
  return os.str();
}

std::string file_sha_like_hash(const std::filesystem::path& path) {
  return string_hash(read_text(path));
}

}  // namespace esw
