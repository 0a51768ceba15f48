#pragma once

#include "esw/cvexpr.hpp"
#include "esw/reweight.hpp"
#include "esw/transfer.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace esw {

using json = nlohmann::json;

// json round-trips
json to_json(const PotentialSpec& p);
PotentialSpec potential_from_json(const json& j);
json to_json(const Thermostat& t);
Thermostat thermostat_from_json(const json& j);
json to_json(const FeatureSpec& f);
FeatureSpec feature_spec_from_json(const json& j);
json to_json(const Scaler& s);
Scaler scaler_from_json(const json& j);
json to_json(const TicaModel& m);
TicaModel tica_from_json(const json& j);
json to_json(const VdeModel& m);
VdeModel vde_from_json(const json& j);
json to_json(const CvPipeline& p);
CvPipeline pipeline_from_json(const json& j);
json to_json(const MetadConfig& c);
MetadConfig metad_config_from_json(const json& j);

// csv files
void write_trajectory_csv(const std::filesystem::path& path,
                          const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& csv,
                               const std::filesystem::path& sidecar);
void write_trajectory_sidecar(const std::filesystem::path& path,
                              const Trajectory& traj,
                              const Thermostat& th, long save_stride);
void write_matrix_csv(const std::filesystem::path& path, const Mat& X,
                      const std::vector<std::string>& header);
Mat read_matrix_csv(const std::filesystem::path& path,
                    std::vector<std::string>* header = nullptr);
void write_hills_csv(const std::filesystem::path& path,
                     const std::vector<Hill>& hills, double dt);
std::vector<Hill> read_hills_csv(const std::filesystem::path& path, double dt);
void write_biased_trajectory_csv(const std::filesystem::path& path,
                                 const BiasedTrajectory& traj);
void write_fes_csv(const std::filesystem::path& path, const FesEstimate& fes);

// minimal self-contained SVG line plot; one polyline per series
void write_svg_lines(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Mat>>& series,
                     const std::string& x_label, const std::string& y_label);

std::string file_sha_like_hash(const std::filesystem::path& path);
std::string string_hash(const std::string& content);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace esw
