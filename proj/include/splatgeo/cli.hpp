#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "splatgeo/optimize.hpp"

namespace splatgeo {

inline constexpr const char* kRunSchema = "splatgeo.run/1";

// Exit codes: 0 success, 1 domain error, 2 usage error.
int run_cli(int argc, char** argv);

nlohmann::json config_to_json(const OptimizeConfig& cfg);
// Missing keys keep the values already in `cfg`.
void config_from_json(const nlohmann::json& j, OptimizeConfig& cfg);

// Writes report.csv, report.json, poses.json, gaussians.ply, target.png and
// config.json into dir. Contents depend only on the inputs, never on timing.
void write_run_outputs(const SceneBundle& bundle, const OptimizationResult& result, const std::filesystem::path& dir);

nlohmann::json pose_json(const RigidTransform& T);
RigidTransform pose_from_json_matrix(const nlohmann::json& rows);

}  // namespace splatgeo
