#pragma once

#include <string>

#include "ip/models.hpp"

namespace ip {

// Versioned JSON checkpoints, one file per model. Loading validates the
// kind tag and every parameter shape; mismatches throw with the offending
// field named.
void save_spatial_model(const std::string& path, const SpatialModel& model,
                        const std::string& config_hash);
void save_temporal_model(const std::string& path, const TemporalModel& model,
                         const std::string& config_hash);
void save_structural_model(const std::string& path, const StructuralModel& model,
                           const std::string& kind, const std::string& config_hash);

SpatialModel load_spatial_model(const std::string& path);
TemporalModel load_temporal_model(const std::string& path);
StructuralModel load_structural_model(const std::string& path, const std::string& kind);

// The four checkpoints under dir: spatial.json, temporal.json,
// spatial_structural.json, temporal_structural.json.
void save_model_bundle(const std::string& dir, const ModelBundle& bundle,
                       const std::string& config_hash);
ModelBundle load_model_bundle(const std::string& dir);

}  // namespace ip
