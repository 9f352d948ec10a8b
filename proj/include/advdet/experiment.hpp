#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "advdet/aat.hpp"
#include "advdet/attack.hpp"

namespace advdet::io {

// FNV-1a over the canonical (sorted-key) JSON dump, as a 16-hex-digit string.
// Stamped into every artifact so reports can be matched to the config that
// produced them.
std::string config_hash(const nlohmann::json& config);

// temp-and-rename so readers never observe a partial file
void atomic_write(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

// Declarative run description, schema-checked before execution.
struct ExperimentConfig {
  nlohmann::json j;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_json(nlohmann::json j);
  std::string hash() const { return config_hash(j); }
};

// json <-> config structs for the pieces experiments serialize
nlohmann::json pgd_to_json(const attacks::PgdConfig& cfg);
attacks::PgdConfig pgd_from_json(const nlohmann::json& j);
nlohmann::json ball_to_json(const attacks::NormBall& ball);
attacks::NormBall ball_from_json(const nlohmann::json& j);
nlohmann::json aat_to_json(const aat::AatConfig& cfg);
aat::AatConfig aat_from_json(const nlohmann::json& j);

// attack manifest embedded in reports and tensor dumps
nlohmann::json attack_manifest(const std::string& loss_kind, const attacks::NormBall* ball,
                               const attacks::PgdConfig& cfg);

// raw tensor dump: u32 ndim, i64 dims, f64 LE payload
void write_tensor_dump(const std::string& path, const nn::Tensor& t);
nn::Tensor read_tensor_dump(const std::string& path);

}  // namespace advdet::io
