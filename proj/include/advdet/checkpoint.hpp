#pragma once

#include <string>

#include <json.hpp>

#include "advdet/model.hpp"

namespace advdet::models {

// Versioned model container. Layout:
//   "AATCKPT" | u32 version | u64 header length | header JSON | raw f64 LE blobs
// The header carries the arch spec, caller metadata (seed, epochs, attack
// config used), and the parameter manifest in payload order.
void save_checkpoint(const std::string& path, const Model& m, const nlohmann::json& meta);

struct Checkpoint {
  Model model;
  nlohmann::json meta;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace advdet::models
