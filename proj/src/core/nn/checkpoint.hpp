#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "core/nn/params.hpp"

namespace ftc::nn {

// Checkpoint = <prefix>.json (manifest: named tensors with shapes, plus a
// free-form "meta" object) and <prefix>.bin (little-endian float32 values
// concatenated in manifest order).

void save_checkpoint(const std::string& prefix, const ParamStore& store,
                     const nlohmann::json& meta);

// appends tensors in manifest order to an empty store
nlohmann::json load_checkpoint(const std::string& prefix, ParamStore& store);

// SHA-256 hex digest over manifest bytes followed by blob bytes
std::string checkpoint_hash(const std::string& prefix);

// byte-wise comparison of one named tensor across two stores
bool tensors_identical(const ParamStore& a, const ParamStore& b, const std::string& name);

}  // namespace ftc::nn
