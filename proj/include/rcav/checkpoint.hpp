#pragma once

#include <filesystem>

#include "json.hpp"
#include "rcav/nn.hpp"

namespace rcav::nn {

// Writes `dir/manifest.json` (layer specs, probe layers, sha256 per parameter
// file) plus one RCVT file per parameter tensor. `extra` is stored verbatim
// under the "extra" key.
void save_checkpoint(const Model& model, const std::filesystem::path& dir, const nlohmann::json& extra = {});

// Verifies every recorded sha256 before rebuilding the model; FormatError on
// mismatch, MissingArtifactError when files are absent.
Model load_checkpoint(const std::filesystem::path& dir);

nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace rcav::nn
