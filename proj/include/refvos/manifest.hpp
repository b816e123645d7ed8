#pragma once

#include <string>

#include "refvos/types.hpp"

namespace refvos {

// Manifest is a single JSON document; frame/mask PNGs live in per-clip
// directories referenced by relative paths. Clips come back ordered by
// clip_id with all type invariants validated.
Dataset load_manifest(const std::string& path);

// Writes the manifest plus all referenced PNGs; load_manifest(path) then
// reconstructs an equal value and a second save reproduces identical bytes.
void save_manifest(const Dataset& data, const std::string& path);

}  // namespace refvos
