#pragma once

// Simulated crowd workers: turn a microtask document plus the effective
// slider values a worker intends into the raw positions it would submit.

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace testsupport {

/// `target_alpha(session_id)` gives the intended effective value per target slot.
std::vector<double> raw_alphas(const nlohmann::json& microtask,
                               const std::function<double(const std::string&)>& target_alpha, double check_alpha);

/// Raw bytes of a file.
std::string read_bytes(const std::filesystem::path& path);

/// PNG bytes of a procedural scene, written through the reference encoder.
std::string scene_png(int index, int width, int height);

}  // namespace testsupport
