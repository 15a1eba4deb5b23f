#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdc/controls.hpp"
#include "acdc/evo.hpp"

namespace acdc::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kValidation = 2, kDiverged = 3, kInfeasible = 4, kIo = 5 };

/// Entry point of the acdcopf tool; returns the process exit code.
int run_app(int argc, const char* const* argv);

/// Archive file body: control names once, then per member the objectives,
/// violation, screened set and control values in layout order.
nlohmann::json archive_to_json(const Population& archive, const ControlLayout& layout);
Population archive_from_json(const nlohmann::json& doc);

/// {"name": value} overrides on top of the case's own operating point.
ControlVector read_controls(const nlohmann::json& doc, const ControlLayout& layout, const ControlVector& base);

}  // namespace acdc::cli
