#pragma once

// Declarative run configuration of the acdcopf tool. Flags override the file.

#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "acdc/evo.hpp"
#include "acdc/opf.hpp"
#include "acdc/powerflow.hpp"
#include "acdc/screen.hpp"

namespace acdc::cli {

inline constexpr const char* kConfigSchema = "acdcopf-config/1";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScreenSettings {
  SamplerConfig sampler;
  LassoConfig lasso;
  std::size_t min_samples = 10;
};

struct RunConfig {
  std::string case_path;
  std::string controls_path;  // optional controls override
  std::string model_path;     // optional screening model
  std::uint64_t seed = 1;
  EvoConfig evo;
  ScreenSettings screen;
  CorrectiveOptions corrective;
  SolverOptions solver;
  std::size_t clusters = 2;
  // Execution settings; they do not change results and stay out of the hash.
  int workers = 1;
  std::string output_dir = "acdcopf-out";
};

/// Unknown keys are rejected so that typos do not pass silently.
RunConfig config_from_json(const nlohmann::json& doc);

/// Result-relevant settings only (no workers, no output directory).
nlohmann::json config_to_json(const RunConfig& cfg);

/// FNV-1a of config_to_json, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace acdc::cli
