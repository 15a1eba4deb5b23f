#pragma once

// JSON case files, schema "acdc-case/1". See README.md for the field list.

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "acdc/netmodel.hpp"

namespace acdc {

inline constexpr const char* kCaseSchema = "acdc-case/1";

/// Reads, validates and derives (admittance matrix, contingency list).
Network load_case(const std::filesystem::path& path);
Network parse_case(const nlohmann::json& doc);
Network parse_case_text(const std::string& text);

nlohmann::json case_to_json(const Network& net);
void save_case(const Network& net, const std::filesystem::path& path);

}  // namespace acdc
