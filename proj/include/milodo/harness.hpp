#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace milodo {

// Command-line overrides layered on top of the config file.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> precision;  // "f64" | "f32"
  std::optional<std::string> out;
};

// Merges the overrides into a config JSON document (top-level keys seed,
// threads, precision, out). Throws on malformed JSON.
std::string apply_overrides(const std::string& config_json, const CliOverrides& ov);

// Each command parses its JSON config, runs, and appends a human-readable
// report. Exit codes: 0 success, 1 property/convergence failure, 2 config or
// IO error. Exceptions never escape.
int cmd_gen_data(const std::string& config_json, std::string& report);
int cmd_train(const std::string& config_json, std::string& report);
int cmd_eval(const std::string& config_json, std::string& report);
int cmd_verify(const std::string& config_json, std::string& report);

}  // namespace milodo
