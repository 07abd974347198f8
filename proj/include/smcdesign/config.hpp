#ifndef SMCDESIGN_CONFIG_HPP_
#define SMCDESIGN_CONFIG_HPP_

#include "smcdesign/bench.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smcdesign {

// Malformed or inconsistent configuration. what() carries "<source>:<line>:<col>: ..."
// for syntax errors and "<source>: <field path>: ..." for field errors.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses a JSON benchmark configuration (format documented in README.md).
BenchmarkConfig parse_config(std::string_view text, std::string_view source_name = "<config>");

// Throws ConfigError ("file not found: <path>") if the file cannot be read.
BenchmarkConfig load_config(const std::filesystem::path& path);

}  // namespace smcdesign

#endif  // SMCDESIGN_CONFIG_HPP_
