#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "syndiff/train.hpp"

namespace syndiff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Invalid flags, config files, or parameter values (exit code 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Applies the flat JSON keys of a config file to `config`. Unknown keys and
/// wrongly typed values are usage errors.
void apply_config_json(const std::string& text, TrainConfig& config);
/// Effective configuration as flat JSON, the same keys the file accepts.
std::string config_to_json(const TrainConfig& config);

/// Runs one subcommand; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace syndiff::cli
