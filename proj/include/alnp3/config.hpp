#pragma once

// Flat "key = value" configuration files. Blank lines and lines starting
// with '#' are ignored; unknown keys are errors naming the key.

#include <filesystem>
#include <string>

#include "alnp3/trainer.hpp"

namespace alnp3::config {

inline constexpr const char* kToolVersion = "0.1.0";

class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

train::TrainConfig parse_train_config(const std::string& text);
train::TrainConfig load_train_config(const std::filesystem::path& path);
// Canonical text form; parse_train_config(format(c)) == c.
std::string format(const train::TrainConfig& c);

}  // namespace alnp3::config
