#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "toilcast/models.hpp"
#include "toilcast/series.hpp"

namespace toilcast::checkpoint {

inline constexpr const char* kFormat = "toilcast-checkpoint";
inline constexpr int kVersion = 1;

/// A trained model with everything needed to run it on raw data.
struct Checkpoint {
  models::Model model;
  WindowSpec window;
  AffineScaler scaler;
  std::string config_hash;  ///< hash of the run config that produced it
  std::string data_hash;    ///< hash of the data, split and scaling sections

  std::string checksum() const { return model.params().checksum(); }
};

nlohmann::json to_json(const Checkpoint& c);
Checkpoint from_json(const nlohmann::json& j);

void save(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

}  // namespace toilcast::checkpoint
