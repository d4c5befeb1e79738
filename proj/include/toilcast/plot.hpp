#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "toilcast/rolling.hpp"

namespace toilcast::plot {

/// Line chart of the measured first target with every trace overlaid.
/// Quantile traces add a shaded band between their outermost levels.
std::string render_svg(const std::vector<rolling::ForecastTrace>& traces, const TransformerDataset& valid,
                       const std::string& title = "top-oil temperature");

void write_svg(const std::vector<rolling::ForecastTrace>& traces, const TransformerDataset& valid,
               const std::filesystem::path& path);

}  // namespace toilcast::plot
