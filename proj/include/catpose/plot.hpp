#pragma once

#include <string>
#include <vector>

namespace catpose {

// Minimal line plot rendered straight to PNG; enough for loss curves and
// precision-threshold figures.
void plot_curve(const std::vector<double>& x, const std::vector<double>& y,
                const std::string& x_label, const std::string& y_label, const std::string& path,
                const std::string& config_hash = "");

}  // namespace catpose
