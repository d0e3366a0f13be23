#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "catpose/types.hpp"

namespace catpose {

// 16-bit grayscale PNG, values in millimeters (depth convention).
void write_depth_png(const Mat& depth_meters, const std::string& path,
                     const std::string& config_hash = "");
Mat read_depth_png(const std::string& path);

// 8-bit grayscale PNG (masks).
void write_mask_png(const Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>& mask,
                    const std::string& path);
Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> read_mask_png(const std::string& path);

// 8-bit RGB PNG from interleaved row-major pixel data.
void write_rgb_png(const std::vector<uint8_t>& pixels, int width, int height,
                   const std::string& path, const std::string& config_hash = "");

// Lossless float container for exact depth round-trips in tests.
void write_depth_raw(const Mat& depth_meters, const std::string& path);
Mat read_depth_raw(const std::string& path);

}  // namespace catpose
