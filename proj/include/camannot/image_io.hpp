#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace camannot {

/// 8-bit interleaved RGB pixels.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;  // size = width * height * 3

  std::size_t pixel_count() const { return width * height; }
};

/// Decodes any format the image codec library understands (JPEG, PNG, PPM...).
/// Throws camannot::Error when the file is missing or undecodable.
RgbImage load_rgb_image(const std::string& path);

}  // namespace camannot
