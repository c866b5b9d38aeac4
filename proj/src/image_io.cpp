#include "camannot/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "camannot/error.hpp"

namespace camannot {

RgbImage load_rgb_image(const std::string& path) {
  const cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode image " + path);

  RgbImage img;
  img.width = static_cast<std::size_t>(bgr.cols);
  img.height = static_cast<std::size_t>(bgr.rows);
  img.data.resize(img.width * img.height * 3);
  std::size_t k = 0;
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.data[k++] = row[x][2];
      img.data[k++] = row[x][1];
      img.data[k++] = row[x][0];
    }
  }
  return img;
}

}  // namespace camannot
