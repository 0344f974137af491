#include "davsp/image_io.hpp"

#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace davsp {

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  image.validate();
  const int h = static_cast<int>(image.height());
  const int w = static_cast<int>(image.width());
  cv::Mat bgr(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto q = [&](std::size_t c) {
        return static_cast<std::uint8_t>(std::lround(image.at(c, y, x) * 255.0f));
      };
      // OpenCV stores BGR
      bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(q(2), q(1), q(0));
    }
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw io_error("failed to write png: " + path.string());
  }
}

ImageTensor read_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw io_error("failed to read image: " + path.string());
  ImageTensor image(static_cast<std::size_t>(bgr.rows), static_cast<std::size_t>(bgr.cols));
  for (int y = 0; y < bgr.rows; ++y) {
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b px = bgr.at<cv::Vec3b>(y, x);
      image.at(0, y, x) = px[2] / 255.0f;
      image.at(1, y, x) = px[1] / 255.0f;
      image.at(2, y, x) = px[0] / 255.0f;
    }
  }
  return image;
}

ImageTensor quantize_8bit(const ImageTensor& image) {
  ImageTensor out = image;
  for (float& v : out.t.values()) {
    v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
  }
  return out;
}

}  // namespace davsp
