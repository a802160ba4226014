#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "egocorr/motion.hpp"
#include "egocorr/video_io.hpp"

namespace testing {

// Smooth analytic texture: a sum of oriented sinusoids with periods 9-40 px.
// Values at any subpixel position are exact, so shifted renders are exact.
class Texture {
 public:
  explicit Texture(std::uint64_t seed, int waves = 14) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI), period(9.0, 40.0), phase(0.0, 2.0 * M_PI);
    for (int i = 0; i < waves; ++i) {
      const double a = angle(rng), p = period(rng);
      waves_.push_back({2.0 * M_PI * std::cos(a) / p, 2.0 * M_PI * std::sin(a) / p, phase(rng)});
    }
  }

  double operator()(double x, double y) const {
    double s = 0.0;
    for (const auto& w : waves_) s += std::sin(w.kx * x + w.ky * y + w.phase);
    return 0.5 + 0.45 * s / std::sqrt(0.5 * static_cast<double>(waves_.size())) / 2.2;
  }

 private:
  struct Wave {
    double kx, ky, phase;
  };
  std::vector<Wave> waves_;
};

// RGB CV_32FC3 in [0, 1]: pixel (x, y) shows texture point (x - dx, y - dy),
// i.e. content moved by (dx, dy).
inline cv::Mat render(const Texture& tex, int width, int height, double dx = 0.0, double dy = 0.0) {
  cv::Mat img(height, width, CV_32FC3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float g = static_cast<float>(std::clamp(tex(x - dx, y - dy), 0.0, 1.0));
      img.at<cv::Vec3f>(y, x) = {g, 0.8f * g + 0.1f, 0.6f * g + 0.2f};
    }
  return img;
}

inline egocorr::Frame frame(const Texture& tex, int width, int height, double dx = 0.0, double dy = 0.0) {
  return egocorr::frame_from_rgb(render(tex, width, height, dx, dy));
}

inline egocorr::Frame flat_frame(int width, int height, float value = 0.5f) {
  return egocorr::frame_from_rgb(cv::Mat(height, width, CV_32FC3, cv::Scalar::all(value)));
}

inline egocorr::FlowField constant_flow(int width, int height, float u, float v) {
  return {cv::Mat(height, width, CV_32FC1, cv::Scalar(u)), cv::Mat(height, width, CV_32FC1, cv::Scalar(v))};
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("egocorr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> standardized(std::vector<double> x) {
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : x) v = (v - mean) / sd;
  return x;
}

inline std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (double& v : x) v = nd(rng);
  return x;
}

}  // namespace testing
