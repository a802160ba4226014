#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "egocorr/candidates.hpp"

namespace egocorr {

// Distance from a pixel to the trajectory's point at frame t; +inf when the
// trajectory is not alive at t.
double candidate_distance(cv::Point2d pixel, int t, const Trajectory& traj);

// Targetness plane of frame t (CV_64FC1). Each pixel takes the score of its
// nearest live candidate when that distance is <= radius, else 0; ties go to
// the lower candidate index.
cv::Mat build_map(int t, int width, int height, std::span<const Trajectory> candidates,
                  std::span<const double> scores, double radius);

// Pixels of the map support (> 0) whose score is >= threshold, as 0/255.
cv::Mat export_mask(const cv::Mat& map, double threshold);

// Rank-based ROC AUC (Mann-Whitney with midranks for ties). Throws
// DataError("degenerate ground truth") when only one class is present.
double pixel_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Accumulates pixel scores/labels over several frames before computing the AUC.
class AucAccumulator {
 public:
  // map: CV_64FC1 scores; truth: CV_8UC1, nonzero = target.
  void add(const cv::Mat& map, const cv::Mat& truth);
  double auc() const { return pixel_auc(scores_, labels_); }
  std::size_t size() const { return scores_.size(); }

 private:
  std::vector<double> scores_;
  std::vector<std::uint8_t> labels_;
};

// Score * 65535, rounded, as a 16-bit PGM.
void write_map_pgm(const std::filesystem::path& path, const cv::Mat& map);
cv::Mat read_map_pgm(const std::filesystem::path& path);

}  // namespace egocorr
