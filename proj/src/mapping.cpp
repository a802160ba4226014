#include "egocorr/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <opencv2/imgcodecs.hpp>

#include "egocorr/error.hpp"
#include "egocorr/video_io.hpp"

namespace egocorr {

double candidate_distance(cv::Point2d pixel, int t, const Trajectory& traj) {
  if (!traj.alive_at(t)) return std::numeric_limits<double>::infinity();
  const cv::Point2f p = traj.points[static_cast<std::size_t>(t - traj.begin_frame)];
  const double dx = pixel.x - static_cast<double>(p.x);
  const double dy = pixel.y - static_cast<double>(p.y);
  return std::sqrt(dx * dx + dy * dy);
}

cv::Mat build_map(int t, int width, int height, std::span<const Trajectory> candidates,
                  std::span<const double> scores, double radius) {
  if (scores.size() != candidates.size()) throw Error("build_map: one score per candidate required");
  cv::Mat out = cv::Mat::zeros(height, width, CV_64FC1);
  cv::Mat best(height, width, CV_64FC1, cv::Scalar(std::numeric_limits<double>::infinity()));
  // Splat each live candidate onto its radius disc; a writer replaces the
  // current owner only when strictly nearer, so lower indices win ties.
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!c.alive_at(t)) continue;
    const cv::Point2f p = c.points[static_cast<std::size_t>(t - c.begin_frame)];
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y + radius)));
    for (int y = y0; y <= y1; ++y) {
      auto* b = best.ptr<double>(y);
      auto* o = out.ptr<double>(y);
      for (int x = x0; x <= x1; ++x) {
        const double d = candidate_distance({static_cast<double>(x), static_cast<double>(y)}, t, c);
        if (d <= radius && d < b[x]) {
          b[x] = d;
          o[x] = scores[i];
        }
      }
    }
  }
  return out;
}

cv::Mat export_mask(const cv::Mat& map, double threshold) {
  CV_Assert(map.type() == CV_64FC1);
  cv::Mat mask(map.size(), CV_8UC1);
  for (int y = 0; y < map.rows; ++y) {
    const auto* m = map.ptr<double>(y);
    auto* o = mask.ptr<std::uint8_t>(y);
    for (int x = 0; x < map.cols; ++x) o[x] = (m[x] > 0.0 && m[x] >= threshold) ? 255 : 0;
  }
  return mask;
}

double pixel_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error("pixel_auc: size mismatch");
  std::size_t n1 = 0;
  for (auto l : labels) n1 += l ? 1 : 0;
  const std::size_t n0 = labels.size() - n1;
  if (n1 == 0 || n0 == 0) throw DataError("degenerate ground truth");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) positive_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(n1), q = static_cast<double>(n0);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

void AucAccumulator::add(const cv::Mat& map, const cv::Mat& truth) {
  CV_Assert(map.type() == CV_64FC1 && truth.type() == CV_8UC1 && map.size() == truth.size());
  for (int y = 0; y < map.rows; ++y) {
    const auto* m = map.ptr<double>(y);
    const auto* t = truth.ptr<std::uint8_t>(y);
    for (int x = 0; x < map.cols; ++x) {
      scores_.push_back(m[x]);
      labels_.push_back(t[x] ? 1 : 0);
    }
  }
}

void write_map_pgm(const std::filesystem::path& path, const cv::Mat& map) {
  CV_Assert(map.type() == CV_64FC1);
  cv::Mat plane(map.size(), CV_16UC1);
  for (int y = 0; y < map.rows; ++y) {
    const auto* m = map.ptr<double>(y);
    auto* o = plane.ptr<std::uint16_t>(y);
    for (int x = 0; x < map.cols; ++x) {
      o[x] = static_cast<std::uint16_t>(std::lround(std::clamp(m[x], 0.0, 1.0) * 65535.0));
    }
  }
  write_pgm(path, plane);
}

cv::Mat read_map_pgm(const std::filesystem::path& path) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty() || raw.channels() != 1) throw DataError("cannot read map " + path.string());
  cv::Mat out;
  raw.convertTo(out, CV_64FC1, raw.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0);
  return out;
}

}  // namespace egocorr
