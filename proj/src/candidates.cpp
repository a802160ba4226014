#include "egocorr/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "egocorr/error.hpp"

namespace egocorr {

std::array<double, kFeatureCount> CandidateFeatures::to_array() const {
  return {hsv_mean[0], hsv_mean[1], hsv_mean[2], hsv_std[0],     hsv_std[1],     hsv_std[2],
          motion_mean[0], motion_mean[1], motion_std[0], motion_std[1], length};
}

CandidateFeatures CandidateFeatures::from_array(const std::array<double, kFeatureCount>& a) {
  CandidateFeatures f;
  f.hsv_mean = {a[0], a[1], a[2]};
  f.hsv_std = {a[3], a[4], a[5]};
  f.motion_mean = {a[6], a[7]};
  f.motion_std = {a[8], a[9]};
  f.length = a[10];
  return f;
}

cv::Mat min_eigen_map(const cv::Mat& gray) {
  CV_Assert(gray.type() == CV_32FC1);
  cv::Mat gx, gy;
  cv::Sobel(gray, gx, CV_32F, 1, 0, 3, 1.0 / 8.0, 0.0, cv::BORDER_REFLECT_101);
  cv::Sobel(gray, gy, CV_32F, 0, 1, 3, 1.0 / 8.0, 0.0, cv::BORDER_REFLECT_101);
  cv::Mat xx = gx.mul(gx), xy = gx.mul(gy), yy = gy.mul(gy);
  const cv::Size window(3, 3);
  cv::boxFilter(xx, xx, CV_32F, window, cv::Point(-1, -1), true, cv::BORDER_REFLECT_101);
  cv::boxFilter(xy, xy, CV_32F, window, cv::Point(-1, -1), true, cv::BORDER_REFLECT_101);
  cv::boxFilter(yy, yy, CV_32F, window, cv::Point(-1, -1), true, cv::BORDER_REFLECT_101);
  cv::Mat out(gray.size(), CV_32FC1);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* a = xx.ptr<float>(y);
    const auto* b = xy.ptr<float>(y);
    const auto* c = yy.ptr<float>(y);
    auto* o = out.ptr<float>(y);
    for (int x = 0; x < gray.cols; ++x) {
      const double half_trace = 0.5 * (static_cast<double>(a[x]) + c[x]);
      const double half_diff = 0.5 * (static_cast<double>(a[x]) - c[x]);
      const double lambda = half_trace - std::sqrt(half_diff * half_diff + static_cast<double>(b[x]) * b[x]);
      o[x] = static_cast<float>(std::max(lambda, 0.0));
    }
  }
  return out;
}

namespace {

// Buckets of side e_W, so any point closer than e_W lies in the 3x3 neighbourhood.
class OccupancyGrid {
 public:
  OccupancyGrid(int width, int height, int step, const std::vector<cv::Point2f>& points)
      : step_(step), cols_(width / step + 1), rows_(height / step + 1), buckets_(static_cast<std::size_t>(cols_ * rows_)) {
    for (const auto& p : points) {
      const int cx = std::clamp(static_cast<int>(p.x) / step_, 0, cols_ - 1);
      const int cy = std::clamp(static_cast<int>(p.y) / step_, 0, rows_ - 1);
      buckets_[static_cast<std::size_t>(cy * cols_ + cx)].push_back(p);
    }
  }

  bool near(cv::Point2f q) const {
    const int cx = std::clamp(static_cast<int>(q.x) / step_, 0, cols_ - 1);
    const int cy = std::clamp(static_cast<int>(q.y) / step_, 0, rows_ - 1);
    const double limit = static_cast<double>(step_) * step_;
    for (int y = std::max(cy - 1, 0); y <= std::min(cy + 1, rows_ - 1); ++y) {
      for (int x = std::max(cx - 1, 0); x <= std::min(cx + 1, cols_ - 1); ++x) {
        for (const auto& p : buckets_[static_cast<std::size_t>(y * cols_ + x)]) {
          const double dx = static_cast<double>(p.x) - q.x, dy = static_cast<double>(p.y) - q.y;
          if (dx * dx + dy * dy < limit) return true;
        }
      }
    }
    return false;
  }

 private:
  int step_;
  int cols_;
  int rows_;
  std::vector<std::vector<cv::Point2f>> buckets_;
};

cv::Vec3f nearest_hsv(const cv::Mat& hsv, cv::Point2f p) {
  const int x = std::clamp(static_cast<int>(std::lround(p.x)), 0, hsv.cols - 1);
  const int y = std::clamp(static_cast<int>(std::lround(p.y)), 0, hsv.rows - 1);
  return hsv.at<cv::Vec3f>(y, x);
}

float nearest_value(const cv::Mat& plane, cv::Point2f p) {
  const int x = std::clamp(static_cast<int>(std::lround(p.x)), 0, plane.cols - 1);
  const int y = std::clamp(static_cast<int>(std::lround(p.y)), 0, plane.rows - 1);
  return plane.at<float>(y, x);
}

}  // namespace

std::vector<cv::Point2f> sample_points(const cv::Mat& min_eigen, const std::vector<cv::Point2f>& occupied,
                                       const PipelineConfig& config) {
  const int step = config.sample_step_e_w;
  const OccupancyGrid grid(min_eigen.cols, min_eigen.rows, step, occupied);
  std::vector<cv::Point2f> out;
  for (int y = step / 2; y < min_eigen.rows; y += step) {
    const auto* row = min_eigen.ptr<float>(y);
    for (int x = step / 2; x < min_eigen.cols; x += step) {
      if (!(static_cast<double>(row[x]) >= config.gftt_min_eigenvalue) || row[x] <= 0.0f) continue;
      const cv::Point2f p(static_cast<float>(x), static_cast<float>(y));
      if (grid.near(p)) continue;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<cv::Point2f> sample_points(const Frame& frame, const std::vector<cv::Point2f>& occupied,
                                       const PipelineConfig& config) {
  return sample_points(min_eigen_map(frame.gray), occupied, config);
}

CandidateFeatures compute_features(const std::vector<cv::Vec3f>& hsv_samples,
                                   const std::vector<MotionSample>& motion) {
  CandidateFeatures f;
  f.length = static_cast<double>(motion.size());
  const double n = static_cast<double>(hsv_samples.size());
  if (n > 0) {
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    double c = 0.0, s = 0.0;
    std::array<double, 2> sum{}, sum2{};
    for (const auto& x : hsv_samples) {
      c += std::cos(kTwoPi * x[0]);
      s += std::sin(kTwoPi * x[0]);
      for (int k = 0; k < 2; ++k) {
        sum[static_cast<std::size_t>(k)] += x[k + 1];
        sum2[static_cast<std::size_t>(k)] += static_cast<double>(x[k + 1]) * x[k + 1];
      }
    }
    c /= n;
    s /= n;
    double h = std::atan2(s, c) / kTwoPi;
    if (h < 0.0) h += 1.0;
    if (h >= 1.0) h -= 1.0;
    const double r = std::hypot(c, s);
    f.hsv_mean[0] = h;
    f.hsv_std[0] = r >= 1.0 - 1e-12 ? 0.0 : std::sqrt(-2.0 * std::log(std::max(r, 1e-300))) / kTwoPi;
    for (std::size_t k = 0; k < 2; ++k) {
      const double mean = sum[k] / n;
      f.hsv_mean[k + 1] = mean;
      f.hsv_std[k + 1] = std::sqrt(std::max(sum2[k] / n - mean * mean, 0.0));
    }
  }
  const double m = static_cast<double>(motion.size());
  if (m > 0) {
    double su = 0, sv = 0, su2 = 0, sv2 = 0;
    for (const auto& x : motion) {
      su += x.u;
      sv += x.v;
      su2 += static_cast<double>(x.u) * x.u;
      sv2 += static_cast<double>(x.v) * x.v;
    }
    f.motion_mean = {su / m, sv / m};
    f.motion_std = {std::sqrt(std::max(su2 / m - (su / m) * (su / m), 0.0)),
                    std::sqrt(std::max(sv2 / m - (sv / m) * (sv / m), 0.0))};
  }
  return f;
}

CandidateFeatures extract_features(const Trajectory& traj, const FrameSource& video) {
  if (traj.begin_frame < 0 || traj.end_frame() > video.frame_count()) {
    throw DataError("trajectory outside video");
  }
  std::vector<cv::Vec3f> hsv;
  hsv.reserve(traj.points.size());
  for (int k = 0; k < traj.length(); ++k) {
    const Frame f = video.frame(traj.begin_frame + k);
    hsv.push_back(nearest_hsv(f.hsv, traj.points[static_cast<std::size_t>(k)]));
  }
  return compute_features(hsv, traj.local_motion);
}

CandidateTracker::CandidateTracker(int width, int height, const PipelineConfig& config)
    : width_(width), height_(height), config_(config) {
  validate(config_);
}

void CandidateTracker::close(Track&& track) {
  if (static_cast<int>(track.points.size()) < config_.l_min) return;
  Trajectory out;
  out.begin_frame = track.begin;
  out.points = std::move(track.points);
  std::vector<float> u(track.motion.size()), v(track.motion.size());
  for (std::size_t k = 0; k < track.motion.size(); ++k) {
    u[k] = track.motion[k].u;
    v[k] = track.motion[k].v;
  }
  u = median_filter(u, config_.median_window);
  v = median_filter(v, config_.median_window);
  out.local_motion.resize(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) out.local_motion[k] = {u[k], v[k]};
  out.features = compute_features(track.hsv, out.local_motion);
  done_.emplace_back(track.id, std::move(out));
}

void CandidateTracker::step(int t, const Frame& frame, const cv::Mat& min_eigen, const FlowField& flow,
                            const FlowField& local) {
  if (frame.width() != width_ || frame.height() != height_ || flow.width() != width_ ||
      flow.height() != height_ || local.width() != width_ || local.height() != height_) {
    throw DataError("tracker: frame or flow size mismatch");
  }
  // Tail checks at frame t: length cap and good-feature criterion.
  std::vector<Track> survivors;
  survivors.reserve(live_.size());
  for (auto& tr : live_) {
    const bool capped = static_cast<int>(tr.points.size()) >= config_.l_max;
    const bool weak = !(static_cast<double>(nearest_value(min_eigen, tr.position)) >= config_.gftt_min_eigenvalue) ||
                      nearest_value(min_eigen, tr.position) <= 0.0f;
    if (capped || weak) {
      close(std::move(tr));
    } else {
      survivors.push_back(std::move(tr));
    }
  }
  live_ = std::move(survivors);

  if (t % config_.resample_interval == 0) {
    std::vector<cv::Point2f> occupied;
    occupied.reserve(live_.size());
    for (const auto& tr : live_) occupied.push_back(tr.position);
    for (const auto& p : sample_points(min_eigen, occupied, config_)) {
      Track tr;
      tr.id = next_id_++;
      tr.begin = t;
      tr.position = p;
      live_.push_back(std::move(tr));
    }
  }

  std::vector<Track> next;
  next.reserve(live_.size());
  const float max_x = static_cast<float>(width_ - 1), max_y = static_cast<float>(height_ - 1);
  for (auto& tr : live_) {
    const cv::Point2f p = tr.position;
    tr.points.push_back(p);
    tr.motion.push_back({sample_bilinear(local.u, p.x, p.y), sample_bilinear(local.v, p.x, p.y)});
    tr.hsv.push_back(nearest_hsv(frame.hsv, p));
    const cv::Point2f q(p.x + sample_bilinear(flow.u, p.x, p.y), p.y + sample_bilinear(flow.v, p.x, p.y));
    if (!(q.x >= 0.0f && q.y >= 0.0f && q.x <= max_x && q.y <= max_y)) {
      close(std::move(tr));
      continue;
    }
    tr.position = q;
    next.push_back(std::move(tr));
  }
  live_ = std::move(next);
}

std::vector<Trajectory> CandidateTracker::finish() {
  for (auto& tr : live_) close(std::move(tr));
  live_.clear();
  std::sort(done_.begin(), done_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Trajectory> out;
  out.reserve(done_.size());
  for (auto& d : done_) out.push_back(std::move(d.second));
  done_.clear();
  return out;
}

std::vector<Trajectory> track_candidates(const FrameSource& video, const std::vector<FlowField>& flows,
                                         const std::vector<FlowField>& locals, const PipelineConfig& config) {
  const int transitions = video.frame_count() - 1;
  if (static_cast<int>(flows.size()) != transitions || static_cast<int>(locals.size()) != transitions) {
    throw DataError("track_candidates: flows must cover every transition");
  }
  CandidateTracker tracker(video.width(), video.height(), config);
  for (int t = 0; t < transitions; ++t) {
    const Frame f = video.frame(t);
    tracker.step(t, f, min_eigen_map(f.gray), flows[static_cast<std::size_t>(t)],
                 locals[static_cast<std::size_t>(t)]);
  }
  return tracker.finish();
}

}  // namespace egocorr
