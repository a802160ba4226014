#pragma once

#include <array>
#include <vector>

#include <opencv2/core.hpp>

#include "egocorr/config.hpp"
#include "egocorr/motion.hpp"
#include "egocorr/video_io.hpp"

namespace egocorr {

inline constexpr int kFeatureCount = 11;

// Appearance and motion statistics of one trajectory. Flattened layout:
//   [h_mean, s_mean, v_mean, h_std, s_std, v_std, u_mean, v_mean, u_std, v_std, length]
// Hue mean and std are circular (hue is an angle scaled to [0, 1)).
struct CandidateFeatures {
  std::array<double, 3> hsv_mean{};
  std::array<double, 3> hsv_std{};
  std::array<double, 2> motion_mean{};
  std::array<double, 2> motion_std{};
  double length = 0.0;

  std::array<double, kFeatureCount> to_array() const;
  static CandidateFeatures from_array(const std::array<double, kFeatureCount>& a);
};

struct MotionSample {
  float u = 0.0f;
  float v = 0.0f;
};

// A tracked point X = (x_b, ..., x_{b+l-1}). local_motion[k] is the motion
// from frame b+k to b+k+1 with the global motion removed (median-filtered).
struct Trajectory {
  int begin_frame = 0;
  std::vector<cv::Point2f> points;
  std::vector<MotionSample> local_motion;
  CandidateFeatures features;
  bool valid = true;

  int length() const { return static_cast<int>(points.size()); }
  int end_frame() const { return begin_frame + length(); }  // exclusive
  bool alive_at(int t) const { return t >= begin_frame && t < end_frame(); }
};

// Minimum eigenvalue of the structure tensor: Sobel derivatives scaled to
// intensity per pixel, tensor averaged over a 3x3 window, reflected borders.
cv::Mat min_eigen_map(const cv::Mat& gray);

// Grid points at step e_W (offset e_W / 2) whose minimum eigenvalue is at
// least gftt_min_eigenvalue and with no occupied point closer than e_W.
std::vector<cv::Point2f> sample_points(const cv::Mat& min_eigen, const std::vector<cv::Point2f>& occupied,
                                       const PipelineConfig& config);
std::vector<cv::Point2f> sample_points(const Frame& frame, const std::vector<cv::Point2f>& occupied,
                                       const PipelineConfig& config);

// Statistics over per-point HSV samples and local-motion samples.
CandidateFeatures compute_features(const std::vector<cv::Vec3f>& hsv_samples,
                                   const std::vector<MotionSample>& motion);

// HSV at the nearest pixel of each trajectory point.
CandidateFeatures extract_features(const Trajectory& traj, const FrameSource& video);

// Streaming dense tracker. Call step() for t = 0, 1, ..., T-2 with frame t,
// its min-eigen map and the flows of transition t -> t+1, then finish().
class CandidateTracker {
 public:
  CandidateTracker(int width, int height, const PipelineConfig& config);

  void step(int t, const Frame& frame, const cv::Mat& min_eigen, const FlowField& flow,
            const FlowField& local);

  // Closes the live tracks and returns every kept trajectory ordered by seeding order.
  std::vector<Trajectory> finish();

  std::size_t live_count() const { return live_.size(); }

 private:
  struct Track {
    std::size_t id;
    int begin;
    cv::Point2f position;
    std::vector<cv::Point2f> points;
    std::vector<MotionSample> motion;
    std::vector<cv::Vec3f> hsv;
  };
  void close(Track&& track);

  int width_;
  int height_;
  PipelineConfig config_;
  std::size_t next_id_ = 0;
  std::vector<Track> live_;
  std::vector<std::pair<std::size_t, Trajectory>> done_;
};

// In-memory convenience: flows[t] and locals[t] belong to transition t.
std::vector<Trajectory> track_candidates(const FrameSource& video, const std::vector<FlowField>& flows,
                                         const std::vector<FlowField>& locals, const PipelineConfig& config);

}  // namespace egocorr
