#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <opencv2/core.hpp>

#include "egocorr/config.hpp"
#include "egocorr/video_io.hpp"

namespace egocorr {

// Per-pixel displacement from frame t to t+1 (CV_32FC1 planes).
struct FlowField {
  cv::Mat u;
  cv::Mat v;

  int width() const { return u.cols; }
  int height() const { return u.rows; }
};

FlowField zero_flow(int width, int height);

// Row-major 3x3, normalized so that h[2][2] == 1 whenever it is nonzero.
struct Homography {
  std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int row, int col) const { return h[static_cast<std::size_t>(row * 3 + col)]; }
  double& operator()(int row, int col) { return h[static_cast<std::size_t>(row * 3 + col)]; }
  cv::Point2d apply(cv::Point2d p) const;
  double determinant() const;
  Homography inverse() const;

  static Homography identity() { return {}; }
  static Homography translation(double dx, double dy);
};

struct PointMatch {
  cv::Point2d from;
  cv::Point2d to;
};

struct Vec2 {
  double u = 0.0;
  double v = 0.0;
  bool operator==(const Vec2&) const = default;
};

// One ego-motion vector per frame transition (length = frame_count - 1).
struct GlobalMotionPattern {
  std::vector<Vec2> vectors;
  // true where sparse flow or homography estimation failed; the vector is (0, 0) there.
  std::vector<bool> failed;

  std::size_t size() const { return vectors.size(); }
};

// Pyramidal Lucas-Kanade on good-feature points with a forward-backward check
// (< 1 px). Throws DataError("insufficient matches") with fewer than 4 tracks.
std::vector<PointMatch> sparse_flow(const Frame& prev, const Frame& next, const PipelineConfig& config);

// RANSAC over 4-point DLT hypotheses scored by symmetric transfer error, then a
// least-squares DLT refit on the inliers. Deterministic for a given `seed`.
// Throws DataError("degenerate geometry") when no model reaches 4 inliers.
Homography estimate_homography(const std::vector<PointMatch>& matches, const PipelineConfig& config,
                               std::uint64_t seed = 0x9e3779b97f4a7c15ULL);

// Least-squares DLT through all matches (Hartley-normalized).
Homography fit_homography_dlt(const std::vector<PointMatch>& matches);

// field(x) = warp(x; h) - x at every pixel centre.
FlowField global_motion_field(const Homography& h, int width, int height);

// Mean of the homography-induced field.
Vec2 mean_motion(const FlowField& field);

// Global motion of one transition, or nullopt-like `ok = false` on failure.
struct TransitionMotion {
  Homography homography;
  Vec2 mean;
  bool ok = false;
};
TransitionMotion estimate_transition(const Frame& prev, const Frame& next, const PipelineConfig& config,
                                     int transition_index);

GlobalMotionPattern global_motion_pattern(const FrameSource& video, const PipelineConfig& config,
                                          int jobs = 1);

// Coarse-to-fine dense flow (polynomial expansion).
FlowField dense_flow(const Frame& prev, const Frame& next);

// flow - global, pointwise. Throws DataError on a size mismatch.
FlowField local_motion(const FlowField& flow, const FlowField& global);

// Per-channel sliding median with edge replication. Throws Error on even or
// non-positive windows.
std::vector<Vec2> median_filter_pattern(const std::vector<Vec2>& pattern, int window);
std::vector<float> median_filter(const std::vector<float>& channel, int window);

// Bilinear sample at subpixel (x, y), clamped to the plane.
float sample_bilinear(const cv::Mat& plane, double x, double y);

// Flow cache: magic "EGFL", u32 width, u32 height, u32 frame_index, then the
// u plane and the v plane as little-endian float32, row-major.
void write_flow(const std::filesystem::path& path, const FlowField& flow, int frame_index);
FlowField read_flow(const std::filesystem::path& path, int* frame_index = nullptr);

}  // namespace egocorr
