#include "egocorr/motion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

#include "binary_io.hpp"
#include "egocorr/error.hpp"
#include "egocorr/parallel.hpp"

namespace egocorr {

FlowField zero_flow(int width, int height) {
  return {cv::Mat::zeros(height, width, CV_32FC1), cv::Mat::zeros(height, width, CV_32FC1)};
}

cv::Point2d Homography::apply(cv::Point2d p) const {
  const double w = h[6] * p.x + h[7] * p.y + h[8];
  return {(h[0] * p.x + h[1] * p.y + h[2]) / w, (h[3] * p.x + h[4] * p.y + h[5]) / w};
}

double Homography::determinant() const {
  return h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6]) +
         h[2] * (h[3] * h[7] - h[4] * h[6]);
}

Homography Homography::inverse() const {
  const double det = determinant();
  if (std::abs(det) <= 1e-12) throw DataError("singular homography");
  Homography inv;
  inv.h = {(h[4] * h[8] - h[5] * h[7]) / det, (h[2] * h[7] - h[1] * h[8]) / det,
           (h[1] * h[5] - h[2] * h[4]) / det, (h[5] * h[6] - h[3] * h[8]) / det,
           (h[0] * h[8] - h[2] * h[6]) / det, (h[2] * h[3] - h[0] * h[5]) / det,
           (h[3] * h[7] - h[4] * h[6]) / det, (h[1] * h[6] - h[0] * h[7]) / det,
           (h[0] * h[4] - h[1] * h[3]) / det};
  if (inv.h[8] != 0.0) {
    const double s = inv.h[8];
    for (auto& x : inv.h) x /= s;
  }
  return inv;
}

Homography Homography::translation(double dx, double dy) {
  Homography t;
  t.h = {1, 0, dx, 0, 1, dy, 0, 0, 1};
  return t;
}

namespace {

cv::Mat to_gray8(const cv::Mat& gray) {
  cv::Mat out;
  gray.convertTo(out, CV_8UC1, 255.0);
  return out;
}

// Similarity transform moving the centroid to the origin with mean distance sqrt(2).
Eigen::Matrix3d normalizer(const std::vector<cv::Point2d>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean_dist = 0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

Homography from_eigen(const Eigen::Matrix3d& m) {
  Homography out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m(r, c);
  if (out.h[8] != 0.0) {
    const double s = out.h[8];
    for (auto& x : out.h) x /= s;
  }
  return out;
}

Homography dlt(const std::vector<PointMatch>& matches, const std::vector<std::size_t>& idx) {
  std::vector<cv::Point2d> from, to;
  from.reserve(idx.size());
  to.reserve(idx.size());
  for (auto i : idx) {
    from.push_back(matches[i].from);
    to.push_back(matches[i].to);
  }
  const Eigen::Matrix3d tf = normalizer(from);
  const Eigen::Matrix3d tt = normalizer(to);
  Eigen::MatrixXd a(2 * idx.size(), 9);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Eigen::Vector3d p = tf * Eigen::Vector3d(from[k].x, from[k].y, 1.0);
    const Eigen::Vector3d q = tt * Eigen::Vector3d(to[k].x, to[k].y, 1.0);
    const auto r = static_cast<Eigen::Index>(2 * k);
    a.row(r) << -p.x(), -p.y(), -1, 0, 0, 0, q.x() * p.x(), q.x() * p.y(), q.x();
    a.row(r + 1) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  return from_eigen(tt.inverse() * hn * tf);
}

// Minimal-sample DLT on fixed-size matrices; same normalization as dlt().
Homography dlt4(const std::array<cv::Point2d, 4>& from, const std::array<cv::Point2d, 4>& to) {
  const std::vector<cv::Point2d> vf(from.begin(), from.end()), vt(to.begin(), to.end());
  const Eigen::Matrix3d tf = normalizer(vf);
  const Eigen::Matrix3d tt = normalizer(vt);
  Eigen::Matrix<double, 9, 9> a = Eigen::Matrix<double, 9, 9>::Zero();
  for (int k = 0; k < 4; ++k) {
    const Eigen::Vector3d p = tf * Eigen::Vector3d(from[static_cast<std::size_t>(k)].x, from[static_cast<std::size_t>(k)].y, 1.0);
    const Eigen::Vector3d q = tt * Eigen::Vector3d(to[static_cast<std::size_t>(k)].x, to[static_cast<std::size_t>(k)].y, 1.0);
    a.row(2 * k) << -p.x(), -p.y(), -1, 0, 0, 0, q.x() * p.x(), q.x() * p.y(), q.x();
    a.row(2 * k + 1) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
  }
  // Null vector of the 8x9 system = eigenvector of A^T A with the smallest eigenvalue.
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(a.transpose() * a);
  const Eigen::Matrix<double, 9, 1> hv = eig.eigenvectors().col(0);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  return from_eigen(tt.inverse() * hn * tf);
}

double cross(cv::Point2d a, cv::Point2d b, cv::Point2d c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool has_collinear_triple(const std::array<cv::Point2d, 4>& p) {
  constexpr double kMinArea = 1e-6;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k)
        if (std::abs(cross(p[i], p[j], p[k])) < kMinArea) return true;
  return false;
}

}  // namespace

std::vector<PointMatch> sparse_flow(const Frame& prev, const Frame& next, const PipelineConfig& config) {
  (void)config;
  if (prev.gray.size() != next.gray.size()) throw DataError("sparse_flow: frame size mismatch");
  const cv::Mat a = to_gray8(prev.gray);
  const cv::Mat b = to_gray8(next.gray);
  std::vector<cv::Point2f> corners;
  cv::goodFeaturesToTrack(a, corners, 300, 0.01, 5.0);
  if (corners.size() < 4) throw DataError("insufficient matches");

  std::vector<cv::Point2f> forward, backward;
  std::vector<unsigned char> status_f, status_b;
  std::vector<float> err;
  const cv::TermCriteria term(cv::TermCriteria::COUNT | cv::TermCriteria::EPS, 30, 0.01);
  cv::calcOpticalFlowPyrLK(a, b, corners, forward, status_f, err, cv::Size(15, 15), 2, term);
  cv::calcOpticalFlowPyrLK(b, a, forward, backward, status_b, err, cv::Size(15, 15), 2, term);

  std::vector<PointMatch> out;
  const double w = a.cols - 1, h = a.rows - 1;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    if (!status_f[i] || !status_b[i]) continue;
    const double fb = std::hypot(backward[i].x - corners[i].x, backward[i].y - corners[i].y);
    if (!(fb < 1.0)) continue;
    if (forward[i].x < 0 || forward[i].y < 0 || forward[i].x > w || forward[i].y > h) continue;
    out.push_back({{corners[i].x, corners[i].y}, {forward[i].x, forward[i].y}});
  }
  if (out.size() < 4) throw DataError("insufficient matches");
  return out;
}

Homography fit_homography_dlt(const std::vector<PointMatch>& matches) {
  if (matches.size() < 4) throw DataError("degenerate geometry");
  std::vector<std::size_t> idx(matches.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return dlt(matches, idx);
}

Homography estimate_homography(const std::vector<PointMatch>& matches, const PipelineConfig& config,
                               std::uint64_t seed) {
  const std::size_t n = matches.size();
  if (n < 4) throw DataError("degenerate geometry");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const double thr2 = config.ransac_threshold * config.ransac_threshold;

  auto count_inliers = [&](const Homography& hyp, std::vector<std::size_t>* inliers) {
    if (std::abs(hyp.determinant()) <= 1e-12) return std::size_t{0};
    const Homography inv = hyp.inverse();
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const cv::Point2d fwd = hyp.apply(matches[i].from) - matches[i].to;
      const cv::Point2d bwd = inv.apply(matches[i].to) - matches[i].from;
      const double e = fwd.dot(fwd) + bwd.dot(bwd);
      if (std::isfinite(e) && e <= thr2) {
        ++count;
        if (inliers) inliers->push_back(i);
      }
    }
    return count;
  };

  Homography best;
  std::size_t best_count = 0;
  for (int it = 0; it < config.ransac_iterations; ++it) {
    std::array<std::size_t, 4> s{};
    for (int k = 0; k < 4; ++k) {
      std::size_t cand;
      do {
        cand = pick(rng);
      } while (std::find(s.begin(), s.begin() + k, cand) != s.begin() + k);
      s[static_cast<std::size_t>(k)] = cand;
    }
    std::array<cv::Point2d, 4> pf, pt;
    for (int k = 0; k < 4; ++k) {
      pf[static_cast<std::size_t>(k)] = matches[s[static_cast<std::size_t>(k)]].from;
      pt[static_cast<std::size_t>(k)] = matches[s[static_cast<std::size_t>(k)]].to;
    }
    if (has_collinear_triple(pf) || has_collinear_triple(pt)) continue;
    const Homography hyp = dlt4(pf, pt);
    const std::size_t count = count_inliers(hyp, nullptr);
    if (count > best_count) {
      best_count = count;
      best = hyp;
    }
  }
  if (best_count < 4) throw DataError("degenerate geometry");

  std::vector<std::size_t> inliers;
  count_inliers(best, &inliers);
  const Homography refit = dlt(matches, inliers);
  if (std::abs(refit.determinant()) <= 1e-12 || !std::all_of(refit.h.begin(), refit.h.end(), [](double x) {
        return std::isfinite(x);
      })) {
    throw DataError("degenerate geometry");
  }
  return refit;
}

FlowField global_motion_field(const Homography& h, int width, int height) {
  FlowField f = zero_flow(width, height);
  for (int y = 0; y < height; ++y) {
    auto* u = f.u.ptr<float>(y);
    auto* v = f.v.ptr<float>(y);
    for (int x = 0; x < width; ++x) {
      const cv::Point2d p = h.apply({static_cast<double>(x), static_cast<double>(y)});
      u[x] = static_cast<float>(p.x - x);
      v[x] = static_cast<float>(p.y - y);
    }
  }
  return f;
}

Vec2 mean_motion(const FlowField& field) {
  double su = 0.0, sv = 0.0;
  for (int y = 0; y < field.height(); ++y) {
    const auto* u = field.u.ptr<float>(y);
    const auto* v = field.v.ptr<float>(y);
    for (int x = 0; x < field.width(); ++x) {
      su += u[x];
      sv += v[x];
    }
  }
  const double n = static_cast<double>(field.width()) * field.height();
  return {su / n, sv / n};
}

TransitionMotion estimate_transition(const Frame& prev, const Frame& next, const PipelineConfig& config,
                                     int transition_index) {
  TransitionMotion out;
  try {
    const auto matches = sparse_flow(prev, next, config);
    out.homography = estimate_homography(
        matches, config, 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(transition_index));
    out.mean = mean_motion(global_motion_field(out.homography, prev.width(), prev.height()));
    out.ok = std::isfinite(out.mean.u) && std::isfinite(out.mean.v);
  } catch (const DataError&) {
    out.ok = false;
  }
  if (!out.ok) {
    out.homography = Homography::identity();
    out.mean = {};
  }
  return out;
}

GlobalMotionPattern global_motion_pattern(const FrameSource& video, const PipelineConfig& config, int jobs) {
  const int transitions = video.frame_count() - 1;
  if (transitions < 1) throw DataError("sequence too short");
  GlobalMotionPattern pattern;
  pattern.vectors.resize(static_cast<std::size_t>(transitions));
  std::vector<char> failed(static_cast<std::size_t>(transitions), 0);
  parallel_for(static_cast<std::size_t>(transitions), jobs, [&](std::size_t t) {
    const auto m = estimate_transition(video.frame(static_cast<int>(t)), video.frame(static_cast<int>(t) + 1),
                                       config, static_cast<int>(t));
    pattern.vectors[t] = m.mean;
    failed[t] = m.ok ? 0 : 1;
  });
  pattern.failed.assign(failed.begin(), failed.end());
  return pattern;
}

FlowField dense_flow(const Frame& prev, const Frame& next) {
  if (prev.gray.size() != next.gray.size()) throw DataError("dense_flow: frame size mismatch");
  // Reflective padding keeps the solver's border artefacts outside the frame.
  constexpr int kPad = 8;
  cv::Mat a, b, flow;
  prev.gray.convertTo(a, CV_32FC1, 255.0);
  next.gray.convertTo(b, CV_32FC1, 255.0);
  cv::copyMakeBorder(a, a, kPad, kPad, kPad, kPad, cv::BORDER_REFLECT101);
  cv::copyMakeBorder(b, b, kPad, kPad, kPad, kPad, cv::BORDER_REFLECT101);
  cv::calcOpticalFlowFarneback(a, b, flow, 0.5, 3, 15, 3, 5, 1.2, 0);
  FlowField out;
  std::vector<cv::Mat> planes;
  cv::split(flow(cv::Rect(kPad, kPad, prev.gray.cols, prev.gray.rows)), planes);
  out.u = planes[0];
  out.v = planes[1];
  return out;
}

FlowField local_motion(const FlowField& flow, const FlowField& global) {
  if (flow.u.size() != global.u.size() || flow.v.size() != global.v.size() || flow.u.size() != flow.v.size()) {
    throw DataError("local_motion: dimension mismatch");
  }
  FlowField out;
  cv::subtract(flow.u, global.u, out.u);
  cv::subtract(flow.v, global.v, out.v);
  return out;
}

namespace {

template <typename T, typename Get>
T median_at(std::size_t n, std::size_t i, int window, Get&& get, std::vector<T>& buf) {
  const int half = window / 2;
  buf.clear();
  for (int k = -half; k <= half; ++k) {
    const auto j = std::clamp<long>(static_cast<long>(i) + k, 0L, static_cast<long>(n) - 1);
    buf.push_back(get(static_cast<std::size_t>(j)));
  }
  auto mid = buf.begin() + half;
  std::nth_element(buf.begin(), mid, buf.end());
  return *mid;
}

void check_window(int window) {
  if (window < 1 || window % 2 == 0) throw Error("median window must be odd and >= 1");
}

}  // namespace

std::vector<Vec2> median_filter_pattern(const std::vector<Vec2>& pattern, int window) {
  check_window(window);
  std::vector<Vec2> out(pattern.size());
  std::vector<double> buf;
  const auto n = pattern.size();
  for (std::size_t i = 0; i < n; ++i) {
    out[i].u = median_at<double>(n, i, window, [&](std::size_t j) { return pattern[j].u; }, buf);
    out[i].v = median_at<double>(n, i, window, [&](std::size_t j) { return pattern[j].v; }, buf);
  }
  return out;
}

std::vector<float> median_filter(const std::vector<float>& channel, int window) {
  check_window(window);
  std::vector<float> out(channel.size());
  std::vector<float> buf;
  for (std::size_t i = 0; i < channel.size(); ++i) {
    out[i] = median_at<float>(channel.size(), i, window, [&](std::size_t j) { return channel[j]; }, buf);
  }
  return out;
}

float sample_bilinear(const cv::Mat& plane, double x, double y) {
  const double xc = std::clamp(x, 0.0, static_cast<double>(plane.cols - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(plane.rows - 1));
  const int x0 = static_cast<int>(std::floor(xc));
  const int y0 = static_cast<int>(std::floor(yc));
  const int x1 = std::min(x0 + 1, plane.cols - 1);
  const int y1 = std::min(y0 + 1, plane.rows - 1);
  const double fx = xc - x0, fy = yc - y0;
  const auto* r0 = plane.ptr<float>(y0);
  const auto* r1 = plane.ptr<float>(y1);
  const double top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
  const double bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

void write_flow(const std::filesystem::path& path, const FlowField& flow, int frame_index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  detail::put_magic(out, "EGFL");
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(flow.width()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(flow.height()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(frame_index));
  for (const cv::Mat* plane : {&flow.u, &flow.v}) {
    for (int y = 0; y < plane->rows; ++y) {
      const auto* row = plane->ptr<float>(y);
      for (int x = 0; x < plane->cols; ++x) detail::put<float>(out, row[x]);
    }
  }
}

FlowField read_flow(const std::filesystem::path& path, int* frame_index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string what = "flow file " + path.string();
  detail::expect_magic(in, "EGFL", what);
  const auto w = detail::get<std::uint32_t>(in, what);
  const auto h = detail::get<std::uint32_t>(in, what);
  const auto idx = detail::get<std::uint32_t>(in, what);
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) throw DataError(what + ": bad dimensions");
  FlowField f = zero_flow(static_cast<int>(w), static_cast<int>(h));
  for (cv::Mat* plane : {&f.u, &f.v}) {
    for (int y = 0; y < plane->rows; ++y) {
      auto* row = plane->ptr<float>(y);
      for (int x = 0; x < plane->cols; ++x) row[x] = detail::get<float>(in, what);
    }
  }
  if (frame_index) *frame_index = static_cast<int>(idx);
  return f;
}

}  // namespace egocorr
