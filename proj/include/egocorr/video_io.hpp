#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "egocorr/config.hpp"

namespace egocorr {

struct Hsv {
  double h = 0.0;  // [0, 1), circular
  double s = 0.0;
  double v = 0.0;
};

// Standard hexcone transform; inputs are clamped to [0, 1].
Hsv rgb_to_hsv(double r, double g, double b);

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

// One video frame at processing resolution.
//   gray: CV_32FC1 luminance in [0, 1]
//   hsv:  CV_32FC3 with H in [0, 1), S and V in [0, 1]
struct Frame {
  cv::Mat gray;
  cv::Mat hsv;

  int width() const { return gray.cols; }
  int height() const { return gray.rows; }
};

// Builds both planes from an RGB image (CV_32FC3 in [0, 1], or CV_8UC3).
Frame frame_from_rgb(const cv::Mat& rgb);

struct FrameSequence {
  std::vector<Frame> frames;
  int width = 0;
  int height = 0;
  double fps = 30.0;
  std::string source_id;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

// Random access to frames without holding the whole video in memory.
// Implementations must be safe for concurrent frame() calls.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual int frame_count() const = 0;
  virtual int width() const = 0;
  virtual int height() const = 0;
  virtual double fps() const = 0;
  virtual std::string source_id() const = 0;
  virtual Frame frame(int index) const = 0;
};

class SequenceSource final : public FrameSource {
 public:
  explicit SequenceSource(const FrameSequence& sequence) : seq_(sequence) {}
  int frame_count() const override { return seq_.frame_count(); }
  int width() const override { return seq_.width; }
  int height() const override { return seq_.height; }
  double fps() const override { return seq_.fps; }
  std::string source_id() const override { return seq_.source_id; }
  Frame frame(int index) const override { return seq_.frames.at(static_cast<std::size_t>(index)); }

 private:
  const FrameSequence& seq_;
};

struct VideoManifest {
  std::string source_id;
  double fps = 30.0;
  int frame_count = 0;
  int width = 0;
  int height = 0;
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kDefaultFramePattern = "frame_%06d.ppm";

VideoManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const VideoManifest& manifest, const std::filesystem::path& path);

// Frame files of one video directory, decoded and resized lazily.
class DirectorySource final : public FrameSource {
 public:
  // Discovers frames matching `pattern` (printf-style, e.g. frame_%06d.ppm;
  // ".pgm" files are found too when the pattern names ".ppm"). Checks that
  // every file exists and shares the first frame's dimensions.
  DirectorySource(std::filesystem::path directory, std::string pattern, const PipelineConfig& config);

  int frame_count() const override { return static_cast<int>(files_.size()); }
  int width() const override { return width_; }
  int height() const override { return height_; }
  double fps() const override { return fps_; }
  std::string source_id() const override { return source_id_; }
  Frame frame(int index) const override;

  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::filesystem::path directory_;
  std::vector<std::filesystem::path> files_;
  int width_ = 0;
  int height_ = 0;
  int source_width_ = 0;
  int source_height_ = 0;
  double fps_ = 30.0;
  std::string source_id_;
};

// Loads all frames, bilinearly resized to the processing resolution.
FrameSequence load_sequence(const std::filesystem::path& directory, const std::string& pattern,
                            const PipelineConfig& config);

// Bilinear resize; identity when the size already matches.
cv::Mat resize_to(const cv::Mat& image, int width, int height);

// RGB CV_32FC3 [0, 1] -> 8-bit binary PPM.
void write_ppm(const std::filesystem::path& path, const cv::Mat& rgb);
// CV_8UC1 or CV_16UC1 -> binary PGM.
void write_pgm(const std::filesystem::path& path, const cv::Mat& plane);
// Reads PGM/PPM (any image OpenCV decodes). Color comes back as RGB.
cv::Mat read_image(const std::filesystem::path& path);

std::string format_frame_name(const std::string& pattern, int index);

}  // namespace egocorr
