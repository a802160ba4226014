#include "egocorr/video_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "egocorr/error.hpp"

namespace fs = std::filesystem;

namespace egocorr {

Hsv rgb_to_hsv(double r, double g, double b) {
  r = std::clamp(r, 0.0, 1.0);
  g = std::clamp(g, 0.0, 1.0);
  b = std::clamp(b, 0.0, 1.0);
  const double max = std::max({r, g, b});
  const double min = std::min({r, g, b});
  const double chroma = max - min;
  Hsv out;
  out.v = max;
  out.s = max > 0.0 ? chroma / max : 0.0;
  if (chroma <= 0.0) return out;
  double h;
  if (max == r) {
    h = (g - b) / chroma;
  } else if (max == g) {
    h = (b - r) / chroma + 2.0;
  } else {
    h = (r - g) / chroma + 4.0;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
  if (h >= 1.0) h -= 1.0;
  out.h = h;
  return out;
}

Frame frame_from_rgb(const cv::Mat& rgb) {
  cv::Mat rgbf;
  if (rgb.type() == CV_8UC3) {
    rgb.convertTo(rgbf, CV_32FC3, 1.0 / 255.0);
  } else if (rgb.type() == CV_32FC3) {
    rgbf = rgb;
  } else {
    throw DataError("frame_from_rgb expects CV_8UC3 or CV_32FC3");
  }
  Frame f;
  f.gray.create(rgbf.rows, rgbf.cols, CV_32FC1);
  f.hsv.create(rgbf.rows, rgbf.cols, CV_32FC3);
  for (int y = 0; y < rgbf.rows; ++y) {
    const auto* src = rgbf.ptr<cv::Vec3f>(y);
    auto* gray = f.gray.ptr<float>(y);
    auto* hsv = f.hsv.ptr<cv::Vec3f>(y);
    for (int x = 0; x < rgbf.cols; ++x) {
      const double r = std::clamp<double>(src[x][0], 0.0, 1.0);
      const double g = std::clamp<double>(src[x][1], 0.0, 1.0);
      const double b = std::clamp<double>(src[x][2], 0.0, 1.0);
      gray[x] = static_cast<float>(kLumaR * r + kLumaG * g + kLumaB * b);
      const Hsv c = rgb_to_hsv(r, g, b);
      hsv[x] = cv::Vec3f(static_cast<float>(c.h), static_cast<float>(c.s), static_cast<float>(c.v));
    }
  }
  return f;
}

VideoManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    VideoManifest m;
    m.source_id = j.at("source_id").get<std::string>();
    m.fps = j.at("fps").get<double>();
    m.frame_count = j.at("frame_count").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const VideoManifest& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["source_id"] = m.source_id;
  j["fps"] = m.fps;
  j["frame_count"] = m.frame_count;
  j["width"] = m.width;
  j["height"] = m.height;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

std::string format_frame_name(const std::string& pattern, int index) {
  char buffer[512];
  const int n = std::snprintf(buffer, sizeof(buffer), pattern.c_str(), index);
  if (n < 0 || n >= static_cast<int>(sizeof(buffer))) {
    throw DataError("bad frame name pattern '" + pattern + "'");
  }
  return buffer;
}

cv::Mat read_image(const fs::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw DataError("cannot decode image " + path.string());
  if (img.channels() == 3) {
    cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  } else if (img.channels() == 4) {
    cv::cvtColor(img, img, cv::COLOR_BGRA2RGB);
  }
  return img;
}

void write_ppm(const fs::path& path, const cv::Mat& rgb) {
  cv::Mat bgr8;
  if (rgb.type() == CV_32FC3) {
    rgb.convertTo(bgr8, CV_8UC3, 255.0);
  } else if (rgb.type() == CV_8UC3) {
    bgr8 = rgb.clone();
  } else {
    throw DataError("write_ppm expects a 3-channel image");
  }
  cv::cvtColor(bgr8, bgr8, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr8, {cv::IMWRITE_PXM_BINARY, 1})) {
    throw DataError("cannot write " + path.string());
  }
}

void write_pgm(const fs::path& path, const cv::Mat& plane) {
  if (plane.type() != CV_8UC1 && plane.type() != CV_16UC1) {
    throw DataError("write_pgm expects an 8- or 16-bit single-channel plane");
  }
  if (!cv::imwrite(path.string(), plane, {cv::IMWRITE_PXM_BINARY, 1})) {
    throw DataError("cannot write " + path.string());
  }
}

cv::Mat resize_to(const cv::Mat& image, int width, int height) {
  if (image.cols == width && image.rows == height) return image;
  cv::Mat out;
  cv::resize(image, out, cv::Size(width, height), 0.0, 0.0, cv::INTER_LINEAR);
  return out;
}

namespace {

cv::Mat to_rgb_float(const cv::Mat& img, const fs::path& path) {
  cv::Mat rgb;
  const double scale = img.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  if (img.depth() != CV_8U && img.depth() != CV_16U) {
    throw DataError("unsupported pixel depth in " + path.string());
  }
  if (img.channels() == 1) {
    cv::Mat g;
    img.convertTo(g, CV_32FC1, scale);
    cv::cvtColor(g, rgb, cv::COLOR_GRAY2RGB);
  } else {
    img.convertTo(rgb, CV_32FC3, scale);
  }
  return rgb;
}

}  // namespace

DirectorySource::DirectorySource(fs::path directory, std::string pattern, const PipelineConfig& config)
    : directory_(std::move(directory)), width_(config.process_width), height_(config.process_height) {
  if (!fs::is_directory(directory_)) throw DataError("not a directory: " + directory_.string());
  std::string alt_pattern;
  if (const auto pos = pattern.rfind(".ppm"); pos != std::string::npos) {
    alt_pattern = pattern;
    alt_pattern.replace(pos, 4, ".pgm");
  }
  for (int i = 0;; ++i) {
    fs::path p = directory_ / format_frame_name(pattern, i);
    if (!fs::exists(p) && !alt_pattern.empty()) p = directory_ / format_frame_name(alt_pattern, i);
    if (!fs::exists(p)) break;
    files_.push_back(p);
  }
  if (files_.size() < 2) throw DataError("sequence too short: " + directory_.string());

  source_id_ = directory_.filename().string();
  if (source_id_.empty()) source_id_ = directory_.parent_path().filename().string();
  if (fs::exists(directory_ / kManifestName)) {
    const auto m = read_manifest(directory_ / kManifestName);
    source_id_ = m.source_id;
    fps_ = m.fps;
  }
  const cv::Mat first = read_image(files_.front());
  source_width_ = first.cols;
  source_height_ = first.rows;
  for (const auto& f : files_) {
    // Header-only check would be cheaper; decoding keeps the error path simple.
    const cv::Mat img = cv::imread(f.string(), cv::IMREAD_UNCHANGED);
    if (img.empty()) throw DataError("cannot decode image " + f.string());
    if (img.cols != source_width_ || img.rows != source_height_) {
      throw DataError("frame size mismatch in " + f.string());
    }
  }
}

Frame DirectorySource::frame(int index) const {
  const auto& path = files_.at(static_cast<std::size_t>(index));
  const cv::Mat img = read_image(path);
  if (img.cols != source_width_ || img.rows != source_height_) {
    throw DataError("frame size mismatch in " + path.string());
  }
  return frame_from_rgb(resize_to(to_rgb_float(img, path), width_, height_));
}

FrameSequence load_sequence(const fs::path& directory, const std::string& pattern,
                            const PipelineConfig& config) {
  const DirectorySource source(directory, pattern, config);
  FrameSequence seq;
  seq.width = source.width();
  seq.height = source.height();
  seq.fps = source.fps();
  seq.source_id = source.source_id();
  seq.frames.reserve(static_cast<std::size_t>(source.frame_count()));
  for (int i = 0; i < source.frame_count(); ++i) seq.frames.push_back(source.frame(i));
  return seq;
}

}  // namespace egocorr
