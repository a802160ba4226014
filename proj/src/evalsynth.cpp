#include "egocorr/evalsynth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "egocorr/error.hpp"
#include "egocorr/mapping.hpp"
#include "egocorr/parallel.hpp"

namespace egocorr {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, tag, a, b).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(splitmix(seed) ^ tag) ^ a) ^ b);
}

enum StreamTag : std::uint64_t {
  kSignal = 1,
  kDistractorSignal,
  kJitter,
  kBackground,
  kHead,
  kDistractorTexture,
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

cv::Mat value_noise(int width, int height, int cell, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  const int gw = width / cell + 2, gh = height / cell + 2;
  std::vector<float> lattice(static_cast<std::size_t>(gw * gh));
  for (auto& v : lattice) v = uni(rng);
  auto smooth = [](double f) { return f * f * (3.0 - 2.0 * f); };
  cv::Mat out(height, width, CV_32FC1);
  for (int y = 0; y < height; ++y) {
    const int cy = y / cell;
    const double fy = smooth((y % cell + 0.5) / cell);
    for (int x = 0; x < width; ++x) {
      const int cx = x / cell;
      const double fx = smooth((x % cell + 0.5) / cell);
      auto at = [&](int i, int j) { return lattice[static_cast<std::size_t>(j * gw + i)]; };
      const double top = at(cx, cy) * (1 - fx) + at(cx + 1, cy) * fx;
      const double bottom = at(cx, cy + 1) * (1 - fx) + at(cx + 1, cy + 1) * fx;
      out.at<float>(y, x) = static_cast<float>(top * (1 - fy) + bottom * fy);
    }
  }
  return out;
}

// Three octaves of value noise, rescaled to span [0, 1]. The 2 px octave
// gives corner-like structure at the 3x3 scale of the seeding criterion.
cv::Mat texture_noise(int width, int height, std::mt19937_64& rng) {
  cv::Mat n = 0.4 * value_noise(width, height, 8, rng) + 0.3 * value_noise(width, height, 4, rng) +
              0.3 * value_noise(width, height, 2, rng);
  double lo = 0, hi = 1;
  cv::minMaxLoc(n, &lo, &hi);
  if (hi > lo) n = (n - lo) / (hi - lo);
  return n;
}

struct HsvRange {
  double h0, h1, s0, s1, v0, v1;
};

// RGB CV_32FC3 texture with hue, saturation and value each driven by noise.
cv::Mat color_texture(int width, int height, const HsvRange& r, std::mt19937_64& rng) {
  const cv::Mat nh = texture_noise(width, height, rng);
  const cv::Mat ns = texture_noise(width, height, rng);
  const cv::Mat nv = texture_noise(width, height, rng);
  cv::Mat hsv(height, width, CV_32FC3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double h = r.h0 + (r.h1 - r.h0) * nh.at<float>(y, x);
      hsv.at<cv::Vec3f>(y, x) = {static_cast<float>(360.0 * (h - std::floor(h))),
                                 static_cast<float>(r.s0 + (r.s1 - r.s0) * ns.at<float>(y, x)),
                                 static_cast<float>(r.v0 + (r.v1 - r.v0) * nv.at<float>(y, x))};
    }
  }
  cv::Mat rgb;
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  return rgb;
}

cv::Vec3f sample_rgb(const cv::Mat& tex, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(tex.cols - 1));
  y = std::clamp(y, 0.0, static_cast<double>(tex.rows - 1));
  const int x0 = std::min(static_cast<int>(x), tex.cols - 2), y0 = std::min(static_cast<int>(y), tex.rows - 2);
  const float fx = static_cast<float>(x - x0), fy = static_cast<float>(y - y0);
  const auto& a = tex.at<cv::Vec3f>(y0, x0);
  const auto& b = tex.at<cv::Vec3f>(y0, x0 + 1);
  const auto& c = tex.at<cv::Vec3f>(y0 + 1, x0);
  const auto& d = tex.at<cv::Vec3f>(y0 + 1, x0 + 1);
  return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
}

constexpr std::array<double, 4> kDistractorHues{0.33, 0.62, 0.80, 0.47};

class SynthSource;

}  // namespace

std::vector<Vec2> band_limited_signal(std::uint64_t seed, int frames, double fps, double bandwidth, double amplitude) {
  if (frames < 1 || fps <= 0 || bandwidth <= 0) throw ConfigError("band_limited_signal: bad parameters");
  const double sigma = fps / (2.0 * std::numbers::pi * bandwidth);
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= ksum;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t padded = static_cast<std::size_t>(frames + 2 * radius);
  std::vector<double> wx(padded), wy(padded);
  for (std::size_t i = 0; i < padded; ++i) {
    wx[i] = normal(rng);
    wy[i] = normal(rng);
  }
  std::vector<Vec2> out(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    double sx = 0, sy = 0;
    for (std::size_t k = 0; k < kernel.size(); ++k) {
      sx += kernel[k] * wx[static_cast<std::size_t>(t) + k];
      sy += kernel[k] * wy[static_cast<std::size_t>(t) + k];
    }
    out[static_cast<std::size_t>(t)] = {sx, sy};
  }
  for (int axis = 0; axis < 2; ++axis) {
    double mean = 0, var = 0;
    for (const auto& p : out) mean += axis ? p.v : p.u;
    mean /= frames;
    for (const auto& p : out) var += std::pow((axis ? p.v : p.u) - mean, 2);
    const double sd = std::sqrt(var / frames);
    const double scale = sd > 0 ? amplitude / sd : 0.0;
    for (auto& p : out) (axis ? p.v : p.u) = ((axis ? p.v : p.u) - mean) * scale;
  }
  return out;
}

void validate_spec(const SynthSpec& s, const PipelineConfig& config) {
  if (s.people < 2) throw ConfigError("synth spec: people must be >= 2");
  if (s.frames < config.l_min + 8) {
    throw ConfigError("synth spec: frames must be >= l_min + 8 (" + std::to_string(config.l_min + 8) + ")");
  }
  if (!(s.fps > 0) || !(s.motion_bandwidth > 0) || !(s.motion_amplitude >= 0) || !(s.noise_sigma >= 0)) {
    throw ConfigError("synth spec: fps and bandwidth must be positive, amplitude and noise non-negative");
  }
  if (s.head_size < 4 || s.distractors < 0 || s.width < 32 || s.height < 32) {
    throw ConfigError("synth spec: bad head_size, distractors or frame size");
  }
  if (!s.groups.empty()) {
    std::vector<int> seen(static_cast<std::size_t>(s.people), 0);
    for (const auto& g : s.groups) {
      for (int p : g) {
        if (p < 0 || p >= s.people) throw ConfigError("synth spec: group member " + std::to_string(p) + " out of range");
        if (seen[static_cast<std::size_t>(p)]++) throw ConfigError("synth spec: person " + std::to_string(p) + " in two groups");
      }
    }
    for (int p = 0; p < s.people; ++p) {
      if (!seen[static_cast<std::size_t>(p)]) throw ConfigError("synth spec: person " + std::to_string(p) + " in no group");
    }
  }
}

nlohmann::json spec_to_json(const SynthSpec& s) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : s.groups) groups.push_back(g);
  return {{"seed", s.seed},
          {"people", s.people},
          {"groups", groups},
          {"frames", s.frames},
          {"fps", s.fps},
          {"motion_amplitude", s.motion_amplitude},
          {"motion_bandwidth", s.motion_bandwidth},
          {"head_size", s.head_size},
          {"noise_sigma", s.noise_sigma},
          {"distractors", s.distractors},
          {"width", s.width},
          {"height", s.height}};
}

SynthSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth spec: expected a JSON object");
  static const std::set<std::string> known{"seed",        "people",     "groups",   "frames",
                                           "fps",         "motion_amplitude", "motion_bandwidth",
                                           "head_size",   "noise_sigma", "distractors", "width", "height"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("synth spec: unknown key '" + key + "'");
  }
  SynthSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.people = j.value("people", s.people);
    s.groups = j.value("groups", s.groups);
    s.frames = j.value("frames", s.frames);
    s.fps = j.value("fps", s.fps);
    s.motion_amplitude = j.value("motion_amplitude", s.motion_amplitude);
    s.motion_bandwidth = j.value("motion_bandwidth", s.motion_bandwidth);
    s.head_size = j.value("head_size", s.head_size);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.distractors = j.value("distractors", s.distractors);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  return s;
}

SynthSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

// Lazily rendered video of one person.
class SynthSource final : public FrameSource {
 public:
  SynthSource(const SynthSession& session, int person) : session_(session), person_(person) {}
  int frame_count() const override { return session_.spec().frames; }
  int width() const override { return session_.spec().width; }
  int height() const override { return session_.spec().height; }
  double fps() const override { return session_.spec().fps; }
  std::string source_id() const override { return session_.video_id(person_); }
  Frame frame(int index) const override {
    if (index < 0 || index >= frame_count()) throw DataError("frame index out of range");
    return frame_from_rgb(session_.render(person_, index));
  }

 private:
  const SynthSession& session_;
  int person_;
};

}  // namespace

struct SynthSession::Impl {
  std::vector<std::vector<Vec2>> signals;                // [person][t]
  std::vector<std::vector<int>> visible;                 // [observer] -> targets in slot order
  std::vector<std::vector<std::vector<Vec2>>> jitter;    // [observer][slot][t]
  std::vector<std::vector<std::vector<Vec2>>> distract;  // [observer][d][t]
  std::vector<cv::Mat> backgrounds;                      // [person]
  std::vector<cv::Mat> heads;                            // [person]
  std::vector<std::vector<cv::Mat>> distractor_tex;      // [observer][d]
  int margin = 0;
  std::vector<std::unique_ptr<SynthSource>> sources;
};

SynthSession::SynthSession(SynthSpec spec) : spec_(std::move(spec)), impl_(std::make_unique<Impl>()) {
  // Length against l_min is checked by generate(), which knows the config.
  PipelineConfig loose;
  loose.l_min = 1;
  validate_spec(spec_, loose);
  const auto n = static_cast<std::size_t>(spec_.people);
  if (spec_.groups.empty()) {
    spec_.groups.emplace_back();
    for (int p = 0; p < spec_.people; ++p) spec_.groups.back().push_back(p);
  }
  group_of_.assign(n, -1);
  for (std::size_t g = 0; g < spec_.groups.size(); ++g)
    for (int p : spec_.groups[g]) group_of_[static_cast<std::size_t>(p)] = static_cast<int>(g);

  auto& im = *impl_;
  const int frames = spec_.frames;
  for (std::size_t k = 0; k < n; ++k) {
    im.signals.push_back(band_limited_signal(stream_seed(spec_.seed, kSignal, k), frames, spec_.fps,
                                             spec_.motion_bandwidth, spec_.motion_amplitude));
  }
  im.margin = static_cast<int>(std::ceil(6.0 * spec_.motion_amplitude)) + 8;
  const int r = spec_.head_size / 2;
  for (std::size_t o = 0; o < n; ++o) {
    std::vector<int> vis;
    for (int j : spec_.groups[static_cast<std::size_t>(group_of_[o])])
      if (j != static_cast<int>(o)) vis.push_back(j);
    std::sort(vis.begin(), vis.end());
    im.visible.push_back(vis);

    std::mt19937_64 jrng(stream_seed(spec_.seed, kJitter, o));
    std::normal_distribution<double> normal(0.0, 1.0);
    im.jitter.emplace_back();
    for (std::size_t slot = 0; slot < vis.size(); ++slot) {
      std::vector<Vec2> j(static_cast<std::size_t>(frames));
      for (auto& v : j) {
        const double a = normal(jrng), b = normal(jrng);
        v = {spec_.noise_sigma * a, spec_.noise_sigma * b};
      }
      im.jitter.back().push_back(std::move(j));
    }
    im.distract.emplace_back();
    im.distractor_tex.emplace_back();
    for (int d = 0; d < spec_.distractors; ++d) {
      im.distract.back().push_back(band_limited_signal(stream_seed(spec_.seed, kDistractorSignal, o, d), frames,
                                                       spec_.fps, spec_.motion_bandwidth, spec_.motion_amplitude));
      std::mt19937_64 trng(stream_seed(spec_.seed, kDistractorTexture, o, d));
      const double h = kDistractorHues[static_cast<std::size_t>(d) % kDistractorHues.size()];
      im.distractor_tex.back().push_back(
          color_texture(spec_.head_size + 2, spec_.head_size + 2, {h - 0.03, h + 0.03, 0.7, 0.9, 0.25, 0.95}, trng));
    }
    // Low-saturation background away from skin hues.
    std::mt19937_64 brng(stream_seed(spec_.seed, kBackground, o));
    im.backgrounds.push_back(color_texture(spec_.width + 2 * im.margin, spec_.height + 2 * im.margin,
                                           {0.50, 0.68, 0.05, 0.2, 0.1, 0.95}, brng));
    std::mt19937_64 hrng(stream_seed(spec_.seed, kHead, o));
    im.heads.push_back(color_texture(2 * r + 3, 2 * r + 3, {0.05, 0.08, 0.4, 0.55, 0.12, 1.0}, hrng));
  }
  for (std::size_t k = 0; k < n; ++k) im.sources.push_back(std::make_unique<SynthSource>(*this, static_cast<int>(k)));
}

SynthSession::~SynthSession() = default;

SynthSession::SynthSession(SynthSession&& other) noexcept
    : spec_(std::move(other.spec_)), group_of_(std::move(other.group_of_)), impl_(std::move(other.impl_)) {
  rebind_sources();
}

SynthSession& SynthSession::operator=(SynthSession&& other) noexcept {
  spec_ = std::move(other.spec_);
  group_of_ = std::move(other.group_of_);
  impl_ = std::move(other.impl_);
  rebind_sources();
  return *this;
}

void SynthSession::rebind_sources() {
  if (!impl_) return;
  for (std::size_t k = 0; k < impl_->sources.size(); ++k)
    impl_->sources[k] = std::make_unique<SynthSource>(*this, static_cast<int>(k));
}

std::string SynthSession::video_id(int person) const { return "p" + std::to_string(person); }

std::vector<int> SynthSession::visible_targets(int observer) const {
  return impl_->visible.at(static_cast<std::size_t>(observer));
}

const FrameSource& SynthSession::video(int person) const { return *impl_->sources.at(static_cast<std::size_t>(person)); }

const std::vector<Vec2>& SynthSession::signal(int person) const {
  return impl_->signals.at(static_cast<std::size_t>(person));
}

std::vector<int> SynthSession::annotated_frames() const {
  const int step = std::max(1, static_cast<int>(std::lround(spec_.fps / 2.0)));
  std::vector<int> out;
  for (int t = 0; t < spec_.frames - 1; t += step) out.push_back(t);
  return out;
}

cv::Point2d SynthSession::head_center(int observer, int target, int t) const {
  const auto& vis = impl_->visible.at(static_cast<std::size_t>(observer));
  const auto it = std::find(vis.begin(), vis.end(), target);
  if (it == vis.end()) throw Error("head_center: target not visible to observer");
  const auto slot = static_cast<std::size_t>(it - vis.begin());
  const auto& so = signal(observer)[static_cast<std::size_t>(t)];
  const auto& sj = signal(target)[static_cast<std::size_t>(t)];
  const auto& jit = impl_->jitter[static_cast<std::size_t>(observer)][slot][static_cast<std::size_t>(t)];
  const double bx = spec_.width * static_cast<double>(slot + 1) / static_cast<double>(vis.size() + 1);
  const double by = 0.36 * spec_.height;
  return {bx + so.u + sj.u + jit.u, by - so.v + sj.v + jit.v};
}

cv::Mat SynthSession::render(int person, int t) const {
  if (person < 0 || person >= spec_.people || t < 0 || t >= spec_.frames) throw DataError("render: out of range");
  const auto& im = *impl_;
  const auto o = static_cast<std::size_t>(person);
  const auto& s = signal(person)[static_cast<std::size_t>(t)];
  const double gx = s.u, gy = -s.v;  // content offset of the wearer's own camera
  cv::Mat img(spec_.height, spec_.width, CV_32FC3);
  for (int y = 0; y < img.rows; ++y) {
    auto* row = img.ptr<cv::Vec3f>(y);
    for (int x = 0; x < img.cols; ++x) row[x] = sample_rgb(im.backgrounds[o], x - gx + im.margin, y - gy + im.margin);
  }
  const double half = spec_.head_size / 2.0;
  for (std::size_t d = 0; d < im.distract[o].size(); ++d) {
    const auto& sd = im.distract[o][d][static_cast<std::size_t>(t)];
    const double cx = spec_.width * (d + 0.5) / static_cast<double>(im.distract[o].size()) + gx + sd.u;
    const double cy = 0.78 * spec_.height + gy + sd.v;
    const int x0 = std::max(0, static_cast<int>(std::ceil(cx - half))), x1 = std::min(img.cols - 1, static_cast<int>(std::floor(cx + half)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(cy - half))), y1 = std::min(img.rows - 1, static_cast<int>(std::floor(cy + half)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        img.at<cv::Vec3f>(y, x) = sample_rgb(im.distractor_tex[o][d], x - cx + half + 1, y - cy + half + 1);
  }
  const double r = spec_.head_size / 2;
  for (int j : im.visible[o]) {
    const cv::Point2d c = head_center(person, j, t);
    const int x0 = std::max(0, static_cast<int>(std::ceil(c.x - r))), x1 = std::min(img.cols - 1, static_cast<int>(std::floor(c.x + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(c.y - r))), y1 = std::min(img.rows - 1, static_cast<int>(std::floor(c.y + r)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= r * r)
          img.at<cv::Vec3f>(y, x) = sample_rgb(im.heads[static_cast<std::size_t>(j)], x - c.x + r + 1, y - c.y + r + 1);
  }
  return img;
}

cv::Mat SynthSession::head_mask(int observer, int target, int t) const {
  cv::Mat mask = cv::Mat::zeros(spec_.height, spec_.width, CV_8UC1);
  const auto& vis = impl_->visible.at(static_cast<std::size_t>(observer));
  if (std::find(vis.begin(), vis.end(), target) == vis.end()) return mask;
  const cv::Point2d c = head_center(observer, target, t);
  const double r = spec_.head_size / 2;
  for (int y = 0; y < mask.rows; ++y)
    for (int x = 0; x < mask.cols; ++x)
      if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= r * r) mask.at<std::uint8_t>(y, x) = 255;
  return mask;
}

SynthSession generate(const SynthSpec& spec, const PipelineConfig& config) {
  validate_spec(spec, config);
  return SynthSession(spec);
}

namespace {

std::string mask_name(int t) {
  char name[32];
  std::snprintf(name, sizeof(name), "mask_%06d.pgm", t);
  return name;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void write_session(const SynthSession& session, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_json(dir / "spec.json", spec_to_json(session.spec()));
  const auto annotated = session.annotated_frames();
  nlohmann::json index = {{"annotated_frames", annotated}, {"videos", nlohmann::json::array()}};
  nlohmann::json visible = nlohmann::json::object();
  nlohmann::json signals = nlohmann::json::object();
  for (int k = 0; k < session.people(); ++k) {
    const std::string id = session.video_id(k);
    index["videos"].push_back(id);
    const fs::path vdir = dir / "videos" / id;
    fs::create_directories(vdir);
    for (int t = 0; t < session.spec().frames; ++t) {
      write_ppm(vdir / format_frame_name(kDefaultFramePattern, t), session.render(k, t));
    }
    write_manifest({id, session.spec().fps, session.spec().frames, session.spec().width, session.spec().height},
                   vdir / kManifestName);
    nlohmann::json targets = nlohmann::json::array();
    for (int j : session.visible_targets(k)) {
      targets.push_back(session.video_id(j));
      const fs::path tdir = dir / "truth" / id / session.video_id(j);
      fs::create_directories(tdir);
      for (int t : annotated) write_pgm(tdir / mask_name(t), session.head_mask(k, j, t));
    }
    visible[id] = targets;
    nlohmann::json sig = nlohmann::json::array();
    for (const auto& v : session.signal(k)) sig.push_back({v.u, v.v});
    signals[id] = sig;
  }
  index["visible"] = visible;
  nlohmann::json groups = nlohmann::json::array();
  for (int k = 0; k < session.people(); ++k) groups.push_back(session.group_of(k));
  index["groups"] = groups;
  fs::create_directories(dir / "truth");
  write_json(dir / "truth" / "index.json", index);
  fs::create_directories(dir / "oracle");
  write_json(dir / "oracle" / "signals.json", signals);
}

namespace {

class MemorySession final : public BenchSession {
 public:
  explicit MemorySession(const SynthSession& s) : s_(s) {}
  int size() const override { return s_.people(); }
  const FrameSource& video(int k) const override { return s_.video(k); }
  std::string video_id(int k) const override { return s_.video_id(k); }
  std::vector<int> group_labels() const override { return s_.group_labels(); }
  std::vector<int> annotated_frames() const override { return s_.annotated_frames(); }
  std::vector<int> visible_targets(int o) const override { return s_.visible_targets(o); }
  cv::Mat head_mask(int o, int j, int t) const override { return s_.head_mask(o, j, t); }

 private:
  const SynthSession& s_;
};

class DiskSession final : public BenchSession {
 public:
  DiskSession(const std::filesystem::path& dir, const PipelineConfig& config) : dir_(dir) {
    std::ifstream in(dir / "truth" / "index.json");
    if (!in) throw DataError("not a synthetic session directory (missing truth/index.json): " + dir.string());
    nlohmann::json index;
    try {
      index = nlohmann::json::parse(in);
      ids_ = index.at("videos").get<std::vector<std::string>>();
      annotated_ = index.at("annotated_frames").get<std::vector<int>>();
      groups_ = index.at("groups").get<std::vector<int>>();
      for (const auto& id : ids_) {
        std::vector<int> vis;
        for (const auto& t : index.at("visible").at(id).get<std::vector<std::string>>()) vis.push_back(index_of(t));
        visible_.push_back(vis);
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("truth/index.json: " + std::string(e.what()));
    }
    if (groups_.size() != ids_.size()) throw DataError("truth/index.json: group labels do not match the videos");
    for (const auto& id : ids_) {
      sources_.push_back(std::make_unique<DirectorySource>(dir / "videos" / id, kDefaultFramePattern, config));
    }
  }
  int size() const override { return static_cast<int>(ids_.size()); }
  const FrameSource& video(int k) const override { return *sources_.at(static_cast<std::size_t>(k)); }
  std::string video_id(int k) const override { return ids_.at(static_cast<std::size_t>(k)); }
  std::vector<int> group_labels() const override { return groups_; }
  std::vector<int> annotated_frames() const override { return annotated_; }
  std::vector<int> visible_targets(int o) const override { return visible_.at(static_cast<std::size_t>(o)); }
  cv::Mat head_mask(int o, int j, int t) const override {
    const auto path = dir_ / "truth" / video_id(o) / video_id(j) / mask_name(t);
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot read mask " + path.string());
    const auto& v = video(o);
    if (m.cols != v.width() || m.rows != v.height()) {
      cv::resize(m, m, cv::Size(v.width(), v.height()), 0, 0, cv::INTER_NEAREST);
    }
    return m;
  }

 private:
  int index_of(const std::string& id) const {
    const auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) throw DataError("truth/index.json: unknown video '" + id + "'");
    return static_cast<int>(it - ids_.begin());
  }
  std::filesystem::path dir_;
  std::vector<std::string> ids_;
  std::vector<int> annotated_;
  std::vector<int> groups_;
  std::vector<std::vector<int>> visible_;
  std::vector<std::unique_ptr<DirectorySource>> sources_;
};

}  // namespace

std::unique_ptr<BenchSession> memory_bench_session(const SynthSession& session) {
  return std::make_unique<MemorySession>(session);
}

std::unique_ptr<BenchSession> disk_bench_session(const std::filesystem::path& dir, const PipelineConfig& config) {
  return std::make_unique<DiskSession>(dir, config);
}

SessionAnalysis analyze_session(const BenchSession& session, const PipelineConfig& config, int jobs) {
  const auto start = std::chrono::steady_clock::now();
  SessionAnalysis out;
  std::vector<int> lengths;
  for (int k = 0; k < session.size(); ++k) {
    AnalyzeOptions options;
    options.jobs = jobs;
    out.videos.push_back(analyze_video(session.video(k), config, options));
    for (const auto& c : out.videos.back().candidates) lengths.push_back(c.length());
  }
  out.mean_length = lengths.empty() ? 0.0 : mean_candidate_length(lengths);
  out.seconds = seconds_since(start);
  return out;
}

std::string Variant::name() const {
  switch (kind) {
    case VariantKind::kC:
      return "C";
    case VariantKind::kCG:
      return "C+G";
    case VariantKind::kAsym:
      return "asym";
    case VariantKind::kTwoStep: {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "two-step(%g,%d)", top_percent_p, pieces_k);
      return buf;
    }
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  if (text == "C") return {VariantKind::kC};
  if (text == "C+G") return {VariantKind::kCG};
  if (text == "asym") return {VariantKind::kAsym};
  if (text == "two-step") return {VariantKind::kTwoStep};
  double p = 0;
  int k = 0;
  char close = 0;
  if (std::sscanf(text.c_str(), "two-step(%lf,%d%c", &p, &k, &close) == 3 && close == ')') {
    if (!(p > 0 && p <= 100) || k < 1) throw ConfigError("variant: need 0 < P <= 100 and K >= 1");
    return {VariantKind::kTwoStep, p, k};
  }
  throw ConfigError("unknown variant '" + text + "' (C, C+G, asym, two-step, two-step(P,K))");
}

std::uint64_t auxiliary_seed(std::uint64_t seed) { return seed + 1000003ULL; }

PriorModel train_session_prior(const BenchSession& session, const SessionAnalysis& analysis, const std::string& tag) {
  std::vector<LabeledFeatures> samples;
  const auto frames = session.annotated_frames();
  for (int o = 0; o < session.size(); ++o) {
    const auto targets = session.visible_targets(o);
    const MaskLookup mask = [&](int t) {
      cv::Mat m = cv::Mat::zeros(session.video(o).height(), session.video(o).width(), CV_8UC1);
      for (int j : targets) m |= session.head_mask(o, j, t);
      return m;
    };
    const auto s = labeled_samples(analysis.videos[static_cast<std::size_t>(o)].candidates, frames, mask);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  return train_prior(samples, tag);
}

BenchmarkReport evaluate_variant(const BenchSession& session, const SessionAnalysis& analysis,
                                 const PipelineConfig& config, const Variant& variant, const PriorModel* prior,
                                 int jobs) {
  const int n = session.size();
  if (static_cast<int>(analysis.videos.size()) != n) throw Error("evaluate_variant: analysis does not match session");
  if (variant.kind == VariantKind::kCG && !prior) throw Error("evaluate_variant: C+G needs a prior model");
  PipelineConfig cfg = config;
  if (variant.kind == VariantKind::kTwoStep) {
    cfg.top_percent_p = variant.top_percent_p;
    cfg.paa_pieces_k = variant.pieces_k;
  }
  const ScoreRequest request{variant.kind == VariantKind::kTwoStep,
                             variant.kind == VariantKind::kCG ? prior : nullptr, jobs};
  const bool use_posterior = variant.kind == VariantKind::kCG;
  const auto frames = session.annotated_frames();

  BenchmarkReport rep;
  rep.variant = variant.name();
  rep.mean_length = analysis.mean_length;
  rep.times.motion_and_candidates = analysis.seconds;
  for (const auto& v : analysis.videos) rep.total_candidates += v.candidates.size();

  AffinityMatrix directed;
  directed.n = static_cast<std::size_t>(n);
  directed.a.assign(directed.n * directed.n, 0.0);
  directed.mode = AffinityMode::kDirected;
  for (int k = 0; k < n; ++k) directed.ids.push_back(session.video_id(k));

  for (int o = 0; o < n; ++o) {
    const auto& obs = analysis.videos[static_cast<std::size_t>(o)];
    const auto targets = session.visible_targets(o);
    for (int p = 0; p < n; ++p) {
      if (p == o) continue;
      auto t0 = std::chrono::steady_clock::now();
      const auto result = score_observer(obs, analysis.videos[static_cast<std::size_t>(p)].global_filtered, cfg, request);
      rep.times.scoring += seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      directed(static_cast<std::size_t>(o), static_cast<std::size_t>(p)) =
          directed_affinity(obs.candidates, result.scores, analysis.mean_length, use_posterior);
      rep.times.affinity += seconds_since(t0);
      if (std::find(targets.begin(), targets.end(), p) == targets.end()) continue;

      t0 = std::chrono::steady_clock::now();
      const auto post = posteriors_of(result);
      std::vector<cv::Mat> maps(frames.size()), truths(frames.size());
      parallel_for(frames.size(), jobs, [&](std::size_t f) {
        maps[f] = build_map(frames[f], obs.manifest.width, obs.manifest.height, obs.candidates, post,
                            cfg.radius_r());
        truths[f] = session.head_mask(o, p, frames[f]);
      });
      AucAccumulator acc;
      for (std::size_t f = 0; f < frames.size(); ++f) acc.add(maps[f], truths[f]);
      PairResult pr;
      pr.observer = o;
      pr.target = p;
      pr.auc = acc.auc();
      pr.candidates = obs.candidates.size();
      pr.exact_evaluations = result.exact_evaluations;
      pr.step1_multiply_adds = result.step1_multiply_adds;
      for (std::size_t i = 0; i < post.size(); ++i)
        if (pr.top1 < 0 || post[i] > post[static_cast<std::size_t>(pr.top1)]) pr.top1 = static_cast<long>(i);
      rep.pairs.push_back(pr);
      rep.exact_evaluations += result.exact_evaluations;
      rep.step1_multiply_adds += result.step1_multiply_adds;
      rep.times.mapping += seconds_since(t0);
    }
  }
  if (!rep.pairs.empty()) {
    double sum = 0;
    for (const auto& p : rep.pairs) sum += p.auc;
    rep.session_auc = sum / static_cast<double>(rep.pairs.size());
  }

  const auto t0 = std::chrono::steady_clock::now();
  const AffinityMatrix m = variant.kind == VariantKind::kAsym ? directed : symmetrize(directed);
  const auto labels = session.group_labels();
  double rsum = 0;
  for (int q = 0; q < n; ++q) {
    std::vector<bool> relevant(static_cast<std::size_t>(n));
    bool any = false;
    for (int k = 0; k < n; ++k) {
      relevant[static_cast<std::size_t>(k)] = k != q && labels[static_cast<std::size_t>(k)] == labels[static_cast<std::size_t>(q)];
      any = any || relevant[static_cast<std::size_t>(k)];
    }
    if (!any) continue;
    const auto r = retrieve(static_cast<std::size_t>(q), m, relevant);
    rep.queries.push_back({q, r.r_precision});
    rsum += r.r_precision;
  }
  if (!rep.queries.empty()) rep.mean_r_precision = rsum / static_cast<double>(rep.queries.size());
  rep.clusters = affinity_propagation(m.a, m.n);
  rep.clustering = clustering_metrics(rep.clusters, labels);
  rep.times.affinity += seconds_since(t0);
  return rep;
}

BenchmarkReport run_benchmark(const SynthSpec& spec, const PipelineConfig& config, const Variant& variant, int jobs) {
  const SynthSession session = generate(spec, config);
  const auto bench = memory_bench_session(session);
  const SessionAnalysis analysis = analyze_session(*bench, config, jobs);
  PriorModel prior;
  if (variant.kind == VariantKind::kCG) {
    SynthSpec aux = spec;
    aux.seed = auxiliary_seed(spec.seed);
    const SynthSession aux_session = generate(aux, config);
    const auto aux_bench = memory_bench_session(aux_session);
    prior = train_session_prior(*aux_bench, analyze_session(*aux_bench, config, jobs),
                                "synth seed " + std::to_string(aux.seed));
  }
  return evaluate_variant(*bench, analysis, config, variant, &prior, jobs);
}

nlohmann::ordered_json report_to_json(const BenchmarkReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["session_auc"] = r.session_auc;
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs) {
    j["pairs"].push_back({{"observer", p.observer},
                          {"target", p.target},
                          {"auc", p.auc},
                          {"candidates", p.candidates},
                          {"exact_evaluations", p.exact_evaluations},
                          {"step1_multiply_adds", p.step1_multiply_adds},
                          {"top1", p.top1}});
  }
  j["mean_r_precision"] = r.mean_r_precision;
  j["queries"] = nlohmann::ordered_json::array();
  for (const auto& q : r.queries) j["queries"].push_back({{"query", q.query}, {"r_precision", q.r_precision}});
  j["clustering"] = {{"precision", r.clustering.precision},
                     {"recall", r.clustering.recall},
                     {"f_measure", r.clustering.f_measure},
                     {"group_count", r.clustering.group_count},
                     {"exemplars", r.clusters.exemplars},
                     {"assignment", r.clusters.assignment},
                     {"iterations", r.clusters.iterations},
                     {"converged", r.clusters.converged}};
  j["exact_evaluations"] = r.exact_evaluations;
  j["total_candidates"] = r.total_candidates;
  j["step1_multiply_adds"] = r.step1_multiply_adds;
  j["mean_candidate_length"] = r.mean_length;
  j["stage_seconds"] = {{"motion_and_candidates", r.times.motion_and_candidates},
                        {"scoring", r.times.scoring},
                        {"mapping", r.times.mapping},
                        {"affinity", r.times.affinity}};
  return j;
}

void write_report(const BenchmarkReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw DataError("cannot write report in " + dir.string());
    out << report_to_json(r).dump(2) << '\n';
  }
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out.precision(10);
    return out;
  };
  auto t1 = open("table1_auc.csv");
  t1 << "variant,observer,target,auc\n";
  for (const auto& p : r.pairs) t1 << r.variant << ',' << p.observer << ',' << p.target << ',' << p.auc << '\n';
  t1 << r.variant << ",all,all," << r.session_auc << '\n';
  auto t2 = open("table2_time.csv");
  t2 << "variant,stage,seconds,exact_evaluations,total_candidates\n";
  t2 << r.variant << ",motion_and_candidates," << r.times.motion_and_candidates << ",,\n";
  t2 << r.variant << ",scoring," << r.times.scoring << ',' << r.exact_evaluations << ',' << r.total_candidates << '\n';
  t2 << r.variant << ",mapping," << r.times.mapping << ",,\n";
  t2 << r.variant << ",affinity," << r.times.affinity << ",,\n";
  auto t3 = open("table3_retrieval.csv");
  t3 << "variant,query,r_precision\n";
  for (const auto& q : r.queries) t3 << r.variant << ',' << q.query << ',' << q.r_precision << '\n';
  t3 << r.variant << ",mean," << r.mean_r_precision << '\n';
  auto t4 = open("table4_clustering.csv");
  t4 << "variant,precision,recall,f_measure,groups\n";
  t4 << r.variant << ',' << r.clustering.precision << ',' << r.clustering.recall << ',' << r.clustering.f_measure
     << ',' << r.clustering.group_count << '\n';
}

}  // namespace egocorr
