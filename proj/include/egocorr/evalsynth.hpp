#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "egocorr/affinity.hpp"
#include "egocorr/analysis.hpp"
#include "egocorr/config.hpp"
#include "egocorr/motion.hpp"
#include "egocorr/targetness.hpp"
#include "egocorr/video_io.hpp"
#include "json.hpp"

namespace egocorr {

struct SynthSpec {
  std::uint64_t seed = 1;
  int people = 3;
  std::vector<std::vector<int>> groups;  // empty: everyone in one group
  int frames = 600;
  double fps = 60.0;
  double motion_amplitude = 6.0;  // std of s(t), px
  double motion_bandwidth = 2.0;  // Hz
  int head_size = 40;             // diameter, px
  double noise_sigma = 0.0;       // per-frame head jitter, px
  int distractors = 2;
  int width = 320;
  int height = 180;
};

// Throws ConfigError on: people < 2, frames < l_min + 8, a person in no group
// or in two groups, non-positive sizes or rates.
void validate_spec(const SynthSpec& spec, const PipelineConfig& config = {});

nlohmann::json spec_to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const nlohmann::json& j);
SynthSpec load_spec(const std::filesystem::path& path);

// A generated multi-camera session. Frames are rendered on demand; only the
// latent signals, jitter and textures are held.
//
// Person k's camera content is offset by g_k(t) = (s_k.x, -s_k.y): the global
// motion of video k is (ds.x, -ds.y), which the vertical inversion of the
// targetness stage maps back to ds. In observer o's video, groupmate j's head
// is a textured disc centred at base_j + g_o(t) + s_j(t) + jitter, so its local
// motion is ds_j.
class SynthSession {
 public:
  explicit SynthSession(SynthSpec spec);
  ~SynthSession();
  SynthSession(SynthSession&&) noexcept;
  SynthSession& operator=(SynthSession&&) noexcept;

  const SynthSpec& spec() const { return spec_; }
  int people() const { return spec_.people; }
  int group_of(int person) const { return group_of_[static_cast<std::size_t>(person)]; }
  std::vector<int> group_labels() const { return group_of_; }
  std::string video_id(int person) const;

  // Groupmates visible in the observer's video, in head-slot order.
  std::vector<int> visible_targets(int observer) const;

  const FrameSource& video(int person) const;
  cv::Mat render(int person, int t) const;  // RGB CV_32FC3 in [0, 1]

  // Frames with ground truth: every fps/2 frames, excluding the last frame
  // (no trajectory point exists there).
  std::vector<int> annotated_frames() const;

  // Head-disc support of `target` in `observer`'s frame t (CV_8UC1, 0/255);
  // all zero when the target is not a visible groupmate.
  cv::Mat head_mask(int observer, int target, int t) const;

  // Latent signal s_k(t), t in [0, frames).
  const std::vector<Vec2>& signal(int person) const;

  // Centre of the target's head in the observer's frame t.
  cv::Point2d head_center(int observer, int target, int t) const;

 private:
  struct Impl;
  void rebind_sources();
  SynthSpec spec_;
  std::vector<int> group_of_;
  std::unique_ptr<Impl> impl_;
};

SynthSession generate(const SynthSpec& spec, const PipelineConfig& config = {});

// Band-limited Gaussian signal: white noise smoothed with a Gaussian of
// sigma = fps / (2 pi bandwidth) frames, rescaled to standard deviation
// `amplitude` per axis.
std::vector<Vec2> band_limited_signal(std::uint64_t seed, int frames, double fps, double bandwidth, double amplitude);

// Writes spec.json, videos/<id>/frame_%06d.ppm + manifest.json,
// truth/<observer>/<target>/mask_%06d.pgm and oracle/signals.json.
void write_session(const SynthSession& session, const std::filesystem::path& dir);

// Ground truth and videos of one benchmark session, from memory or from disk.
class BenchSession {
 public:
  virtual ~BenchSession() = default;
  virtual int size() const = 0;
  virtual const FrameSource& video(int k) const = 0;
  virtual std::string video_id(int k) const = 0;
  virtual std::vector<int> group_labels() const = 0;
  virtual std::vector<int> annotated_frames() const = 0;
  virtual std::vector<int> visible_targets(int observer) const = 0;
  virtual cv::Mat head_mask(int observer, int target, int t) const = 0;
};

std::unique_ptr<BenchSession> memory_bench_session(const SynthSession& session);
// Reads a directory written by write_session; never touches oracle/.
std::unique_ptr<BenchSession> disk_bench_session(const std::filesystem::path& dir, const PipelineConfig& config);

struct StageTimes {
  double motion_and_candidates = 0.0;
  double scoring = 0.0;
  double mapping = 0.0;
  double affinity = 0.0;
};

struct SessionAnalysis {
  std::vector<VideoAnalysis> videos;
  double mean_length = 0.0;  // mu_l over every candidate of the session
  double seconds = 0.0;
};

SessionAnalysis analyze_session(const BenchSession& session, const PipelineConfig& config, int jobs = 1);

enum class VariantKind { kC, kCG, kTwoStep, kAsym };

struct Variant {
  VariantKind kind = VariantKind::kC;
  double top_percent_p = 25.0;  // two-step only
  int pieces_k = 64;            // two-step only

  std::string name() const;
};

// "C", "C+G", "asym", "two-step", "two-step(P,K)" e.g. "two-step(25,64)".
Variant parse_variant(const std::string& text);

struct PairResult {
  int observer = 0;
  int target = 0;
  double auc = 0.0;
  std::size_t candidates = 0;
  std::size_t exact_evaluations = 0;
  std::uint64_t step1_multiply_adds = 0;
  long top1 = -1;  // candidate index with the highest posterior (-1 when none)
};

struct QueryResult {
  int query = 0;
  double r_precision = 0.0;
};

struct BenchmarkReport {
  std::string variant;
  std::vector<PairResult> pairs;
  double session_auc = 0.0;  // mean over pairs
  std::vector<QueryResult> queries;
  double mean_r_precision = 0.0;
  ClusteringMetrics clustering;
  ClusterResult clusters;
  std::size_t exact_evaluations = 0;
  std::size_t total_candidates = 0;
  std::uint64_t step1_multiply_adds = 0;
  double mean_length = 0.0;
  StageTimes times;
};

// Scores every in-group (target, observer) pair for AUC and every ordered
// video pair for the affinity matrix. `prior` is required by C+G.
BenchmarkReport evaluate_variant(const BenchSession& session, const SessionAnalysis& analysis,
                                 const PipelineConfig& config, const Variant& variant,
                                 const PriorModel* prior = nullptr, int jobs = 1);

// Trains the generic prior on the labeled candidates of every observer video.
PriorModel train_session_prior(const BenchSession& session, const SessionAnalysis& analysis,
                               const std::string& tag = "");

// Seed of the auxiliary session the C+G prior is trained on.
std::uint64_t auxiliary_seed(std::uint64_t seed);

// generate -> analyze -> (train prior on the auxiliary seed for C+G) -> evaluate.
BenchmarkReport run_benchmark(const SynthSpec& spec, const PipelineConfig& config, const Variant& variant,
                              int jobs = 1);

nlohmann::ordered_json report_to_json(const BenchmarkReport& report);

// report.json plus table1_auc.csv, table2_time.csv, table3_retrieval.csv and
// table4_clustering.csv.
void write_report(const BenchmarkReport& report, const std::filesystem::path& dir);

}  // namespace egocorr
