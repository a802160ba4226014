#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "egocorr/candidates.hpp"
#include "egocorr/config.hpp"
#include "egocorr/motion.hpp"
#include "egocorr/pruning.hpp"
#include "egocorr/targetness.hpp"
#include "egocorr/video_io.hpp"

namespace egocorr {

// Everything the search needs from one video, computed in a single streaming
// pass: the global pattern (raw and median-filtered, length T-1), the
// candidate trajectories and their sketches at config.paa_pieces_k.
struct VideoAnalysis {
  VideoManifest manifest;
  GlobalMotionPattern global;
  std::vector<Vec2> global_filtered;
  std::vector<Trajectory> candidates;
  std::vector<PaaSketch> sketches;  // one per candidate; absent when l < K
  int sketch_k = 0;
};

struct AnalyzeOptions {
  int jobs = 1;
  // When set, dense flows are read from (or, with write_flow_cache, written to)
  // flow_<t>.egfl files in this directory.
  std::filesystem::path flow_cache;
  bool write_flow_cache = false;
};

VideoAnalysis analyze_video(const FrameSource& video, const PipelineConfig& config,
                            const AnalyzeOptions& options = {});

std::vector<PaaSketch> sketch_candidates(std::span<const Trajectory> candidates, int pieces_k);

std::filesystem::path flow_cache_file(const std::filesystem::path& dir, int transition);

// Candidate store: 'EGTR', u32 count, then per trajectory i32 b, i32 l,
// l x (x, y), l x (u, v), 11 features (all float32). An optional sketch
// section follows: 'EGSK', u32 K, u32 count, then per trajectory u32
// trimmed_length, K u pieces, K v pieces, var_u, var_v (float32).
void write_candidate_store(const std::filesystem::path& path, std::span<const Trajectory> candidates,
                           std::span<const PaaSketch> sketches = {}, int pieces_k = 0);
struct CandidateStore {
  std::vector<Trajectory> candidates;
  std::vector<PaaSketch> sketches;  // empty when the store has no sketch section
  int sketch_k = 0;
};
CandidateStore read_candidate_store(const std::filesystem::path& path);

// global.csv: t,U,V,U_f,V_f,failed
void write_global_csv(const std::filesystem::path& path, const GlobalMotionPattern& raw,
                      std::span<const Vec2> filtered);
void read_global_csv(const std::filesystem::path& path, GlobalMotionPattern& raw, std::vector<Vec2>& filtered);

inline constexpr const char* kCandidateStoreName = "candidates.egtr";
inline constexpr const char* kGlobalCsvName = "global.csv";

// An analysis directory holds manifest.json, global.csv and candidates.egtr.
void save_analysis(const VideoAnalysis& analysis, const std::filesystem::path& dir);
VideoAnalysis load_analysis(const std::filesystem::path& dir);

struct ScoreRequest {
  bool two_step = false;
  const PriorModel* prior = nullptr;  // null: correlation only (prior = 1)
  int jobs = 1;
};

// Scores the observer's candidates against a query's filtered global pattern.
// Sketches are recomputed when the stored ones were built with another K.
ScoringResult score_observer(const VideoAnalysis& observer, std::span<const Vec2> query_global,
                             const PipelineConfig& config, const ScoreRequest& request);

// CSV columns: index,b,l,UB,C,likelihood,prior,posterior
void write_scores_csv(const std::filesystem::path& path, std::span<const Trajectory> candidates,
                      const ScoringResult& result);
std::vector<double> read_posteriors_csv(const std::filesystem::path& path);

std::vector<double> posteriors_of(const ScoringResult& result);
std::vector<double> likelihoods_of(const ScoringResult& result);

// Truth mask of frame t (CV_8UC1, nonzero = target); an empty Mat means unannotated.
using MaskLookup = std::function<cv::Mat(int frame)>;

// 1 when at least half of the candidate's points on annotated frames fall in
// the mask, 0 when fewer do, -1 when it never crosses an annotated frame.
std::vector<int> label_candidates(std::span<const Trajectory> candidates, std::span<const int> annotated_frames,
                                  const MaskLookup& mask);

// Feature/label pairs of every candidate that crosses an annotated frame.
std::vector<LabeledFeatures> labeled_samples(std::span<const Trajectory> candidates,
                                             std::span<const int> annotated_frames, const MaskLookup& mask);

}  // namespace egocorr
