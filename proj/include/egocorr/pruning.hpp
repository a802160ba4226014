#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "egocorr/candidates.hpp"
#include "egocorr/config.hpp"
#include "egocorr/motion.hpp"
#include "egocorr/targetness.hpp"

namespace egocorr {

// K-piece constant approximation of one standardized channel.
struct PaaChannel {
  std::vector<double> pieces;
  double variance = 0.0;  // population variance of the pieces
  int trimmed_length = 0;
  bool degenerate = false;
};

// Segment means over the first K*floor(l/K) samples. When trimming drops
// samples the kept prefix is re-standardized first, so the bound's
// zero-mean/unit-variance premise holds exactly. Throws Error("trajectory
// too short for K") when l < K.
PaaChannel paa(std::span<const double> channel, int pieces_k);

struct PaaSketch {
  int pieces_k = 0;
  std::vector<double> pieces_u;
  std::vector<double> pieces_v;
  double var_u = 0.0;
  double var_v = 0.0;
  int trimmed_length = 0;  // K * floor(l / K); 0 when l < K (no sketch)
  int original_length = 0;

  bool present() const { return trimmed_length > 0; }
};

// Sketch of a candidate's local motion (u, v).
PaaSketch sketch_local(std::span<const MotionSample> local_motion, int pieces_k);

// Sketch of the global window [begin, begin + trimmed_length) with V inverted.
PaaSketch sketch_global(std::span<const Vec2> global, int begin, int trimmed_length, int pieces_k);

// Prefix sums over a global pattern, so the sketch of any window costs O(K).
class GlobalSketcher {
 public:
  explicit GlobalSketcher(std::span<const Vec2> global);
  PaaSketch sketch(int begin, int trimmed_length, int pieces_k) const;
  std::size_t size() const { return size_; }

 private:
  std::size_t size_;
  std::vector<double> su_, su2_, sv_, sv2_;  // V already inverted
};

// UB = 1/2 (sum u_k U_k / K + sum v_k V_k / K) + Z,
// Z = 1 - (var_u + var_U + var_v + var_V) / 4.
// Never below the exact ZNCC of the trimmed, re-standardized pair.
// Throws Error when the sketches disagree on K.
double upper_bound(const PaaSketch& local, const PaaSketch& global);

// Both sides of the PAA distance bound for standardized channels whose
// length is a multiple of K: lhs = mean (u_t - U_t)^2, rhs = mean (u_k - U_k)^2.
struct DistanceBoundSides {
  double lhs = 0.0;
  double rhs = 0.0;
};
DistanceBoundSides euclid_lower_bound_check(std::span<const double> u, std::span<const double> global_u, int pieces_k);

struct ScoringResult {
  std::vector<CandidateScore> scores;
  std::size_t exact_evaluations = 0;
  std::uint64_t step1_multiply_adds = 0;
};

// Exact ZNCC over the full candidate length for one candidate.
double exact_correlation(const Trajectory& candidate, std::span<const Vec2> global);

// Every candidate receives its exact correlation. `priors` empty means prior = 1.
ScoringResult exhaustive_scores(std::span<const Trajectory> candidates, std::span<const Vec2> global,
                                std::span<const double> priors, int jobs = 1);

// Step 1: upper bound for every candidate from the sketches (O(K) each).
// Step 2: exact ZNCC for the ceil(P/100 * N) highest bounds (ties: longer,
// then lower index); the others keep posterior 0. Candidates without a
// sketch (l < K) rank first.
ScoringResult two_step_scores(std::span<const Trajectory> candidates, std::span<const PaaSketch> local_sketches,
                              std::span<const Vec2> global, std::span<const double> priors,
                              const PipelineConfig& config, int jobs = 1);

std::size_t selection_count(double top_percent_p, std::size_t n);

}  // namespace egocorr
