#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egocorr/candidates.hpp"
#include "egocorr/motion.hpp"

namespace egocorr {

// Channels below this standard deviation carry no correlation evidence.
inline constexpr double kDegenerateStd = 1e-6;

// Zero-mean, unit-variance channel; `degenerate` when the input was (nearly) constant,
// in which case the values are all zero.
struct NormalizedChannel {
  std::vector<double> values;
  bool degenerate = false;
};

NormalizedChannel standardize(std::span<const double> channel);

// Local channels (u, v) and the matching window of the global pattern (U, V)
// with V sign-inverted: nodding down shows as upward global motion.
struct NormalizedPatternPair {
  NormalizedChannel u, v;
  NormalizedChannel global_u, global_v;

  std::size_t length() const { return u.values.size(); }
};

// Crops the global pattern to [begin, begin + length) and standardizes every
// channel over that window. local.size() must be >= length; only the first
// `length` local samples are used. Throws DataError if the window falls
// outside the global pattern.
NormalizedPatternPair crop_and_normalize(std::span<const MotionSample> local, std::span<const Vec2> global,
                                         int begin, int length);

// Average of the horizontal and vertical ZNCCs; a degenerate channel on either
// side contributes 0 to its half. Clamped to [-1, 1].
double zncc(const NormalizedPatternPair& pair);

// (1 + exp(-c))^-1
double likelihood(double correlation);

// Unnormalized ranking score likelihood * prior (prior = 1 in correlation-only mode).
double posterior(double likelihood, double prior);

struct CandidateScore {
  double upper_bound = 0.0;  // NaN when not computed
  double correlation = 0.0;
  double likelihood = 0.0;
  double prior = 1.0;
  double posterior = 0.0;
  bool evaluated = false;  // exact correlation computed
};

// Two-class linear discriminant on the 11 candidate features. weights/bias
// act on raw features (standardization folded in); the projection
// z = w.f + bias is mapped to P(target | z) through two Gaussians with
// means mu0/mu1, shared variance pooled_var and class prior prior1.
struct PriorModel {
  std::array<double, kFeatureCount> weights{};
  double bias = 0.0;
  double mu0 = 0.0;
  double mu1 = 0.0;
  double pooled_var = 1.0;
  double prior1 = 0.5;
  std::string trained_on;

  double project(const CandidateFeatures& f) const;
};

struct LabeledFeatures {
  CandidateFeatures features;
  bool target = false;
};

inline constexpr double kLdaRidge = 1e-6;
inline constexpr std::size_t kMinSamplesPerClass = 12;

// Throws Error when a class is missing or has fewer than 12 samples, or when
// the pooled covariance stays singular after the ridge.
PriorModel train_prior(const std::vector<LabeledFeatures>& samples, const std::string& tag = "");

double prior_predict(const PriorModel& model, const CandidateFeatures& f);

// JSON {weights[11], bias, mu0, mu1, pooled_var, prior1, trained_on}.
void save_prior(const PriorModel& model, const std::filesystem::path& path);
PriorModel load_prior(const std::filesystem::path& path);

}  // namespace egocorr
