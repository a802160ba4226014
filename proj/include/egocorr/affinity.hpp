#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egocorr/candidates.hpp"
#include "egocorr/targetness.hpp"

namespace egocorr {

enum class AffinityMode { kSymmetric, kDirected };

// n x n scores in [0, 1]. In directed mode a[q][p] = A(V_q | V_p): how likely
// the wearer of video p is visible in video q.
struct AffinityMatrix {
  std::size_t n = 0;
  std::vector<double> a;  // row-major
  AffinityMode mode = AffinityMode::kSymmetric;
  std::vector<std::string> ids;

  double operator()(std::size_t row, std::size_t col) const { return a[row * n + col]; }
  double& operator()(std::size_t row, std::size_t col) { return a[row * n + col]; }
};

// (1 + exp(-(l - mu)))^-1
double length_weight(double length, double mean_length);

// max_i likelihood_i * S(l_i; mu_l); 0 for an empty candidate set.
double directed_affinity(std::span<const double> likelihoods, std::span<const int> lengths, double mean_length);
double directed_affinity(std::span<const Trajectory> candidates, std::span<const CandidateScore> scores,
                         double mean_length, bool use_posterior = false);

double symmetric_affinity(double a_pq, double a_qp);

// Builds the symmetric matrix max(D[p][q], D[q][p]) from a directed one.
AffinityMatrix symmetrize(const AffinityMatrix& directed);

// Arithmetic mean of every candidate length. Throws Error when empty.
double mean_candidate_length(std::span<const std::vector<Trajectory>> repository);
double mean_candidate_length(std::span<const int> lengths);

struct RetrievalResult {
  std::vector<std::size_t> ranking;  // query excluded
  double r_precision = 0.0;
};

// Ranks the other videos by score to the query, descending (ties: lower index).
// In directed mode the score of q is A(V_q | V_query). Throws Error when no
// video is relevant.
RetrievalResult retrieve(std::size_t query, const AffinityMatrix& affinity, const std::vector<bool>& relevant);

struct ClusterResult {
  std::vector<std::size_t> exemplars;
  std::vector<std::size_t> assignment;  // exemplar index per item
  int iterations = 0;
  bool converged = true;
};

struct ApOptions {
  double damping = 0.5;
  int max_iter = 1000;
  int convergence_window = 50;
  bool use_median_preference = true;
  double preference = 0.0;  // used when use_median_preference is false
};

// Responsibility/availability message passing on an n x n similarity
// (row-major; s[i][k] = how well k suits as exemplar of i). The diagonal is
// replaced by the preference (median of the off-diagonal by default).
ClusterResult affinity_propagation(std::span<const double> similarity, std::size_t n, const ApOptions& options = {});

struct ClusteringMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::size_t group_count = 0;
};

// Pairwise co-membership precision/recall over unordered pairs. An empty
// denominator counts as 1 (no pair could be wrong).
ClusteringMetrics clustering_metrics(const ClusterResult& predicted, const std::vector<int>& truth_labels);
ClusteringMetrics clustering_metrics(const std::vector<int>& predicted_labels, const std::vector<int>& truth_labels,
                                     std::size_t group_count);

// CSV with a header row of source ids followed by one row per video.
void write_affinity_csv(const std::filesystem::path& path, const AffinityMatrix& m);
AffinityMatrix read_affinity_csv(const std::filesystem::path& path, AffinityMode mode = AffinityMode::kSymmetric);

void write_cluster_json(const std::filesystem::path& path, const ClusterResult& result,
                        const std::vector<std::string>& ids);

}  // namespace egocorr
