#include "egocorr/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "egocorr/error.hpp"
#include "egocorr/parallel.hpp"

namespace egocorr {
namespace {

double population_variance(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size());
}

std::vector<double> segment_means(std::span<const double> x, int pieces_k) {
  const std::size_t seg = x.size() / static_cast<std::size_t>(pieces_k);
  std::vector<double> out(static_cast<std::size_t>(pieces_k), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double s = 0.0;
    for (std::size_t t = k * seg; t < (k + 1) * seg; ++t) s += x[t];
    out[k] = s / static_cast<double>(seg);
  }
  return out;
}

}  // namespace

PaaChannel paa(std::span<const double> channel, int pieces_k) {
  if (pieces_k < 1) throw Error("paa: K must be >= 1");
  const std::size_t k = static_cast<std::size_t>(pieces_k);
  const std::size_t trimmed = (channel.size() / k) * k;
  if (trimmed < k) throw Error("trajectory too short for K");
  PaaChannel out;
  out.trimmed_length = static_cast<int>(trimmed);
  if (trimmed < channel.size()) {
    const NormalizedChannel kept = standardize(channel.first(trimmed));
    out.degenerate = kept.degenerate;
    out.pieces = segment_means(kept.values, pieces_k);
  } else {
    out.pieces = segment_means(channel, pieces_k);
    out.degenerate = std::all_of(channel.begin(), channel.end(), [](double v) { return v == 0.0; });
  }
  out.variance = out.degenerate ? 0.0 : population_variance(out.pieces);
  return out;
}

PaaSketch sketch_local(std::span<const MotionSample> local_motion, int pieces_k) {
  PaaSketch s;
  s.pieces_k = pieces_k;
  s.original_length = static_cast<int>(local_motion.size());
  const std::size_t k = static_cast<std::size_t>(pieces_k);
  const std::size_t trimmed = (local_motion.size() / k) * k;
  if (trimmed < k) return s;
  std::vector<double> u(trimmed), v(trimmed);
  for (std::size_t t = 0; t < trimmed; ++t) {
    u[t] = local_motion[t].u;
    v[t] = local_motion[t].v;
  }
  const NormalizedChannel nu = standardize(u), nv = standardize(v);
  const PaaChannel pu = paa(nu.values, pieces_k), pv = paa(nv.values, pieces_k);
  s.trimmed_length = static_cast<int>(trimmed);
  s.pieces_u = pu.pieces;
  s.pieces_v = pv.pieces;
  s.var_u = nu.degenerate ? 0.0 : pu.variance;
  s.var_v = nv.degenerate ? 0.0 : pv.variance;
  return s;
}

PaaSketch sketch_global(std::span<const Vec2> global, int begin, int trimmed_length, int pieces_k) {
  if (begin < 0 || trimmed_length < pieces_k || trimmed_length % pieces_k != 0 ||
      static_cast<std::size_t>(begin + trimmed_length) > global.size()) {
    throw DataError("sketch_global: bad window");
  }
  std::vector<double> u(static_cast<std::size_t>(trimmed_length)), v(u.size());
  for (std::size_t t = 0; t < u.size(); ++t) {
    u[t] = global[static_cast<std::size_t>(begin) + t].u;
    v[t] = -global[static_cast<std::size_t>(begin) + t].v;
  }
  const NormalizedChannel nu = standardize(u), nv = standardize(v);
  const PaaChannel pu = paa(nu.values, pieces_k), pv = paa(nv.values, pieces_k);
  PaaSketch s;
  s.pieces_k = pieces_k;
  s.trimmed_length = trimmed_length;
  s.original_length = trimmed_length;
  s.pieces_u = pu.pieces;
  s.pieces_v = pv.pieces;
  s.var_u = nu.degenerate ? 0.0 : pu.variance;
  s.var_v = nv.degenerate ? 0.0 : pv.variance;
  return s;
}

GlobalSketcher::GlobalSketcher(std::span<const Vec2> global)
    : size_(global.size()), su_(global.size() + 1, 0.0), su2_(su_), sv_(su_), sv2_(su_) {
  for (std::size_t t = 0; t < global.size(); ++t) {
    const double u = global[t].u, v = -global[t].v;
    su_[t + 1] = su_[t] + u;
    su2_[t + 1] = su2_[t] + u * u;
    sv_[t + 1] = sv_[t] + v;
    sv2_[t + 1] = sv2_[t] + v * v;
  }
}

PaaSketch GlobalSketcher::sketch(int begin, int trimmed_length, int pieces_k) const {
  if (begin < 0 || trimmed_length < pieces_k || trimmed_length % pieces_k != 0 ||
      static_cast<std::size_t>(begin + trimmed_length) > size_) {
    throw DataError("GlobalSketcher: bad window");
  }
  PaaSketch s;
  s.pieces_k = pieces_k;
  s.trimmed_length = trimmed_length;
  s.original_length = trimmed_length;
  const auto b = static_cast<std::size_t>(begin);
  const auto n = static_cast<std::size_t>(trimmed_length);
  const auto seg = n / static_cast<std::size_t>(pieces_k);
  const double len = static_cast<double>(n);
  auto channel = [&](const std::vector<double>& s1, const std::vector<double>& s2, std::vector<double>& pieces,
                     double& variance) {
    const double mean = (s1[b + n] - s1[b]) / len;
    const double var = std::max((s2[b + n] - s2[b]) / len - mean * mean, 0.0);
    const double sd = std::sqrt(var);
    pieces.assign(static_cast<std::size_t>(pieces_k), 0.0);
    variance = 0.0;
    if (!(sd >= kDegenerateStd)) return;
    double sum = 0.0;
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      const double raw = (s1[b + (k + 1) * seg] - s1[b + k * seg]) / static_cast<double>(seg);
      pieces[k] = (raw - mean) / sd;
      sum += pieces[k];
    }
    const double pm = sum / static_cast<double>(pieces.size());
    for (double p : pieces) variance += (p - pm) * (p - pm);
    variance /= static_cast<double>(pieces.size());
  };
  channel(su_, su2_, s.pieces_u, s.var_u);
  channel(sv_, sv2_, s.pieces_v, s.var_v);
  return s;
}

double upper_bound(const PaaSketch& local, const PaaSketch& global) {
  if (local.pieces_k != global.pieces_k || local.pieces_u.size() != global.pieces_u.size() ||
      local.pieces_v.size() != global.pieces_v.size()) {
    throw Error("upper_bound: sketches use different K");
  }
  const double k = static_cast<double>(local.pieces_k);
  double du = 0.0, dv = 0.0;
  for (std::size_t i = 0; i < local.pieces_u.size(); ++i) {
    du += local.pieces_u[i] * global.pieces_u[i];
    dv += local.pieces_v[i] * global.pieces_v[i];
  }
  const double z = 1.0 - (local.var_u + global.var_u + local.var_v + global.var_v) / 4.0;
  return 0.5 * (du / k + dv / k) + z;
}

DistanceBoundSides euclid_lower_bound_check(std::span<const double> u, std::span<const double> global_u,
                                            int pieces_k) {
  if (u.size() != global_u.size() || pieces_k < 1 || u.size() % static_cast<std::size_t>(pieces_k) != 0 ||
      u.empty()) {
    throw Error("euclid_lower_bound_check: length must be a positive multiple of K");
  }
  DistanceBoundSides out;
  for (std::size_t t = 0; t < u.size(); ++t) out.lhs += (u[t] - global_u[t]) * (u[t] - global_u[t]);
  out.lhs /= static_cast<double>(u.size());
  const auto a = segment_means(u, pieces_k), b = segment_means(global_u, pieces_k);
  for (std::size_t k = 0; k < a.size(); ++k) out.rhs += (a[k] - b[k]) * (a[k] - b[k]);
  out.rhs /= static_cast<double>(pieces_k);
  return out;
}

double exact_correlation(const Trajectory& candidate, std::span<const Vec2> global) {
  return zncc(crop_and_normalize(candidate.local_motion, global, candidate.begin_frame, candidate.length()));
}

namespace {

void finish_score(CandidateScore& s, double correlation, double prior) {
  s.correlation = correlation;
  s.likelihood = likelihood(correlation);
  s.prior = prior;
  s.posterior = posterior(s.likelihood, prior);
  s.evaluated = true;
}

double prior_at(std::span<const double> priors, std::size_t i) { return priors.empty() ? 1.0 : priors[i]; }

void check_priors(std::span<const Trajectory> candidates, std::span<const double> priors) {
  if (!priors.empty() && priors.size() != candidates.size()) {
    throw Error("prior scores must match the candidate count");
  }
}

}  // namespace

std::size_t selection_count(double top_percent_p, std::size_t n) {
  const double raw = top_percent_p / 100.0 * static_cast<double>(n);
  // Guard against 25/100*100 landing a hair above an integer.
  const double rounded = std::round(raw);
  const double count = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
  return std::min<std::size_t>(n, static_cast<std::size_t>(count));
}

ScoringResult exhaustive_scores(std::span<const Trajectory> candidates, std::span<const Vec2> global,
                                std::span<const double> priors, int jobs) {
  check_priors(candidates, priors);
  ScoringResult out;
  out.scores.resize(candidates.size());
  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    out.scores[i].upper_bound = std::numeric_limits<double>::quiet_NaN();
    finish_score(out.scores[i], exact_correlation(candidates[i], global), prior_at(priors, i));
  });
  out.exact_evaluations = candidates.size();
  return out;
}

ScoringResult two_step_scores(std::span<const Trajectory> candidates, std::span<const PaaSketch> local_sketches,
                              std::span<const Vec2> global, std::span<const double> priors,
                              const PipelineConfig& config, int jobs) {
  check_priors(candidates, priors);
  if (local_sketches.size() != candidates.size()) throw Error("two_step_scores: one sketch per candidate required");
  const int k = config.paa_pieces_k;
  const std::size_t n = candidates.size();
  ScoringResult out;
  out.scores.resize(n);

  const GlobalSketcher sketcher(global);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& sk = local_sketches[i];
    auto& s = out.scores[i];
    if (!sk.present()) {
      s.upper_bound = std::numeric_limits<double>::infinity();
      return;
    }
    if (sk.pieces_k != k) throw Error("two_step_scores: candidate sketch uses a different K");
    s.upper_bound = upper_bound(sk, sketcher.sketch(candidates[i].begin_frame, sk.trimmed_length, k));
  });
  for (const auto& sk : local_sketches) {
    if (sk.present()) out.step1_multiply_adds += 4ull * static_cast<std::uint64_t>(k);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ua = out.scores[a].upper_bound, ub = out.scores[b].upper_bound;
    if (ua != ub) return ua > ub;
    const int la = candidates[a].length(), lb = candidates[b].length();
    if (la != lb) return la > lb;
    return a < b;
  });
  const std::size_t selected = selection_count(config.top_percent_p, n);
  order.resize(selected);
  std::sort(order.begin(), order.end());
  parallel_for(order.size(), jobs, [&](std::size_t j) {
    const std::size_t i = order[j];
    finish_score(out.scores[i], exact_correlation(candidates[i], global), prior_at(priors, i));
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.scores[i].evaluated) {
      out.scores[i].correlation = std::numeric_limits<double>::quiet_NaN();
      out.scores[i].likelihood = 0.0;
      out.scores[i].prior = prior_at(priors, i);
      out.scores[i].posterior = 0.0;
    }
  }
  out.exact_evaluations = selected;
  return out;
}

}  // namespace egocorr
