#include "egocorr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "egocorr/error.hpp"
#include "egocorr/parallel.hpp"

namespace egocorr {

std::vector<PaaSketch> sketch_candidates(std::span<const Trajectory> candidates, int pieces_k) {
  std::vector<PaaSketch> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out[i] = sketch_local(candidates[i].local_motion, pieces_k);
  return out;
}

std::filesystem::path flow_cache_file(const std::filesystem::path& dir, int transition) {
  char name[32];
  std::snprintf(name, sizeof(name), "flow_%06d.egfl", transition);
  return dir / name;
}

VideoAnalysis analyze_video(const FrameSource& video, const PipelineConfig& config, const AnalyzeOptions& options) {
  validate(config);
  const int frames = video.frame_count();
  if (frames < 2) throw DataError("sequence too short");
  const int transitions = frames - 1;
  const int width = video.width(), height = video.height();

  VideoAnalysis out;
  out.manifest = {video.source_id(), video.fps(), frames, width, height};
  out.global.vectors.resize(static_cast<std::size_t>(transitions));
  out.global.failed.resize(static_cast<std::size_t>(transitions));
  if (!options.flow_cache.empty() && options.write_flow_cache) std::filesystem::create_directories(options.flow_cache);

  struct Work {
    Frame frame;
    cv::Mat min_eigen;
    FlowField flow;
    FlowField local;
    TransitionMotion motion;
  };
  CandidateTracker tracker(width, height, config);
  // Transitions are computed in parallel chunks and consumed in order, so
  // the tracker sees the same sequence whatever the worker count.
  const int chunk = std::max(options.jobs, 1) * 4;
  Frame carry = video.frame(0);
  for (int start = 0; start < transitions; start += chunk) {
    const int n = std::min(chunk, transitions - start);
    std::vector<Work> work(static_cast<std::size_t>(n) + 1);
    work[0].frame = std::move(carry);
    parallel_for(static_cast<std::size_t>(n), options.jobs,
                 [&](std::size_t i) { work[i + 1].frame = video.frame(start + static_cast<int>(i) + 1); });
    parallel_for(static_cast<std::size_t>(n), options.jobs, [&](std::size_t i) {
      const int t = start + static_cast<int>(i);
      Work& w = work[i];
      const Frame& next = work[i + 1].frame;
      if (next.width() != width || next.height() != height) throw DataError("frame size mismatch");
      w.motion = estimate_transition(w.frame, next, config, t);
      const auto cached = options.flow_cache.empty() ? std::filesystem::path{} : flow_cache_file(options.flow_cache, t);
      if (!cached.empty() && !options.write_flow_cache) {
        w.flow = read_flow(cached);
        if (w.flow.width() != width || w.flow.height() != height) throw DataError("cached flow size mismatch");
      } else {
        w.flow = dense_flow(w.frame, next);
        if (!cached.empty()) write_flow(cached, w.flow, t);
      }
      w.local = local_motion(w.flow, global_motion_field(w.motion.homography, width, height));
      w.min_eigen = min_eigen_map(w.frame.gray);
    });
    for (int i = 0; i < n; ++i) {
      Work& w = work[static_cast<std::size_t>(i)];
      const auto t = static_cast<std::size_t>(start + i);
      out.global.vectors[t] = w.motion.mean;
      out.global.failed[t] = !w.motion.ok;
      tracker.step(start + i, w.frame, w.min_eigen, w.flow, w.local);
    }
    carry = std::move(work[static_cast<std::size_t>(n)].frame);
  }
  out.candidates = tracker.finish();
  out.global_filtered = median_filter_pattern(out.global.vectors, config.median_window);
  out.sketch_k = config.paa_pieces_k;
  out.sketches = sketch_candidates(out.candidates, out.sketch_k);
  return out;
}

void write_candidate_store(const std::filesystem::path& path, std::span<const Trajectory> candidates,
                           std::span<const PaaSketch> sketches, int pieces_k) {
  using detail::put;
  if (!sketches.empty() && sketches.size() != candidates.size()) {
    throw Error("write_candidate_store: one sketch per candidate required");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  detail::put_magic(out, "EGTR");
  put<std::uint32_t>(out, static_cast<std::uint32_t>(candidates.size()));
  for (const auto& c : candidates) {
    put<std::int32_t>(out, c.begin_frame);
    put<std::int32_t>(out, c.length());
    for (const auto& p : c.points) {
      put<float>(out, p.x);
      put<float>(out, p.y);
    }
    for (const auto& m : c.local_motion) {
      put<float>(out, m.u);
      put<float>(out, m.v);
    }
    for (double f : c.features.to_array()) put<float>(out, static_cast<float>(f));
  }
  if (sketches.empty()) return;
  detail::put_magic(out, "EGSK");
  put<std::uint32_t>(out, static_cast<std::uint32_t>(pieces_k));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sketches.size()));
  for (const auto& s : sketches) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.trimmed_length));
    if (!s.present()) continue;
    if (s.pieces_k != pieces_k) throw Error("write_candidate_store: sketch K differs from the section K");
    for (double x : s.pieces_u) put<float>(out, static_cast<float>(x));
    for (double x : s.pieces_v) put<float>(out, static_cast<float>(x));
    put<float>(out, static_cast<float>(s.var_u));
    put<float>(out, static_cast<float>(s.var_v));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

CandidateStore read_candidate_store(const std::filesystem::path& path) {
  using detail::get;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string what = "candidate store " + path.string();
  detail::expect_magic(in, "EGTR", what);
  const auto count = get<std::uint32_t>(in, what);
  CandidateStore store;
  store.candidates.resize(count);
  for (auto& c : store.candidates) {
    c.begin_frame = get<std::int32_t>(in, what);
    const auto l = get<std::int32_t>(in, what);
    if (c.begin_frame < 0 || l < 1 || l > (1 << 24)) throw DataError(what + ": bad trajectory header");
    c.points.resize(static_cast<std::size_t>(l));
    c.local_motion.resize(static_cast<std::size_t>(l));
    for (auto& p : c.points) {
      p.x = get<float>(in, what);
      p.y = get<float>(in, what);
    }
    for (auto& m : c.local_motion) {
      m.u = get<float>(in, what);
      m.v = get<float>(in, what);
    }
    std::array<double, kFeatureCount> f{};
    for (auto& x : f) x = get<float>(in, what);
    c.features = CandidateFeatures::from_array(f);
  }
  char magic[4];
  if (!in.read(magic, 4)) return store;  // no sketch section
  if (std::string(magic, 4) != "EGSK") throw DataError(what + ": unexpected trailing data");
  const auto k = get<std::uint32_t>(in, what);
  const auto n = get<std::uint32_t>(in, what);
  if (n != count || k == 0) throw DataError(what + ": sketch section does not match the candidates");
  store.sketch_k = static_cast<int>(k);
  store.sketches.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = store.sketches[i];
    s.pieces_k = static_cast<int>(k);
    s.original_length = store.candidates[i].length();
    s.trimmed_length = static_cast<int>(get<std::uint32_t>(in, what));
    if (!s.present()) continue;
    if (s.trimmed_length % static_cast<int>(k) != 0 || s.trimmed_length > s.original_length) {
      throw DataError(what + ": bad trimmed length");
    }
    s.pieces_u.resize(k);
    s.pieces_v.resize(k);
    for (auto& x : s.pieces_u) x = get<float>(in, what);
    for (auto& x : s.pieces_v) x = get<float>(in, what);
    s.var_u = get<float>(in, what);
    s.var_v = get<float>(in, what);
  }
  return store;
}

void write_global_csv(const std::filesystem::path& path, const GlobalMotionPattern& raw,
                      std::span<const Vec2> filtered) {
  if (filtered.size() != raw.size()) throw Error("write_global_csv: filtered pattern length differs");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "t,U,V,U_f,V_f,failed\n";
  for (std::size_t t = 0; t < raw.size(); ++t) {
    out << t << ',' << raw.vectors[t].u << ',' << raw.vectors[t].v << ',' << filtered[t].u << ',' << filtered[t].v
        << ',' << (raw.failed[t] ? 1 : 0) << '\n';
  }
}

void read_global_csv(const std::filesystem::path& path, GlobalMotionPattern& raw, std::vector<Vec2>& filtered) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("t,U,V", 0) != 0) throw DataError(path.string() + ": missing global.csv header");
  raw = {};
  filtered.clear();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": bad value '" + cell + "'");
      }
    }
    if (v.size() != 6) throw DataError(path.string() + ": expected 6 columns");
    raw.vectors.push_back({v[1], v[2]});
    filtered.push_back({v[3], v[4]});
    raw.failed.push_back(v[5] != 0.0);
  }
}

void save_analysis(const VideoAnalysis& a, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_manifest(a.manifest, dir / kManifestName);
  write_global_csv(dir / kGlobalCsvName, a.global, a.global_filtered);
  write_candidate_store(dir / kCandidateStoreName, a.candidates, a.sketches, a.sketch_k);
}

VideoAnalysis load_analysis(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not an analysis directory: " + dir.string());
  VideoAnalysis a;
  a.manifest = read_manifest(dir / kManifestName);
  read_global_csv(dir / kGlobalCsvName, a.global, a.global_filtered);
  auto store = read_candidate_store(dir / kCandidateStoreName);
  a.candidates = std::move(store.candidates);
  a.sketches = std::move(store.sketches);
  a.sketch_k = store.sketch_k;
  return a;
}

ScoringResult score_observer(const VideoAnalysis& observer, std::span<const Vec2> query_global,
                             const PipelineConfig& config, const ScoreRequest& request) {
  if (query_global.size() != observer.global.size()) {
    throw DataError("query and observer videos differ in length (" + std::to_string(query_global.size() + 1) +
                    " vs " + std::to_string(observer.global.size() + 1) + " frames)");
  }
  std::vector<double> priors;
  if (request.prior) {
    priors.resize(observer.candidates.size());
    for (std::size_t i = 0; i < priors.size(); ++i) priors[i] = prior_predict(*request.prior, observer.candidates[i].features);
  }
  if (!request.two_step) return exhaustive_scores(observer.candidates, query_global, priors, request.jobs);
  if (observer.sketch_k == config.paa_pieces_k && observer.sketches.size() == observer.candidates.size()) {
    return two_step_scores(observer.candidates, observer.sketches, query_global, priors, config, request.jobs);
  }
  const auto sketches = sketch_candidates(observer.candidates, config.paa_pieces_k);
  return two_step_scores(observer.candidates, sketches, query_global, priors, config, request.jobs);
}

void write_scores_csv(const std::filesystem::path& path, std::span<const Trajectory> candidates,
                      const ScoringResult& result) {
  if (candidates.size() != result.scores.size()) throw Error("write_scores_csv: size mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "index,b,l,UB,C,likelihood,prior,posterior\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& s = result.scores[i];
    out << i << ',' << candidates[i].begin_frame << ',' << candidates[i].length() << ',' << s.upper_bound << ','
        << s.correlation << ',' << s.likelihood << ',' << s.prior << ',' << s.posterior << '\n';
  }
}

std::vector<double> read_posteriors_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("index,b,l,UB,C,likelihood,prior,posterior", 0) != 0) {
    throw DataError(path.string() + ": not a scores CSV");
  }
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find_last_of(',');
    try {
      out.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError(path.string() + ": bad posterior in '" + line + "'");
    }
  }
  return out;
}

std::vector<double> posteriors_of(const ScoringResult& r) {
  std::vector<double> out(r.scores.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.scores[i].posterior;
  return out;
}

std::vector<double> likelihoods_of(const ScoringResult& r) {
  std::vector<double> out(r.scores.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.scores[i].evaluated ? r.scores[i].likelihood : 0.0;
  return out;
}

std::vector<int> label_candidates(std::span<const Trajectory> candidates, std::span<const int> annotated_frames,
                                  const MaskLookup& mask) {
  std::vector<int> inside(candidates.size(), 0), seen(candidates.size(), 0);
  for (int t : annotated_frames) {
    const cv::Mat m = mask(t);
    if (m.empty()) continue;
    CV_Assert(m.type() == CV_8UC1);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto& c = candidates[i];
      if (!c.alive_at(t)) continue;
      const cv::Point2f p = c.points[static_cast<std::size_t>(t - c.begin_frame)];
      const int x = std::clamp(static_cast<int>(std::lround(p.x)), 0, m.cols - 1);
      const int y = std::clamp(static_cast<int>(std::lround(p.y)), 0, m.rows - 1);
      ++seen[i];
      inside[i] += m.at<std::uint8_t>(y, x) ? 1 : 0;
    }
  }
  std::vector<int> labels(candidates.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = seen[i] == 0 ? -1 : (2 * inside[i] >= seen[i] ? 1 : 0);
  return labels;
}

std::vector<LabeledFeatures> labeled_samples(std::span<const Trajectory> candidates,
                                             std::span<const int> annotated_frames, const MaskLookup& mask) {
  const auto labels = label_candidates(candidates, annotated_frames, mask);
  std::vector<LabeledFeatures> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) out.push_back({candidates[i].features, labels[i] == 1});
  }
  return out;
}

}  // namespace egocorr
