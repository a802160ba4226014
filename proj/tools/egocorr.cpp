// Command-line front end: batch subcommands over frame directories,
// analysis directories, score CSVs, maps and synthetic sessions.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "CLI11.hpp"
#include "egocorr/affinity.hpp"
#include "egocorr/analysis.hpp"
#include "egocorr/config.hpp"
#include "egocorr/error.hpp"
#include "egocorr/evalsynth.hpp"
#include "egocorr/mapping.hpp"
#include "egocorr/motion.hpp"
#include "egocorr/parallel.hpp"
#include "egocorr/targetness.hpp"
#include "egocorr/video_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace egocorr;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig cfg = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  for (const auto& s : g.overrides) apply_override(cfg, s);
  validate(cfg);
  return cfg;
}

void emit(const ordered_json& j) { std::cout << j.dump() << std::endl; }

// Output files may name directories that do not exist yet.
const std::string& output_file(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  return path;
}

std::string numbered(const char* prefix, int index) {
  char name[48];
  std::snprintf(name, sizeof(name), "%s_%06d.pgm", prefix, index);
  return name;
}

// Files named <prefix>_NNNNNN.pgm in dir, keyed by frame index.
std::map<int, fs::path> indexed_files(const fs::path& dir, const std::string& prefix) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  const std::regex re(prefix + "_([0-9]+)\\.pgm");
  std::map<int, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, re)) out[std::stoi(m[1].str())] = e.path();
  }
  return out;
}

cv::Mat read_mask(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DataError("cannot read mask " + path.string());
  return m;
}

// Truth directory: mask_*.pgm directly, or one subdirectory per target whose
// masks are united.
struct TruthDir {
  std::vector<fs::path> dirs;
  std::vector<int> frames;

  explicit TruthDir(const fs::path& root) {
    if (!indexed_files(root, "mask").empty()) {
      dirs.push_back(root);
    } else {
      for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
      std::sort(dirs.begin(), dirs.end());
    }
    std::set<int> all;
    for (const auto& d : dirs)
      for (const auto& [t, p] : indexed_files(d, "mask")) all.insert(t);
    if (all.empty()) throw DataError("no mask_*.pgm files under " + root.string());
    frames.assign(all.begin(), all.end());
  }

  cv::Mat mask(int t, int width, int height) const {
    cv::Mat out = cv::Mat::zeros(height, width, CV_8UC1);
    for (const auto& d : dirs) {
      const fs::path p = d / numbered("mask", t);
      if (!fs::exists(p)) continue;
      cv::Mat m = read_mask(p);
      if (m.size() != out.size()) throw DataError("mask size differs from the video: " + p.string());
      out |= m;
    }
    return out;
  }
};

// Filtered global pattern of a query: global.csv of an analysis or motion
// directory, else estimated from the frames in the directory.
std::vector<Vec2> query_pattern(const fs::path& dir, const std::string& pattern, const PipelineConfig& cfg, int jobs) {
  if (fs::exists(dir / kGlobalCsvName)) {
    GlobalMotionPattern raw;
    std::vector<Vec2> filtered;
    read_global_csv(dir / kGlobalCsvName, raw, filtered);
    return filtered;
  }
  const DirectorySource src(dir, pattern, cfg);
  return median_filter_pattern(global_motion_pattern(src, cfg, jobs).vectors, cfg.median_window);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::vector<int>> parse_groups(const std::string& text) {
  std::vector<std::vector<int>> groups;
  std::stringstream ss(text);
  std::string group;
  while (std::getline(ss, group, ';')) {
    std::vector<int> g;
    for (const auto& s : split_list(group)) {
      try {
        g.push_back(std::stoi(s));
      } catch (const std::exception&) {
        throw ConfigError("bad group member '" + s + "'");
      }
    }
    if (!g.empty()) groups.push_back(g);
  }
  return groups;
}

std::size_t index_of_id(const AffinityMatrix& m, const std::string& id) {
  const auto it = std::find(m.ids.begin(), m.ids.end(), id);
  if (it == m.ids.end()) throw DataError("unknown video id '" + id + "'");
  return static_cast<std::size_t>(it - m.ids.begin());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Egocentric target search by ego-motion correlation", "egocorr"};
  app.set_version_flag("--version", std::string("egocorr ") + EGOCORR_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override one config key: key=value (repeatable)");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::string pattern = kDefaultFramePattern;
  auto add_pattern = [&](CLI::App* sub) { sub->add_option("--pattern", pattern, "Frame file pattern"); };

  // motion
  auto* motion = app.add_subcommand("motion", "Dense flow cache and global motion pattern of one video");
  std::string motion_video, motion_out;
  motion->add_option("--video", motion_video, "Frame directory")->required();
  motion->add_option("--out", motion_out, "Output directory")->required();
  add_pattern(motion);

  // extract
  auto* extract = app.add_subcommand("extract", "Global pattern, candidate trajectories and sketches of one video");
  std::string extract_video, extract_out, extract_cache;
  extract->add_option("--video", extract_video, "Frame directory")->required();
  extract->add_option("--out", extract_out, "Analysis directory to write")->required();
  extract->add_option("--flow-cache", extract_cache, "Read dense flows from a motion cache");
  add_pattern(extract);

  // train-prior
  auto* train = app.add_subcommand("train-prior", "Fit the generic target prior from labeled candidates");
  std::vector<std::string> train_analyses, train_truths;
  std::string train_out;
  train->add_option("--analysis", train_analyses, "Analysis directories")->required();
  train->add_option("--truth", train_truths, "Mask directory per analysis, same order")->required();
  train->add_option("--out", train_out, "Prior JSON")->required();

  // score
  auto* score = app.add_subcommand("score", "Score observer candidates against a query's ego-motion");
  std::string score_query, score_observer_dir, score_out = "scores.csv", score_prior;
  bool score_two_step = false;
  double score_p = -1;
  int score_k = -1;
  score->add_option("--query", score_query, "Query analysis, motion or frame directory")->required();
  score->add_option("--observer", score_observer_dir, "Observer analysis directory")->required();
  score->add_option("--out", score_out, "Scores CSV");
  score->add_option("--prior", score_prior, "Prior JSON (C+G scoring)");
  score->add_flag("--two-step", score_two_step, "Upper-bound pruning before exact correlation");
  score->add_option("--P", score_p, "Top percentile evaluated exactly");
  score->add_option("--K", score_k, "Sketch pieces");
  add_pattern(score);

  // map
  auto* map = app.add_subcommand("map", "Per-frame targetness maps (16-bit PGM)");
  std::string map_scores, map_observer, map_out;
  int map_every = 1;
  map->add_option("--scores", map_scores, "Scores CSV")->required();
  map->add_option("--observer", map_observer, "Observer analysis directory")->required();
  map->add_option("--out", map_out, "Output directory")->required();
  map->add_option("--every", map_every, "Write every Nth frame")->check(CLI::PositiveNumber);

  // mask
  auto* mask = app.add_subcommand("mask", "Threshold maps into binary masks");
  std::string mask_maps, mask_out;
  double mask_threshold = -1;
  mask->add_option("--maps", mask_maps, "Map directory")->required();
  mask->add_option("--out", mask_out, "Output directory")->required();
  mask->add_option("--threshold", mask_threshold, "Score threshold (default: mask_threshold)");

  // auc
  auto* auc = app.add_subcommand("auc", "Pixel AUC of maps against truth masks");
  std::string auc_maps, auc_truth, auc_out;
  auc->add_option("--maps", auc_maps, "Map directory")->required();
  auc->add_option("--truth", auc_truth, "Mask directory")->required();
  auc->add_option("--out", auc_out, "Optional JSON result file");

  // affinity
  auto* affinity = app.add_subcommand("affinity", "Video affinity matrix over a repository");
  std::vector<std::string> aff_analyses;
  std::string aff_out = "affinity.csv", aff_prior;
  bool aff_directed = false, aff_two_step = false;
  affinity->add_option("--analysis", aff_analyses, "Analysis directories")->required();
  affinity->add_option("--out", aff_out, "Affinity CSV");
  affinity->add_option("--prior", aff_prior, "Weigh candidates by posterior with this prior");
  affinity->add_flag("--directed", aff_directed, "Write the directed matrix (row q, column p: A(V_q|V_p))");
  affinity->add_flag("--two-step", aff_two_step, "Use pruned scoring");

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank videos by affinity to a query");
  std::string ret_affinity, ret_query, ret_relevant, ret_out;
  bool ret_directed = false;
  retrieve_cmd->add_option("--affinity", ret_affinity, "Affinity CSV")->required();
  retrieve_cmd->add_option("--query", ret_query, "Query source id")->required();
  retrieve_cmd->add_option("--relevant", ret_relevant, "Comma-separated relevant ids")->required();
  retrieve_cmd->add_option("--out", ret_out, "Optional JSON result file");
  retrieve_cmd->add_flag("--directed", ret_directed, "Matrix is directed");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Affinity propagation over an affinity matrix");
  std::string clu_affinity, clu_out = "clusters.json";
  ApOptions ap;
  double clu_preference = std::numeric_limits<double>::quiet_NaN();
  cluster->add_option("--affinity", clu_affinity, "Affinity CSV")->required();
  cluster->add_option("--out", clu_out, "Cluster JSON");
  cluster->add_option("--damping", ap.damping, "Damping in [0.5, 1)");
  cluster->add_option("--max-iter", ap.max_iter, "Iteration cap");
  cluster->add_option("--preference", clu_preference, "Preference (default: median similarity)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-camera session");
  std::string synth_spec, synth_out, synth_groups;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_people, synth_frames, synth_distractors;
  std::optional<double> synth_noise;
  synth->add_option("--spec", synth_spec, "Spec JSON");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--people", synth_people, "Number of people");
  synth->add_option("--frames", synth_frames, "Frames per video");
  synth->add_option("--noise", synth_noise, "Head jitter sigma, px");
  synth->add_option("--distractors", synth_distractors, "Distractor patches per video");
  synth->add_option("--groups", synth_groups, "Groups, e.g. \"0,1,2;3,4,5\"");

  // bench
  auto* bench = app.add_subcommand("bench", "Evaluate a variant on a synthetic session directory");
  std::string bench_dir, bench_variant = "C", bench_out, bench_prior;
  bench->add_option("--dir", bench_dir, "Session directory written by synth")->required();
  bench->add_option("--variant", bench_variant, "C, C+G, asym, two-step or two-step(P,K)");
  bench->add_option("--out", bench_out, "Report directory (default: DIR/bench/<variant>)");
  bench->add_option("--prior", bench_prior, "Prior JSON for C+G (default: train on the auxiliary seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const PipelineConfig base = resolve_config(g);
    PipelineConfig cfg = base;

    if (*motion) {
      const DirectorySource src(motion_video, pattern, cfg);
      fs::create_directories(motion_out);
      const int transitions = src.frame_count() - 1;
      parallel_for(static_cast<std::size_t>(transitions), g.jobs, [&](std::size_t t) {
        const int i = static_cast<int>(t);
        write_flow(flow_cache_file(motion_out, i), dense_flow(src.frame(i), src.frame(i + 1)), i);
      });
      const auto raw = global_motion_pattern(src, cfg, g.jobs);
      write_global_csv(fs::path(motion_out) / kGlobalCsvName, raw, median_filter_pattern(raw.vectors, cfg.median_window));
      emit({{"command", "motion"},
            {"flow_cache", motion_out},
            {"global", (fs::path(motion_out) / kGlobalCsvName).string()},
            {"transitions", transitions}});
    } else if (*extract) {
      const DirectorySource src(extract_video, pattern, cfg);
      AnalyzeOptions options;
      options.jobs = g.jobs;
      options.flow_cache = extract_cache;
      const auto a = analyze_video(src, cfg, options);
      save_analysis(a, extract_out);
      emit({{"command", "extract"},
            {"analysis", extract_out},
            {"candidates", a.candidates.size()},
            {"outputs",
             {(fs::path(extract_out) / kManifestName).string(), (fs::path(extract_out) / kGlobalCsvName).string(),
              (fs::path(extract_out) / kCandidateStoreName).string()}}});
    } else if (*train) {
      if (train_analyses.size() != train_truths.size()) throw ConfigError("--analysis and --truth counts differ");
      std::vector<LabeledFeatures> samples;
      for (std::size_t i = 0; i < train_analyses.size(); ++i) {
        const auto a = load_analysis(train_analyses[i]);
        const TruthDir truth(train_truths[i]);
        const auto s = labeled_samples(a.candidates, truth.frames, [&](int t) {
          return truth.mask(t, a.manifest.width, a.manifest.height);
        });
        samples.insert(samples.end(), s.begin(), s.end());
      }
      const auto model = train_prior(samples, "cli: " + std::to_string(train_analyses.size()) + " videos");
      save_prior(model, output_file(train_out));
      const auto positives = std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.target; });
      emit({{"command", "train-prior"}, {"prior", train_out}, {"samples", samples.size()}, {"positives", positives}});
    } else if (*score) {
      if (score_p >= 0) cfg.top_percent_p = score_p;
      if (score_k >= 0) cfg.paa_pieces_k = score_k;
      validate(cfg);
      const auto observer = load_analysis(score_observer_dir);
      const auto global = query_pattern(score_query, pattern, cfg, g.jobs);
      PriorModel prior;
      if (!score_prior.empty()) prior = load_prior(score_prior);
      const auto result =
          score_observer(observer, global, cfg, {score_two_step, score_prior.empty() ? nullptr : &prior, g.jobs});
      write_scores_csv(output_file(score_out), observer.candidates, result);
      emit({{"command", "score"},
            {"scores", score_out},
            {"candidates", observer.candidates.size()},
            {"exact_evaluations", result.exact_evaluations},
            {"step1_multiply_adds", result.step1_multiply_adds}});
    } else if (*map) {
      const auto observer = load_analysis(map_observer);
      const auto post = read_posteriors_csv(map_scores);
      if (post.size() != observer.candidates.size()) {
        throw DataError("scores CSV has " + std::to_string(post.size()) + " rows but the observer has " +
                        std::to_string(observer.candidates.size()) + " candidates");
      }
      fs::create_directories(map_out);
      std::vector<int> frames;
      for (int t = 0; t < observer.manifest.frame_count; t += map_every) frames.push_back(t);
      parallel_for(frames.size(), g.jobs, [&](std::size_t i) {
        const int t = frames[i];
        write_map_pgm(fs::path(map_out) / numbered("map", t),
                      build_map(t, observer.manifest.width, observer.manifest.height, observer.candidates, post,
                                cfg.radius_r()));
      });
      emit({{"command", "map"}, {"maps", map_out}, {"frames", frames.size()}});
    } else if (*mask) {
      const double threshold = mask_threshold >= 0 ? mask_threshold : cfg.mask_threshold;
      if (threshold > 1.0) throw ConfigError("--threshold must be in [0, 1]");
      const auto maps = indexed_files(mask_maps, "map");
      if (maps.empty()) throw DataError("no map_*.pgm files in " + mask_maps);
      fs::create_directories(mask_out);
      std::vector<std::pair<int, fs::path>> items(maps.begin(), maps.end());
      parallel_for(items.size(), g.jobs, [&](std::size_t i) {
        write_pgm(fs::path(mask_out) / numbered("mask", items[i].first),
                  export_mask(read_map_pgm(items[i].second), threshold));
      });
      emit({{"command", "mask"}, {"masks", mask_out}, {"frames", items.size()}, {"threshold", threshold}});
    } else if (*auc) {
      const auto maps = indexed_files(auc_maps, "map");
      const auto truths = indexed_files(auc_truth, "mask");
      if (truths.empty()) throw DataError("no mask_*.pgm files in " + auc_truth);
      AucAccumulator acc;
      for (const auto& [t, path] : truths) {
        const auto it = maps.find(t);
        if (it == maps.end()) throw DataError("no map for annotated frame " + std::to_string(t));
        const cv::Mat m = read_map_pgm(it->second);
        const cv::Mat truth = read_mask(path);
        if (truth.size() != m.size()) throw DataError("mask and map sizes differ at frame " + std::to_string(t));
        acc.add(m, truth);
      }
      ordered_json out{{"command", "auc"}, {"auc", acc.auc()}, {"frames", truths.size()}};
      if (!auc_out.empty()) {
        std::ofstream f(output_file(auc_out));
        if (!f) throw DataError("cannot write " + auc_out);
        f << out.dump(2) << '\n';
        out["outputs"] = {auc_out};
      }
      emit(out);
    } else if (*affinity) {
      std::vector<VideoAnalysis> videos;
      for (const auto& d : aff_analyses) videos.push_back(load_analysis(d));
      std::vector<int> lengths;
      for (const auto& v : videos)
        for (const auto& c : v.candidates) lengths.push_back(c.length());
      const double mu = mean_candidate_length(lengths);
      PriorModel prior;
      if (!aff_prior.empty()) prior = load_prior(aff_prior);
      AffinityMatrix d;
      d.n = videos.size();
      d.a.assign(d.n * d.n, 0.0);
      d.mode = AffinityMode::kDirected;
      for (std::size_t i = 0; i < d.n; ++i) {
        const std::string id = videos[i].manifest.source_id;
        d.ids.push_back(id.empty() ? fs::path(aff_analyses[i]).filename().string() : id);
      }
      for (std::size_t q = 0; q < d.n; ++q) {
        for (std::size_t p = 0; p < d.n; ++p) {
          if (p == q) continue;
          const auto r = score_observer(videos[q], videos[p].global_filtered, cfg,
                                        {aff_two_step, aff_prior.empty() ? nullptr : &prior, g.jobs});
          d(q, p) = directed_affinity(videos[q].candidates, r.scores, mu, !aff_prior.empty());
        }
      }
      write_affinity_csv(output_file(aff_out), aff_directed ? d : symmetrize(d));
      emit({{"command", "affinity"}, {"affinity", aff_out}, {"videos", d.n}, {"mean_length", mu}});
    } else if (*retrieve_cmd) {
      const auto m = read_affinity_csv(ret_affinity, ret_directed ? AffinityMode::kDirected : AffinityMode::kSymmetric);
      const std::size_t q = index_of_id(m, ret_query);
      std::vector<bool> relevant(m.n, false);
      for (const auto& id : split_list(ret_relevant)) relevant[index_of_id(m, id)] = true;
      const auto r = retrieve(q, m, relevant);
      ordered_json ranking = ordered_json::array();
      for (auto i : r.ranking) ranking.push_back(m.ids[i]);
      ordered_json out{{"command", "retrieve"}, {"query", ret_query}, {"ranking", ranking}, {"r_precision", r.r_precision}};
      if (!ret_out.empty()) {
        std::ofstream f(output_file(ret_out));
        if (!f) throw DataError("cannot write " + ret_out);
        f << out.dump(2) << '\n';
        out["outputs"] = {ret_out};
      }
      emit(out);
    } else if (*cluster) {
      const auto m = read_affinity_csv(clu_affinity);
      if (!std::isnan(clu_preference)) {
        ap.use_median_preference = false;
        ap.preference = clu_preference;
      }
      const auto r = affinity_propagation(m.a, m.n, ap);
      write_cluster_json(output_file(clu_out), r, m.ids);
      emit({{"command", "cluster"},
            {"clusters", clu_out},
            {"group_count", r.exemplars.size()},
            {"converged", r.converged}});
    } else if (*synth) {
      SynthSpec spec = synth_spec.empty() ? SynthSpec{} : load_spec(synth_spec);
      if (synth_seed) spec.seed = *synth_seed;
      if (synth_people) spec.people = *synth_people;
      if (synth_frames) spec.frames = *synth_frames;
      if (synth_noise) spec.noise_sigma = *synth_noise;
      if (synth_distractors) spec.distractors = *synth_distractors;
      if (!synth_groups.empty()) spec.groups = parse_groups(synth_groups);
      const SynthSession session = generate(spec, cfg);
      write_session(session, synth_out);
      emit({{"command", "synth"},
            {"session", synth_out},
            {"videos", session.people()},
            {"outputs", {(fs::path(synth_out) / "spec.json").string(), (fs::path(synth_out) / "videos").string(),
                         (fs::path(synth_out) / "truth").string()}}});
    } else if (*bench) {
      const Variant variant = parse_variant(bench_variant);
      const auto session = disk_bench_session(bench_dir, cfg);
      const auto analysis = analyze_session(*session, cfg, g.jobs);
      PriorModel prior;
      if (variant.kind == VariantKind::kCG) {
        if (!bench_prior.empty()) {
          prior = load_prior(bench_prior);
        } else {
          SynthSpec aux = load_spec(fs::path(bench_dir) / "spec.json");
          aux.seed = auxiliary_seed(aux.seed);
          const SynthSession aux_session = generate(aux, cfg);
          const auto aux_bench = memory_bench_session(aux_session);
          prior = train_session_prior(*aux_bench, analyze_session(*aux_bench, cfg, g.jobs),
                                      "synth seed " + std::to_string(aux.seed));
        }
      }
      const auto report = evaluate_variant(*session, analysis, cfg, variant, &prior, g.jobs);
      std::string tag = variant.name();
      std::replace_if(tag.begin(), tag.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }, '_');
      const fs::path out = bench_out.empty() ? fs::path(bench_dir) / "bench" / tag : fs::path(bench_out);
      write_report(report, out);
      emit({{"command", "bench"},
            {"report", (out / "report.json").string()},
            {"variant", report.variant},
            {"session_auc", report.session_auc},
            {"mean_r_precision", report.mean_r_precision},
            {"f_measure", report.clustering.f_measure}});
    }
  } catch (const ConfigError& e) {
    std::cerr << "egocorr: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "egocorr: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
