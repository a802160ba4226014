#include <fstream>

#include "doctest.h"
#include "egocorr/analysis.hpp"
#include "egocorr/error.hpp"
#include "egocorr/evalsynth.hpp"
#include "egocorr/mapping.hpp"
#include "helpers.hpp"

using namespace egocorr;

namespace {

SynthSpec small_spec(std::uint64_t seed, int people = 2, int frames = 120) {
  SynthSpec s;
  s.seed = seed;
  s.people = people;
  s.frames = frames;
  return s;
}

bool same_mat(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0.0;
}

// Mean over both axes of the correlation of two 2-D signals.
double signal_correlation(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  std::vector<double> au, av, bu, bv;
  for (std::size_t i = 0; i < a.size(); ++i) {
    au.push_back(a[i].u);
    av.push_back(a[i].v);
    bu.push_back(b[i].u);
    bv.push_back(b[i].v);
  }
  const auto x = testing::standardized(au), y = testing::standardized(bu);
  const auto p = testing::standardized(av), q = testing::standardized(bv);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += x[i] * y[i] + p[i] * q[i];
  return s / (2.0 * static_cast<double>(a.size()));
}

}  // namespace

TEST_CASE("generation is deterministic under the seed") {
  const auto a = generate(small_spec(5, 3));
  const auto b = generate(small_spec(5, 3));
  const auto c = generate(small_spec(6, 3));
  CHECK(a.signal(1) == b.signal(1));
  CHECK_FALSE(a.signal(1) == c.signal(1));
  for (int t : {0, 37, 119}) {
    CHECK(same_mat(a.render(0, t), b.render(0, t)));
    CHECK(same_mat(a.head_mask(0, 2, t), b.head_mask(0, 2, t)));
  }
  CHECK(a.annotated_frames() == b.annotated_frames());
  for (int t : a.annotated_frames()) CHECK(t < 119);
  CHECK(a.video(2).frame_count() == 120);
  CHECK(a.visible_targets(0) == std::vector<int>{1, 2});
}

TEST_CASE("spec validation and JSON") {
  SynthSpec s = small_spec(3, 4);
  s.groups = {{0, 2}, {1, 3}};
  CHECK_NOTHROW(validate_spec(s));
  const auto back = spec_from_json(spec_to_json(s));
  CHECK(back.groups == s.groups);
  CHECK(back.seed == 3);
  CHECK(back.frames == 120);

  auto bad = s;
  bad.people = 1;
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);
  bad = s;
  bad.frames = PipelineConfig{}.l_min + 7;
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);
  bad = s;
  bad.groups = {{0, 2}, {1, 2, 3}};
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);
  bad = s;
  bad.groups = {{0, 2}, {1}};
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);
  bad = s;
  bad.fps = 0;
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);
  CHECK_THROWS_AS(spec_from_json(nlohmann::json{{"peple", 3}}), ConfigError);
  CHECK_THROWS_AS(generate(bad), ConfigError);
}

TEST_CASE("band-limited signal") {
  const auto s = band_limited_signal(9, 2000, 60.0, 2.0, 6.0);
  REQUIRE(s.size() == 2000);
  double su = 0, su2 = 0;
  for (const auto& x : s) {
    su += x.u;
    su2 += x.u * x.u;
  }
  const double mean = su / 2000.0;
  CHECK(std::sqrt(su2 / 2000.0 - mean * mean) == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(band_limited_signal(9, 2000, 60.0, 2.0, 6.0) == s);
  // low-pass: neighbouring samples are strongly correlated
  std::vector<Vec2> shifted(s.begin() + 1, s.end()), head(s.begin(), s.end() - 1);
  CHECK(signal_correlation(head, shifted) > 0.9);
  CHECK_THROWS_AS(band_limited_signal(9, 10, 60.0, 0.0, 1.0), ConfigError);
}

TEST_CASE("independent people have weakly correlated signals") {
  int small = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = band_limited_signal(2 * seed + 1, 600, 60.0, 2.0, 6.0);
    const auto b = band_limited_signal(2 * seed + 2, 600, 60.0, 2.0, 6.0);
    small += std::abs(signal_correlation(a, b)) < 0.3 ? 1 : 0;
  }
  CHECK(small >= 95);
}

TEST_CASE("self-check: head local motion follows the target's recovered ego-motion") {
  SynthSpec spec = small_spec(13, 2, 150);
  spec.distractors = 0;
  const auto session = generate(spec);
  const PipelineConfig config;
  const int observer = 0, target = 1;
  const auto recovered = global_motion_pattern(session.video(target), config, 1);
  const auto& video = session.video(observer);
  std::vector<MotionSample> local;
  for (int t = 0; t + 1 < spec.frames; ++t) {
    const Frame a = video.frame(t), b = video.frame(t + 1);
    const auto transition = estimate_transition(a, b, config, t);
    REQUIRE(transition.ok);
    const auto field = local_motion(dense_flow(a, b), global_motion_field(transition.homography, a.width(), a.height()));
    const auto c = session.head_center(observer, target, t);
    local.push_back({sample_bilinear(field.u, c.x, c.y), sample_bilinear(field.v, c.x, c.y)});
  }
  const double c = zncc(crop_and_normalize(local, recovered.vectors, 0, spec.frames - 1));
  MESSAGE("self-check ZNCC = " << c);
  CHECK(c >= 0.9);
}

TEST_CASE("session on disk matches the session in memory") {
  const auto s = generate(small_spec(8, 3, 80));
  testing::TempDir dir("session");
  write_session(s, dir.path());
  CHECK(std::filesystem::exists(dir / "spec.json"));
  CHECK(std::filesystem::exists(dir / "oracle" / "signals.json"));
  CHECK(std::filesystem::exists(dir / "videos" / s.video_id(2) / "frame_000079.ppm"));
  CHECK(load_spec(dir / "spec.json").seed == 8);
  const auto disk = disk_bench_session(dir.path(), PipelineConfig{});
  const auto mem = memory_bench_session(s);
  CHECK(disk->size() == 3);
  CHECK(disk->group_labels() == mem->group_labels());
  CHECK(disk->annotated_frames() == mem->annotated_frames());
  CHECK(disk->visible_targets(1) == mem->visible_targets(1));
  for (int t : mem->annotated_frames()) CHECK(same_mat(disk->head_mask(0, 1, t) > 0, mem->head_mask(0, 1, t) > 0));
  // frames go through 8-bit files
  const Frame a = disk->video(1).frame(10), b = mem->video(1).frame(10);
  CHECK(cv::norm(a.gray, b.gray, cv::NORM_INF) <= 1.0 / 255.0 + 1e-6);
  CHECK_THROWS_AS(disk_bench_session(dir / "videos", PipelineConfig{}), DataError);
}

TEST_CASE("variant names") {
  CHECK(parse_variant("C").kind == VariantKind::kC);
  CHECK(parse_variant("C+G").kind == VariantKind::kCG);
  CHECK(parse_variant("asym").kind == VariantKind::kAsym);
  const auto t = parse_variant("two-step(10,16)");
  CHECK(t.kind == VariantKind::kTwoStep);
  CHECK(t.top_percent_p == 10.0);
  CHECK(t.pieces_k == 16);
  CHECK(parse_variant(t.name()).pieces_k == 16);
  CHECK(parse_variant("two-step").top_percent_p == 25.0);
  CHECK_THROWS_AS(parse_variant("two-step(0,16)"), ConfigError);
  CHECK_THROWS_AS(parse_variant("two-step(25,0)"), ConfigError);
  CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
}

TEST_CASE("benchmark: exhaustive equals two-step at P = 100, report schema") {
  const auto s = generate(small_spec(17, 3, 140));
  const auto session = memory_bench_session(s);
  const PipelineConfig config;
  const auto analysis = analyze_session(*session, config, 2);
  CHECK(analysis.mean_length > 0);
  const auto c = evaluate_variant(*session, analysis, config, parse_variant("C"));
  const auto full = evaluate_variant(*session, analysis, config, parse_variant("two-step(100,64)"));
  REQUIRE(c.pairs.size() == 6);
  for (std::size_t i = 0; i < c.pairs.size(); ++i) {
    CHECK(c.pairs[i].auc == full.pairs[i].auc);
    CHECK(c.pairs[i].top1 == full.pairs[i].top1);
  }
  CHECK(c.session_auc == full.session_auc);
  CHECK(c.session_auc > 0.9);
  CHECK(c.exact_evaluations == c.total_candidates * 2);
  const auto pruned = evaluate_variant(*session, analysis, config, parse_variant("two-step(25,64)"));
  CHECK(pruned.exact_evaluations < c.exact_evaluations);
  CHECK_THROWS_AS(evaluate_variant(*session, analysis, config, parse_variant("C+G")), Error);

  const auto j = report_to_json(pruned);
  for (const char* key : {"variant", "session_auc", "pairs", "mean_r_precision", "queries", "clustering",
                          "exact_evaluations", "total_candidates", "step1_multiply_adds", "mean_candidate_length",
                          "stage_seconds"})
    CHECK_MESSAGE(j.contains(key), key);
  for (const char* key : {"precision", "recall", "f_measure", "group_count"}) CHECK(j["clustering"].contains(key));
  testing::TempDir dir("report");
  write_report(pruned, dir.path());
  for (const char* f : {"report.json", "table1_auc.csv", "table2_time.csv", "table3_retrieval.csv",
                        "table4_clustering.csv"})
    CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
}
