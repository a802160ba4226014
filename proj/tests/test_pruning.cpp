#include <random>

#include "doctest.h"
#include "egocorr/error.hpp"
#include "egocorr/pruning.hpp"
#include "helpers.hpp"

using namespace egocorr;

namespace {

std::vector<Vec2> random_global(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<Vec2> g(n);
  for (auto& x : g) x = {nd(rng), nd(rng)};
  return g;
}

// Local motion = mix * (u, -v) of the global window plus noise.
Trajectory make_candidate(std::mt19937_64& rng, const std::vector<Vec2>& global, int begin, int length, double mix) {
  std::normal_distribution<double> nd;
  Trajectory t;
  t.begin_frame = begin;
  t.points.assign(static_cast<std::size_t>(length), cv::Point2f(10.0f, 10.0f));
  t.local_motion.resize(static_cast<std::size_t>(length));
  for (int k = 0; k < length; ++k) {
    const auto& g = global[static_cast<std::size_t>(begin + k)];
    t.local_motion[static_cast<std::size_t>(k)] = {static_cast<float>(mix * g.u + nd(rng)),
                                                  static_cast<float>(-mix * g.v + nd(rng))};
  }
  return t;
}

std::vector<PaaSketch> sketches_of(const std::vector<Trajectory>& c, int k) {
  std::vector<PaaSketch> out;
  for (const auto& t : c) out.push_back(sketch_local(t.local_motion, k));
  return out;
}

// Mean-of-products ZNCC on the trimmed window, computed from scratch.
double trimmed_zncc(const Trajectory& t, const std::vector<Vec2>& g, int trimmed) {
  std::vector<double> lu, lv, gu, gv;
  for (int k = 0; k < trimmed; ++k) {
    lu.push_back(t.local_motion[static_cast<std::size_t>(k)].u);
    lv.push_back(t.local_motion[static_cast<std::size_t>(k)].v);
    gu.push_back(g[static_cast<std::size_t>(t.begin_frame + k)].u);
    gv.push_back(-g[static_cast<std::size_t>(t.begin_frame + k)].v);
  }
  const auto a = testing::standardized(lu), b = testing::standardized(gu);
  const auto c = testing::standardized(lv), d = testing::standardized(gv);
  double s = 0;
  for (int k = 0; k < trimmed; ++k) s += a[static_cast<std::size_t>(k)] * b[static_cast<std::size_t>(k)] +
                                        c[static_cast<std::size_t>(k)] * d[static_cast<std::size_t>(k)];
  return s / (2.0 * trimmed);
}

PipelineConfig config_with(double p, int k) {
  PipelineConfig c;
  c.top_percent_p = p;
  c.paa_pieces_k = k;
  return c;
}

}  // namespace

TEST_CASE("paa examples") {
  const std::vector<double> x{1, 1, 3, 3};
  const auto p = paa(x, 2);
  CHECK(p.pieces == std::vector<double>{1, 3});
  CHECK(p.variance == doctest::Approx(1.0));
  CHECK(p.trimmed_length == 4);

  std::mt19937_64 rng(50);
  const auto s = testing::standardized(testing::gaussian(rng, 32));
  const auto full = paa(s, 32);
  CHECK(full.pieces == s);
  CHECK(full.variance == doctest::Approx(1.0).epsilon(1e-12));

  const auto ten = testing::standardized(testing::gaussian(rng, 10));
  const auto t = paa(ten, 4);
  CHECK(t.trimmed_length == 8);
  const auto kept = testing::standardized(std::vector<double>(ten.begin(), ten.begin() + 8));
  for (int k = 0; k < 4; ++k)
    CHECK(t.pieces[static_cast<std::size_t>(k)] ==
          doctest::Approx(0.5 * (kept[2 * static_cast<std::size_t>(k)] + kept[2 * static_cast<std::size_t>(k) + 1]))
              .epsilon(1e-12));
  CHECK_THROWS_AS(paa(std::vector<double>{1, 2, 3}, 4), Error);
  CHECK_THROWS_AS(paa(x, 0), Error);
}

TEST_CASE("upper bound equals the exact ZNCC at K = l and 1 for identical channels") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const int l = 16 + trial;
    const auto g = random_global(rng, static_cast<std::size_t>(l) + 20);
    const auto t = make_candidate(rng, g, 7, l, 0.5);
    const auto ub = upper_bound(sketch_local(t.local_motion, l), sketch_global(g, 7, l, l));
    CHECK(ub == doctest::Approx(trimmed_zncc(t, g, l)).epsilon(1e-9));
    // identical channels: the local motion equals (U, -V)
    Trajectory same = t;
    for (int k = 0; k < l; ++k)
      same.local_motion[static_cast<std::size_t>(k)] = {static_cast<float>(g[7 + static_cast<std::size_t>(k)].u),
                                                       static_cast<float>(-g[7 + static_cast<std::size_t>(k)].v)};
    for (int kk : {1, 4, l}) {
      if (l % kk != 0 && kk != 1) continue;
      const auto sk = sketch_local(same.local_motion, kk);
      CHECK(upper_bound(sk, sketch_global(g, 7, sk.trimmed_length, kk)) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("upper bound never below the exact ZNCC") {
  std::mt19937_64 rng(52);
  std::uniform_int_distribution<int> len(64, 400);
  std::uniform_real_distribution<double> mix(-2.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int l = len(rng);
    const int k = std::array{4, 8, 16, 32, 64}[static_cast<std::size_t>(trial % 5)];
    const auto g = random_global(rng, static_cast<std::size_t>(l) + 30);
    const auto t = make_candidate(rng, g, trial % 30, l, mix(rng));
    const auto sk = sketch_local(t.local_motion, k);
    const double ub = upper_bound(sk, sketch_global(g, t.begin_frame, sk.trimmed_length, k));
    CHECK(ub >= trimmed_zncc(t, g, sk.trimmed_length) - 1e-9);
  }
}

TEST_CASE("GlobalSketcher agrees with direct sketches") {
  std::mt19937_64 rng(53);
  const auto g = random_global(rng, 700);
  const GlobalSketcher gs(g);
  for (int begin : {0, 13, 200}) {
    for (int k : {4, 16, 64}) {
      const int trimmed = k * (450 / k);
      const auto a = gs.sketch(begin, trimmed, k), b = sketch_global(g, begin, trimmed, k);
      for (std::size_t i = 0; i < a.pieces_u.size(); ++i) {
        CHECK(a.pieces_u[i] == doctest::Approx(b.pieces_u[i]).epsilon(1e-9));
        CHECK(a.pieces_v[i] == doctest::Approx(b.pieces_v[i]).epsilon(1e-9));
      }
      CHECK(a.var_u == doctest::Approx(b.var_u).epsilon(1e-9));
      CHECK(a.var_v == doctest::Approx(b.var_v).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(gs.sketch(600, 128, 4), DataError);
  CHECK_THROWS_AS(gs.sketch(0, 130, 4), DataError);
}

TEST_CASE("upper bound rejects mismatched K") {
  std::mt19937_64 rng(54);
  const auto g = random_global(rng, 200);
  const auto t = make_candidate(rng, g, 0, 128, 1.0);
  CHECK_THROWS_AS(upper_bound(sketch_local(t.local_motion, 8), sketch_global(g, 0, 128, 16)), Error);
  CHECK_FALSE(sketch_local(std::span(t.local_motion).first(5), 8).present());
}

TEST_CASE("distance identity and PAA lower bound") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t l = 64 * (1 + static_cast<std::size_t>(trial % 4));
    const auto u = testing::standardized(testing::gaussian(rng, l));
    auto w = testing::gaussian(rng, l);
    for (std::size_t i = 0; i < l; ++i) w[i] += 0.5 * u[i];
    const auto gu = testing::standardized(w);
    double c = 0;
    for (std::size_t i = 0; i < l; ++i) c += u[i] * gu[i];
    c /= static_cast<double>(l);
    const auto sides = euclid_lower_bound_check(u, gu, 16);
    CHECK(sides.lhs == doctest::Approx(2.0 * (1.0 - c)).epsilon(1e-9));
    CHECK(sides.lhs >= sides.rhs - 1e-12);
  }
  const std::vector<double> a(10, 0.0);
  CHECK_THROWS_AS(euclid_lower_bound_check(a, a, 4), Error);
}

TEST_CASE("selection count") {
  CHECK(selection_count(25, 100) == 25);
  CHECK(selection_count(25, 101) == 26);
  CHECK(selection_count(100, 7) == 7);
  CHECK(selection_count(0, 50) == 0);
  CHECK(selection_count(10, 1) == 1);
  for (std::size_t n = 1; n < 2000; n += 37) CHECK(selection_count(25, n) == (n + 3) / 4);
}

TEST_CASE("two-step at P = 100 reproduces exhaustive scoring") {
  std::mt19937_64 rng(56);
  const auto g = random_global(rng, 900);
  std::vector<Trajectory> c;
  std::uniform_int_distribution<int> len(40, 500), begin(0, 399);
  std::uniform_real_distribution<double> mix(-1.0, 1.0);
  for (int i = 0; i < 150; ++i) c.push_back(make_candidate(rng, g, begin(rng), len(rng), mix(rng)));
  std::vector<double> priors(c.size());
  std::uniform_real_distribution<double> pr(0.0, 1.0);
  for (double& p : priors) p = pr(rng);
  const auto ex = exhaustive_scores(c, g, priors, 1);
  const auto ts = two_step_scores(c, sketches_of(c, 64), g, priors, config_with(100, 64), 3);
  CHECK(ts.exact_evaluations == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(ts.scores[i].evaluated);
    CHECK(ts.scores[i].correlation == ex.scores[i].correlation);
    CHECK(ts.scores[i].posterior == ex.scores[i].posterior);
  }
}

TEST_CASE("two-step evaluates ceil(P N / 100) candidates with the highest bounds") {
  std::mt19937_64 rng(57);
  const auto g = random_global(rng, 700);
  std::vector<Trajectory> c;
  std::uniform_real_distribution<double> mix(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) c.push_back(make_candidate(rng, g, i, 128 + 3 * i, mix(rng)));
  const auto sk = sketches_of(c, 64);
  const auto r = two_step_scores(c, sk, g, {}, config_with(25, 64), 1);
  CHECK(r.exact_evaluations == 25);
  CHECK(std::count_if(r.scores.begin(), r.scores.end(), [](const auto& s) { return s.evaluated; }) == 25);
  double min_kept = 1e9, max_dropped = -1e9;
  for (const auto& s : r.scores) {
    if (s.evaluated) {
      min_kept = std::min(min_kept, s.upper_bound);
      CHECK(s.correlation <= s.upper_bound + 1e-9);
    } else {
      max_dropped = std::max(max_dropped, s.upper_bound);
      CHECK(s.posterior == 0.0);
    }
  }
  CHECK(min_kept >= max_dropped);
  // the planted target has the largest correlation and survives pruning
  c[40] = make_candidate(rng, g, 40, 300, 30.0);
  const auto r2 = two_step_scores(c, sketches_of(c, 64), g, {}, config_with(25, 64), 1);
  const auto ex = exhaustive_scores(c, g, {}, 1);
  const auto best = [](const ScoringResult& s) {
    return std::max_element(s.scores.begin(), s.scores.end(),
                            [](const auto& a, const auto& b) { return a.posterior < b.posterior; }) -
           s.scores.begin();
  };
  CHECK(best(ex) == 40);
  CHECK(best(r2) == 40);
}

TEST_CASE("two-step tie rule: longer first, then lower index") {
  std::mt19937_64 rng(58);
  const auto g = random_global(rng, 100);
  // every candidate is shorter than K, so all bounds are +inf
  std::vector<Trajectory> c{make_candidate(rng, g, 0, 5, 1), make_candidate(rng, g, 0, 7, 1),
                            make_candidate(rng, g, 3, 7, 1), make_candidate(rng, g, 0, 3, 1)};
  const auto r = two_step_scores(c, sketches_of(c, 8), g, {}, config_with(50, 8), 1);
  CHECK(r.step1_multiply_adds == 0);
  CHECK_FALSE(r.scores[0].evaluated);
  CHECK(r.scores[1].evaluated);
  CHECK(r.scores[2].evaluated);
  CHECK_FALSE(r.scores[3].evaluated);
  const auto r3 = two_step_scores(c, sketches_of(c, 8), g, {}, config_with(75, 8), 1);
  CHECK(r3.scores[0].evaluated);
  CHECK_FALSE(r3.scores[3].evaluated);
}

TEST_CASE("step-1 work is linear in K and N") {
  std::mt19937_64 rng(59);
  const auto g = random_global(rng, 1200);
  std::vector<Trajectory> c;
  for (int i = 0; i < 80; ++i) c.push_back(make_candidate(rng, g, i, 256, 0.3));
  for (int k : {4, 16, 64}) {
    for (std::size_t n : {20u, 40u, 80u}) {
      const std::vector<Trajectory> sub(c.begin(), c.begin() + static_cast<long>(n));
      const auto r = two_step_scores(sub, sketches_of(sub, k), g, {}, config_with(25, k), 1);
      CHECK(r.step1_multiply_adds == 4ull * static_cast<std::uint64_t>(k) * n);
    }
  }
}

TEST_CASE("two-step is independent of the job count") {
  std::mt19937_64 rng(60);
  const auto g = random_global(rng, 800);
  std::vector<Trajectory> c;
  for (int i = 0; i < 120; ++i) c.push_back(make_candidate(rng, g, i * 3, 100 + i * 2, 0.4));
  const auto a = two_step_scores(c, sketches_of(c, 16), g, {}, config_with(25, 16), 1);
  const auto b = two_step_scores(c, sketches_of(c, 16), g, {}, config_with(25, 16), 4);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(a.scores[i].evaluated == b.scores[i].evaluated);
    CHECK(a.scores[i].upper_bound == b.scores[i].upper_bound);
    CHECK(a.scores[i].posterior == b.scores[i].posterior);
  }
  CHECK_THROWS_AS(two_step_scores(c, sketches_of(c, 8), g, {}, config_with(25, 16), 1), Error);
  CHECK_THROWS_AS(exhaustive_scores(c, g, std::vector<double>(3, 1.0), 1), Error);
}
