#include "egocorr/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "egocorr/error.hpp"
#include "json.hpp"

namespace egocorr {

double length_weight(double length, double mean_length) { return 1.0 / (1.0 + std::exp(-length + mean_length)); }

double directed_affinity(std::span<const double> likelihoods, std::span<const int> lengths, double mean_length) {
  if (likelihoods.size() != lengths.size()) throw Error("directed_affinity: size mismatch");
  double best = 0.0;
  for (std::size_t i = 0; i < likelihoods.size(); ++i) {
    best = std::max(best, likelihoods[i] * length_weight(lengths[i], mean_length));
  }
  return best;
}

double directed_affinity(std::span<const Trajectory> candidates, std::span<const CandidateScore> scores,
                         double mean_length, bool use_posterior) {
  if (candidates.size() != scores.size()) throw Error("directed_affinity: size mismatch");
  std::vector<double> values(scores.size());
  std::vector<int> lengths(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    // Pruned candidates carry likelihood 0 and drop out of the max.
    values[i] = use_posterior ? scores[i].posterior : (scores[i].evaluated ? scores[i].likelihood : 0.0);
    lengths[i] = candidates[i].length();
  }
  return directed_affinity(values, lengths, mean_length);
}

double symmetric_affinity(double a_pq, double a_qp) { return std::max(a_pq, a_qp); }

AffinityMatrix symmetrize(const AffinityMatrix& d) {
  AffinityMatrix s = d;
  s.mode = AffinityMode::kSymmetric;
  for (std::size_t p = 0; p < d.n; ++p)
    for (std::size_t q = 0; q < d.n; ++q) s(p, q) = symmetric_affinity(d(p, q), d(q, p));
  return s;
}

double mean_candidate_length(std::span<const int> lengths) {
  if (lengths.empty()) throw Error("mean_candidate_length: empty repository");
  double sum = 0.0;
  for (int l : lengths) sum += l;
  return sum / static_cast<double>(lengths.size());
}

double mean_candidate_length(std::span<const std::vector<Trajectory>> repository) {
  std::vector<int> lengths;
  for (const auto& video : repository)
    for (const auto& t : video) lengths.push_back(t.length());
  return mean_candidate_length(lengths);
}

RetrievalResult retrieve(std::size_t query, const AffinityMatrix& m, const std::vector<bool>& relevant) {
  if (query >= m.n || relevant.size() != m.n) throw Error("retrieve: bad query or relevance labels");
  std::size_t r = 0;
  for (std::size_t q = 0; q < m.n; ++q) r += (q != query && relevant[q]) ? 1 : 0;
  if (r == 0) throw Error("retrieve: R = 0 (no relevant videos)");
  RetrievalResult out;
  for (std::size_t q = 0; q < m.n; ++q)
    if (q != query) out.ranking.push_back(q);
  auto score = [&](std::size_t q) { return m.mode == AffinityMode::kDirected ? m(q, query) : m(query, q); };
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  std::size_t hits = 0;
  for (std::size_t i = 0; i < r; ++i) hits += relevant[out.ranking[i]] ? 1 : 0;
  out.r_precision = static_cast<double>(hits) / static_cast<double>(r);
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ClusterResult affinity_propagation(std::span<const double> similarity, std::size_t n, const ApOptions& opt) {
  if (n == 0 || similarity.size() != n * n) throw Error("affinity_propagation: need an n x n similarity");
  if (!(opt.damping >= 0.5 && opt.damping < 1.0)) throw Error("affinity_propagation: damping must be in [0.5, 1)");
  ClusterResult out;
  if (n == 1) {
    out.exemplars = {0};
    out.assignment = {0};
    return out;
  }
  std::vector<double> s(similarity.begin(), similarity.end());
  std::vector<double> off;
  off.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      if (i != k) off.push_back(s[i * n + k]);
  const double pref = opt.use_median_preference ? median(off) : opt.preference;
  for (std::size_t i = 0; i < n; ++i) s[i * n + i] = pref;

  // All similarities equal the preference (or each other): messages carry no
  // information. One cluster unless the preference beats every similarity.
  if (std::all_of(off.begin(), off.end(), [&](double x) { return x == off.front(); })) {
    if (pref > off.front()) {
      for (std::size_t i = 0; i < n; ++i) {
        out.exemplars.push_back(i);
        out.assignment.push_back(i);
      }
    } else {
      out.exemplars = {0};
      out.assignment.assign(n, 0);
    }
    return out;
  }

  // Relative perturbation of a few ulps breaks exact ties between
  // interchangeable items; a fixed seed keeps runs reproducible.
  std::mt19937_64 jitter_rng(0);
  for (double& v : s) {
    const double unit = 4.0 * (static_cast<double>(jitter_rng() >> 11) * 0x1.0p-53 - 0.5);
    v += (std::numeric_limits<double>::epsilon() * v + std::numeric_limits<double>::min() * 100.0) * unit;
  }

  std::vector<double> r(n * n, 0.0), a(n * n, 0.0), col(n);
  const std::size_t window = static_cast<std::size_t>(std::max(opt.convergence_window, 1));
  std::vector<std::vector<char>> history(window, std::vector<char>(n, 0));
  std::vector<char> exemplar(n, 0);
  int it = 0;
  bool converged = false;
  for (; it < opt.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double first = -std::numeric_limits<double>::infinity(), second = first;
      std::size_t arg = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const double v = a[i * n + k] + s[i * n + k];
        if (v > first) {
          second = first;
          first = v;
          arg = k;
        } else if (v > second) {
          second = v;
        }
      }
      for (std::size_t k = 0; k < n; ++k) {
        const double fresh = s[i * n + k] - (k == arg ? second : first);
        r[i * n + k] = opt.damping * r[i * n + k] + (1.0 - opt.damping) * fresh;
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += i == k ? r[k * n + k] : std::max(r[i * n + k], 0.0);
      col[k] = sum;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double rp = i == k ? r[k * n + k] : std::max(r[i * n + k], 0.0);
        double fresh = col[k] - rp;
        if (i != k) fresh = std::min(fresh, 0.0);
        a[i * n + k] = opt.damping * a[i * n + k] + (1.0 - opt.damping) * fresh;
      }
    }
    std::size_t count = 0;
    for (std::size_t k = 0; k < n; ++k) {
      exemplar[k] = (a[k * n + k] + r[k * n + k]) > 0.0 ? 1 : 0;
      count += exemplar[k];
    }
    history[static_cast<std::size_t>(it) % window] = exemplar;
    if (static_cast<std::size_t>(it) + 1 >= window) {
      bool stable = true;
      for (std::size_t k = 0; k < n && stable; ++k) {
        std::size_t on = 0;
        for (const auto& h : history) on += h[k];
        stable = on == 0 || on == window;
      }
      if (stable && count > 0) {
        converged = true;
        ++it;
        break;
      }
    }
  }
  out.iterations = it;
  out.converged = converged;

  std::vector<std::size_t> ex;
  for (std::size_t k = 0; k < n; ++k)
    if (exemplar[k]) ex.push_back(k);
  if (ex.empty()) {
    // Best so far: the strongest self-evidence becomes the lone exemplar.
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (a[k * n + k] + r[k * n + k] > a[best * n + best] + r[best * n + best]) best = k;
    ex.push_back(best);
    out.converged = false;
  }

  auto assign = [&](const std::vector<std::size_t>& centers) {
    std::vector<std::size_t> lab(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < centers.size(); ++c)
        if (s[i * n + centers[c]] > s[i * n + centers[best]]) best = c;
      lab[i] = best;
    }
    for (std::size_t c = 0; c < centers.size(); ++c) lab[centers[c]] = c;
    return lab;
  };
  // Assign, then move each exemplar to the member with the highest summed
  // within-cluster similarity, then assign again.
  auto labels = assign(ex);
  for (std::size_t c = 0; c < ex.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == c) members.push_back(i);
    double best_sum = -std::numeric_limits<double>::infinity();
    for (auto j : members) {
      double sum = 0.0;
      for (auto i : members) sum += s[i * n + j];
      if (sum > best_sum) {
        best_sum = sum;
        ex[c] = j;
      }
    }
  }
  labels = assign(ex);
  out.exemplars = ex;
  out.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.assignment[i] = ex[labels[i]];
  return out;
}

ClusteringMetrics clustering_metrics(const std::vector<int>& pred, const std::vector<int>& truth,
                                     std::size_t group_count) {
  if (pred.size() != truth.size()) throw Error("clustering_metrics: label count mismatch");
  std::size_t both = 0, in_pred = 0, in_truth = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const bool p = pred[i] == pred[j], t = truth[i] == truth[j];
      in_pred += p;
      in_truth += t;
      both += p && t;
    }
  }
  ClusteringMetrics m;
  m.precision = in_pred ? static_cast<double>(both) / static_cast<double>(in_pred) : 1.0;
  m.recall = in_truth ? static_cast<double>(both) / static_cast<double>(in_truth) : 1.0;
  m.f_measure = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.group_count = group_count;
  return m;
}

ClusteringMetrics clustering_metrics(const ClusterResult& predicted, const std::vector<int>& truth) {
  std::vector<int> labels(predicted.assignment.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(predicted.assignment[i]);
  return clustering_metrics(labels, truth, predicted.exemplars.size());
}

void write_affinity_csv(const std::filesystem::path& path, const AffinityMatrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "source_id";
  for (std::size_t i = 0; i < m.n; ++i) out << ',' << (i < m.ids.size() ? m.ids[i] : std::to_string(i));
  out << '\n';
  for (std::size_t i = 0; i < m.n; ++i) {
    out << (i < m.ids.size() ? m.ids[i] : std::to_string(i));
    for (std::size_t j = 0; j < m.n; ++j) out << ',' << m(i, j);
    out << '\n';
  }
}

AffinityMatrix read_affinity_csv(const std::filesystem::path& path, AffinityMode mode) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty affinity file " + path.string());
  auto header = split(line);
  if (header.size() < 2) throw DataError("affinity header needs at least one id");
  AffinityMatrix m;
  m.mode = mode;
  m.ids.assign(header.begin() + 1, header.end());
  m.n = m.ids.size();
  m.a.assign(m.n * m.n, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    if (!std::getline(in, line)) throw DataError("affinity file truncated at row " + std::to_string(i));
    const auto cells = split(line);
    if (cells.size() != m.n + 1) throw DataError("affinity row " + std::to_string(i) + " has wrong width");
    for (std::size_t j = 0; j < m.n; ++j) {
      try {
        m(i, j) = std::stod(cells[j + 1]);
      } catch (const std::exception&) {
        throw DataError("bad affinity value '" + cells[j + 1] + "'");
      }
    }
  }
  return m;
}

void write_cluster_json(const std::filesystem::path& path, const ClusterResult& result,
                        const std::vector<std::string>& ids) {
  auto name = [&](std::size_t i) { return i < ids.size() ? ids[i] : std::to_string(i); };
  nlohmann::ordered_json j;
  j["exemplars"] = nlohmann::json::array();
  for (auto e : result.exemplars) j["exemplars"].push_back(name(e));
  j["assignment"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < result.assignment.size(); ++i) j["assignment"][name(i)] = name(result.assignment[i]);
  j["group_count"] = result.exemplars.size();
  j["iterations"] = result.iterations;
  j["converged"] = result.converged;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace egocorr
