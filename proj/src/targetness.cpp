#include "egocorr/targetness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "egocorr/error.hpp"
#include "json.hpp"

namespace egocorr {

NormalizedChannel standardize(std::span<const double> channel) {
  NormalizedChannel out;
  const double n = static_cast<double>(channel.size());
  out.values.assign(channel.size(), 0.0);
  if (channel.empty()) {
    out.degenerate = true;
    return out;
  }
  double mean = 0.0;
  for (double x : channel) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : channel) var += (x - mean) * (x - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd >= kDegenerateStd)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < channel.size(); ++i) out.values[i] = (channel[i] - mean) / sd;
  return out;
}

NormalizedPatternPair crop_and_normalize(std::span<const MotionSample> local, std::span<const Vec2> global,
                                         int begin, int length) {
  if (length < 1 || begin < 0 || static_cast<std::size_t>(begin) + static_cast<std::size_t>(length) > global.size()) {
    throw DataError("crop window [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                    ") outside global pattern of length " + std::to_string(global.size()));
  }
  if (local.size() < static_cast<std::size_t>(length)) throw DataError("local pattern shorter than window");
  const auto n = static_cast<std::size_t>(length);
  std::vector<double> u(n), v(n), gu(n), gv(n);
  for (std::size_t t = 0; t < n; ++t) {
    u[t] = local[t].u;
    v[t] = local[t].v;
    gu[t] = global[static_cast<std::size_t>(begin) + t].u;
    gv[t] = -global[static_cast<std::size_t>(begin) + t].v;
  }
  return {standardize(u), standardize(v), standardize(gu), standardize(gv)};
}

double zncc(const NormalizedPatternPair& pair) {
  const auto half = [&](const NormalizedChannel& a, const NormalizedChannel& b) {
    if (a.degenerate || b.degenerate || a.values.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t t = 0; t < a.values.size(); ++t) s += a.values[t] * b.values[t];
    return s / static_cast<double>(a.values.size());
  };
  const double c = 0.5 * (half(pair.u, pair.global_u) + half(pair.v, pair.global_v));
  return std::clamp(c, -1.0, 1.0);
}

double likelihood(double correlation) { return 1.0 / (1.0 + std::exp(-correlation)); }

double posterior(double likelihood, double prior) { return likelihood * prior; }

double PriorModel::project(const CandidateFeatures& f) const {
  const auto x = f.to_array();
  double z = bias;
  for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * x[i];
  return z;
}

PriorModel train_prior(const std::vector<LabeledFeatures>& samples, const std::string& tag) {
  std::size_t n1 = 0;
  for (const auto& s : samples) n1 += s.target ? 1 : 0;
  const std::size_t n0 = samples.size() - n1;
  if (n0 == 0 || n1 == 0) throw Error("train_prior: both classes are required");
  if (n0 < kMinSamplesPerClass || n1 < kMinSamplesPerClass) {
    throw Error("train_prior: at least 12 samples per class are required");
  }
  constexpr int d = kFeatureCount;
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = samples[static_cast<std::size_t>(i)].features.to_array();
    for (int k = 0; k < d; ++k) x(i, k) = a[static_cast<std::size_t>(k)];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd scale(d);
  for (int k = 0; k < d; ++k) {
    const double sd = std::sqrt((x.col(k).array() - mean(k)).square().mean());
    scale(k) = sd > 1e-12 ? sd : 1.0;
  }
  const Eigen::MatrixXd z = (x.rowwise() - mean).array().rowwise() / scale.array();

  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(d), m1 = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    (samples[static_cast<std::size_t>(i)].target ? m1 : m0) += z.row(i).transpose();
  }
  m0 /= static_cast<double>(n0);
  m1 /= static_cast<double>(n1);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd r = z.row(i).transpose() - (samples[static_cast<std::size_t>(i)].target ? m1 : m0);
    cov += r * r.transpose();
  }
  cov /= static_cast<double>(std::max<Eigen::Index>(n - 2, 1));
  cov += kLdaRidge * Eigen::MatrixXd::Identity(d, d);

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error("train_prior: pooled covariance is singular");
  }
  const Eigen::VectorXd w = ldlt.solve(m1 - m0);
  if (!w.allFinite() || w.squaredNorm() == 0.0) throw Error("train_prior: pooled covariance is singular");

  PriorModel model;
  model.trained_on = tag;
  model.bias = 0.0;
  for (int k = 0; k < d; ++k) {
    model.weights[static_cast<std::size_t>(k)] = w(k) / scale(k);
    model.bias -= w(k) * mean(k) / scale(k);
  }
  // Projections computed in the standardized space, identical to project() up to rounding.
  model.mu0 = w.dot(m0);
  model.mu1 = w.dot(m1);
  model.pooled_var = w.dot(cov * w);
  model.prior1 = static_cast<double>(n1) / static_cast<double>(samples.size());
  if (!(model.pooled_var > 0.0)) throw Error("train_prior: projected variance is not positive");
  return model;
}

double prior_predict(const PriorModel& m, const CandidateFeatures& f) {
  const double z = m.project(f);
  const double log_odds = std::log(m.prior1 / (1.0 - m.prior1)) +
                          ((z - m.mu0) * (z - m.mu0) - (z - m.mu1) * (z - m.mu1)) / (2.0 * m.pooled_var);
  if (log_odds >= 0.0) return 1.0 / (1.0 + std::exp(-log_odds));
  const double e = std::exp(log_odds);
  return e / (1.0 + e);
}

void save_prior(const PriorModel& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["weights"] = m.weights;
  j["bias"] = m.bias;
  j["mu0"] = m.mu0;
  j["mu1"] = m.mu1;
  j["pooled_var"] = m.pooled_var;
  j["prior1"] = m.prior1;
  j["trained_on"] = m.trained_on;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

PriorModel load_prior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prior model " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    PriorModel m;
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != kFeatureCount) throw DataError("prior model needs 11 weights");
    std::copy(w.begin(), w.end(), m.weights.begin());
    m.bias = j.at("bias").get<double>();
    m.mu0 = j.at("mu0").get<double>();
    m.mu1 = j.at("mu1").get<double>();
    m.pooled_var = j.at("pooled_var").get<double>();
    m.prior1 = j.at("prior1").get<double>();
    m.trained_on = j.value("trained_on", std::string{});
    if (!(m.pooled_var > 0.0)) throw DataError("prior model: pooled_var must be positive");
    if (!(m.prior1 > 0.0 && m.prior1 < 1.0)) throw DataError("prior model: prior1 must be in (0, 1)");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed prior model " + path.string() + ": " + e.what());
  }
}

}  // namespace egocorr
