#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "picard/error.hpp"
#include "picard/random.hpp"

namespace picard::theory {

// Normal and anomalous feature distributions N(mu, sigma^2 I).
struct OracleSpec {
  std::size_t dim = 1;
  std::vector<double> mu_normal{0.0};
  double sigma_normal = 1.0;
  std::vector<double> mu_anomalous{3.0};
  double sigma_anomalous = 1.0;

  static OracleSpec separated(double separation, double sigma = 1.0) {
    return {1, {0.0}, sigma, {separation}, sigma};
  }

  void validate() const {
    if (dim < 1) throw ConfigError("oracle dimension must be >= 1");
    if (!(sigma_normal > 0.0) || !(sigma_anomalous > 0.0)) throw ConfigError("oracle sigmas must be > 0");
    if (mu_normal.size() != dim || mu_anomalous.size() != dim) throw ConfigError("oracle means must have length dim");
  }
};

struct TheoryTrial {
  double eps_normal = 0.0;
  double eps_anomalous = 0.0;
  std::vector<double> gt_normal;
  std::vector<double> gt_anomalous;
};

struct AucEstimate {
  double auc = 0.0;
  double standard_error = 0.0;
};

struct SweepResult {
  std::vector<std::size_t> m_values;
  std::vector<double> auc;
  std::vector<double> stderrs;
};

inline const std::vector<std::size_t>& default_m_list() {
  static const std::vector<std::size_t> list{1, 2, 5, 10, 25, 50, 100, 250};
  return list;
}

namespace detail {

inline std::vector<double> draw(const std::vector<double>& mu, double sigma, Stream& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> v(mu.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = mu[j] + sigma * z(rng);
  return v;
}

// Minimum distance from `gt` to m draws of the normal distribution.
inline double min_distance(const std::vector<double>& gt, const OracleSpec& spec, std::size_t m, Stream& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double d = gt[j] - (spec.mu_normal[j] + spec.sigma_normal * z(rng));
      acc += d * d;
    }
    best = std::min(best, acc);
  }
  return std::sqrt(best);
}

}  // namespace detail

// One normal and one anomalous ground truth, each scored against m fresh normal samples.
inline TheoryTrial run_trial(const OracleSpec& spec, std::size_t m, Stream& rng) {
  if (m < 1) throw UsageError("M must be >= 1");
  TheoryTrial t;
  t.gt_normal = detail::draw(spec.mu_normal, spec.sigma_normal, rng);
  t.gt_anomalous = detail::draw(spec.mu_anomalous, spec.sigma_anomalous, rng);
  t.eps_normal = detail::min_distance(t.gt_normal, spec, m, rng);
  t.eps_anomalous = detail::min_distance(t.gt_anomalous, spec, m, rng);
  return t;
}

// Trial k of a run draws from derive_seed(seed, {kTheoryTrial, m, k}).
inline std::vector<TheoryTrial> run_trials(const OracleSpec& spec, std::size_t m, std::size_t trials,
                                           std::uint64_t seed) {
  spec.validate();
  std::vector<TheoryTrial> out;
  out.reserve(trials);
  for (std::size_t k = 0; k < trials; ++k) {
    Stream rng = make_stream(seed, {stream_tag::kTheoryTrial, m, k});
    out.push_back(run_trial(spec, m, rng));
  }
  return out;
}

// Fraction of trials with eps_a > eps_n, ties counting 1/2.
inline AucEstimate paired_auc(std::span<const double> eps_normal, std::span<const double> eps_anomalous) {
  if (eps_normal.size() != eps_anomalous.size() || eps_normal.empty())
    throw UsageError("paired AUC needs equal, non-empty populations");
  double wins = 0.0;
  for (std::size_t i = 0; i < eps_normal.size(); ++i) {
    if (eps_anomalous[i] > eps_normal[i]) wins += 1.0;
    else if (eps_anomalous[i] == eps_normal[i]) wins += 0.5;
  }
  const auto n = static_cast<double>(eps_normal.size());
  const double p = wins / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

inline AucEstimate empirical_auc(const OracleSpec& spec, std::size_t m, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw UsageError("at least one trial is required");
  const auto ts = run_trials(spec, m, trials, seed);
  std::vector<double> en, ea;
  en.reserve(trials);
  ea.reserve(trials);
  for (const auto& t : ts) {
    en.push_back(t.eps_normal);
    ea.push_back(t.eps_anomalous);
  }
  return paired_auc(en, ea);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Mass of N(mu_n, sigma_n^2) inside [h0 - eps, h0 + eps]; dim 1 only.
inline double ball_mass(std::span<const double> h0, double eps, const OracleSpec& spec) {
  spec.validate();
  if (spec.dim != 1 || h0.size() != 1)
    throw UnsupportedDimension("closed-form ball mass is only available in one dimension; use ball_mass_mc");
  if (!(eps >= 0.0)) throw ConfigError("ball radius must be >= 0");
  if (std::isinf(eps)) return 1.0;
  const double s = spec.sigma_normal;
  const double upper = normal_cdf((h0[0] + eps - spec.mu_normal[0]) / s);
  const double lower = normal_cdf((h0[0] - eps - spec.mu_normal[0]) / s);
  return std::clamp(upper - lower, 0.0, 1.0);
}

// Monte-Carlo ball mass for any dimension.
inline double ball_mass_mc(std::span<const double> h0, double eps, const OracleSpec& spec, std::size_t samples,
                           Stream& rng) {
  spec.validate();
  if (h0.size() != spec.dim) throw ConfigError("ball center has the wrong dimension");
  if (samples < 1) throw UsageError("at least one sample is required");
  std::normal_distribution<double> z(0.0, 1.0);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double d = h0[j] - (spec.mu_normal[j] + spec.sigma_normal * z(rng));
      acc += d * d;
    }
    if (acc <= eps * eps) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(samples);
}

// Mean over paired draws (h_n, eps_a) of 1 - (1 - P(h_n, eps_a))^M.
inline AucEstimate semi_analytic_auc(const OracleSpec& spec, std::size_t m, std::size_t trials, std::uint64_t seed) {
  spec.validate();
  if (spec.dim != 1) throw UnsupportedDimension("semi-analytic AUC requires a one-dimensional oracle");
  if (trials < 1) throw UsageError("at least one trial is required");
  if (m < 1) throw UsageError("M must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    Stream rng = make_stream(seed, {stream_tag::kTheorySemi, m, k});
    const auto hn = detail::draw(spec.mu_normal, spec.sigma_normal, rng);
    const auto ha = detail::draw(spec.mu_anomalous, spec.sigma_anomalous, rng);
    const double eps_a = detail::min_distance(ha, spec, m, rng);
    const double miss = 1.0 - ball_mass(hn, eps_a, spec);
    const double v = 1.0 - std::pow(miss, static_cast<double>(m));
    sum += v;
    sum_sq += v * v;
  }
  const auto n = static_cast<double>(trials);
  const double mean = sum / n;
  const double var = trials > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

// Empirical AUC per M; each M uses its own trial streams.
inline SweepResult sweep_m(const OracleSpec& spec, std::span<const std::size_t> m_list, std::size_t trials,
                           std::uint64_t seed) {
  if (m_list.empty()) throw UsageError("M list is empty");
  SweepResult r;
  for (auto m : m_list) {
    const auto est = empirical_auc(spec, m, trials, seed);
    r.m_values.push_back(m);
    r.auc.push_back(est.auc);
    r.stderrs.push_back(est.standard_error);
  }
  return r;
}

// Asymptotic AUC of the paired minimum-distance classifier as M grows, for a
// dim-1 oracle: E[f_n(h_n) / (f_n(h_n) + f_n(h_a))] with f_n the normal density.
// Simulated with the same draws as the semi-analytic estimator's ground truths.
inline AucEstimate large_m_limit(const OracleSpec& spec, std::size_t trials, std::uint64_t seed) {
  spec.validate();
  if (spec.dim != 1) throw UnsupportedDimension("large-M limit is implemented for one dimension");
  auto log_density = [&](double h) {
    const double z = (h - spec.mu_normal[0]) / spec.sigma_normal;
    return -0.5 * z * z;
  };
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    Stream rng = make_stream(seed, {stream_tag::kTheorySemi, 0, k});
    const double hn = detail::draw(spec.mu_normal, spec.sigma_normal, rng)[0];
    const double ha = detail::draw(spec.mu_anomalous, spec.sigma_anomalous, rng)[0];
    // f_n / (f_n + f_a) evaluated in log space so distant draws do not underflow.
    const double v = 1.0 / (1.0 + std::exp(log_density(ha) - log_density(hn)));
    sum += v;
    sum_sq += v * v;
  }
  const auto n = static_cast<double>(trials);
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n)};
}

}  // namespace picard::theory
