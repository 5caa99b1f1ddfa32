#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qrchain/simcore.hpp"

namespace qrchain {

inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binary_entropy needs p in [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Root of 1 - 2H(Q) on (0, 0.5).
inline double qber_threshold() {
  double lo = 0.0, hi = 0.5;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (1.0 - 2.0 * binary_entropy(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Secret fraction 1 - 2H(Q) of asymptotic BB84; exactly zero from the threshold on.
inline double secret_fraction(double qber) {
  static const double threshold = qber_threshold();
  if (qber >= threshold) return 0.0;
  return std::max(0.0, 1.0 - 2.0 * binary_entropy(qber));
}

/// QBER of a Werner pair, identical in every measurement basis.
inline double werner_qber(double w) { return (1.0 - w) / 2.0; }

struct SkrResult {
  double entanglement_rate = 0.0;  // Hz
  double qber = 0.0;
  double skr = 0.0;  // Hz
  double rate_stderr = 0.0;
  double qber_stderr = 0.0;
  double skr_stderr = 0.0;
  std::size_t pairs = 0;
};

struct BqcResult {
  double round_rate = 0.0;  // Hz
  double mean_success_prob = 0.0;
  double success_rate = 0.0;  // Hz
  double success_rate_stderr = 0.0;
  std::size_t rounds = 0;
};

namespace detail {

struct Moments {
  double mean_x = 0.0, mean_y = 0.0;
  double var_x = 0.0, var_y = 0.0, cov = 0.0;  // sample (n - 1) estimators
};

inline Moments moments(std::span<const double> x, std::span<const double> y) {
  Moments m;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mean_x += x[i];
    m.mean_y += y[i];
  }
  m.mean_x /= n;
  m.mean_y /= n;
  if (x.size() < 2) return m;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    m.var_x += dx * dx;
    m.var_y += dy * dy;
    m.cov += dx * dy;
  }
  m.var_x /= n - 1.0;
  m.var_y /= n - 1.0;
  m.cov /= n - 1.0;
  return m;
}

// Delta-method standard error of f(mean_x, mean_y) with gradient (gx, gy).
inline double delta_stderr(const Moments& m, double gx, double gy, std::size_t n) {
  const double var = gx * gx * m.var_x + 2.0 * gx * gy * m.cov + gy * gy * m.var_y;
  return std::sqrt(std::max(0.0, var) / static_cast<double>(n));
}

}  // namespace detail

/// Entanglement rate from the total elapsed time, QBER from the Werner parameters.
inline SkrResult skr_from_records(std::span<const PairRecord> records) {
  if (records.empty()) throw std::invalid_argument("no records to evaluate");
  std::vector<double> durations, qbers;
  durations.reserve(records.size());
  qbers.reserve(records.size());
  for (const auto& r : records) {
    durations.push_back(r.generation_duration);
    qbers.push_back(werner_qber(r.werner));
  }
  const auto m = detail::moments(durations, qbers);
  if (!(m.mean_x > 0.0)) throw std::invalid_argument("records span zero time");

  SkrResult out;
  out.pairs = records.size();
  out.entanglement_rate = 1.0 / m.mean_x;
  out.qber = m.mean_y;
  const double fraction = secret_fraction(out.qber);
  out.skr = out.entanglement_rate * fraction;

  const auto n = records.size();
  out.rate_stderr = std::sqrt(m.var_x / static_cast<double>(n)) / (m.mean_x * m.mean_x);
  out.qber_stderr = std::sqrt(m.var_y / static_cast<double>(n));
  double d_fraction = 0.0;
  if (fraction > 0.0 && out.qber > 0.0) {
    d_fraction = -2.0 * std::log2((1.0 - out.qber) / out.qber);
  }
  out.skr_stderr = detail::delta_stderr(m, -fraction / (m.mean_x * m.mean_x),
                                        d_fraction / m.mean_x, n);
  return out;
}

/// Success probability of one two-qubit test round. The first teleported qubit waits
/// `delta_t` in server memory; each pair teleports a pure state with fidelity (1 + w)/2.
/// Averages over which pair carries the dummy and which the trap.
inline double bqc_round_success_prob(double w_first, double w_second, double delta_t,
                                     double coherence_time) {
  if (!(delta_t >= 0.0)) throw std::invalid_argument("delta_t must be >= 0");
  auto fail = [&](double f_dummy, double f_trap) {
    const double keep = std::exp(-delta_t / coherence_time);
    return keep * (f_dummy * (1.0 - f_trap) + f_trap * (1.0 - f_dummy)) + 0.5 * (1.0 - keep);
  };
  const double f1 = (1.0 + w_first) / 2.0;
  const double f2 = (1.0 + w_second) / 2.0;
  return 1.0 - 0.5 * (fail(f1, f2) + fail(f2, f1));
}

/// Consecutive records form disjoint rounds (1st+2nd, 3rd+4th, ...); a trailing odd
/// record is dropped. Round rate is 1 / mean round duration.
inline BqcResult bqc_from_records(std::span<const PairRecord> records, double coherence_time) {
  if (records.size() < 2) throw std::invalid_argument("need at least two records for a BQC round");
  const std::size_t rounds = records.size() / 2;
  std::vector<double> durations, success;
  durations.reserve(rounds);
  success.reserve(rounds);
  for (std::size_t k = 0; k < rounds; ++k) {
    const auto& first = records[2 * k];
    const auto& second = records[2 * k + 1];
    durations.push_back(first.generation_duration + second.generation_duration);
    success.push_back(bqc_round_success_prob(first.werner, second.werner,
                                             second.generation_duration, coherence_time));
  }
  const auto m = detail::moments(durations, success);
  if (!(m.mean_x > 0.0)) throw std::invalid_argument("records span zero time");
  BqcResult out;
  out.rounds = rounds;
  out.round_rate = 1.0 / m.mean_x;
  out.mean_success_prob = m.mean_y;
  out.success_rate = out.round_rate * out.mean_success_prob;
  out.success_rate_stderr = detail::delta_stderr(m, -m.mean_y / (m.mean_x * m.mean_x),
                                                 1.0 / m.mean_x, rounds);
  return out;
}

enum class Metric { skr, bqc };

inline Metric metric_from_name(std::string_view name) {
  if (name == "skr") return Metric::skr;
  if (name == "bqc") return Metric::bqc;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "' (expected skr or bqc)");
}

inline std::string_view metric_name(Metric m) { return m == Metric::skr ? "skr" : "bqc"; }

/// Value of the target metric and its standard error.
struct MetricValue {
  double value = 0.0;
  double std_error = 0.0;
};

inline MetricValue evaluate_metric(Metric metric, std::span<const PairRecord> records,
                                   double coherence_time) {
  if (metric == Metric::skr) {
    const auto r = skr_from_records(records);
    return {r.skr, r.skr_stderr};
  }
  const auto r = bqc_from_records(records, coherence_time);
  return {r.success_rate, r.success_rate_stderr};
}

}  // namespace qrchain
