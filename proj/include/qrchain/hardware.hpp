#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qrchain {

/// The five hardware quantities that the optimizer is allowed to improve.
struct HardwareParams {
  double coherence_time = 1.0;  // seconds; +inf means no memory decoherence
  std::int64_t num_modes = 1;
  double link_fidelity = 0.83;
  double detection_prob = 0.255;
  double swap_quality = 0.83;

  /// Werner parameter of a freshly generated elementary link, W = (4F - 1) / 3.
  double link_werner() const { return (4.0 * link_fidelity - 1.0) / 3.0; }

  void validate() const {
    if (!(coherence_time > 0.0)) {
      throw std::invalid_argument("coherence_time must be > 0");
    }
    if (num_modes < 1) {
      throw std::invalid_argument("num_modes must be >= 1");
    }
    if (!(link_fidelity > 0.25 && link_fidelity <= 1.0)) {
      throw std::invalid_argument("link_fidelity must be in (0.25, 1]");
    }
    if (!(detection_prob > 0.0 && detection_prob <= 1.0)) {
      throw std::invalid_argument("detection_prob must be in (0, 1]");
    }
    if (!(swap_quality > 0.0 && swap_quality <= 1.0)) {
      throw std::invalid_argument("swap_quality must be in (0, 1]");
    }
  }

  friend bool operator==(const HardwareParams&, const HardwareParams&) = default;
};

/// State-of-the-art color-center values used as the improvement baseline.
inline constexpr HardwareParams kBaseline{1.0, 1, 0.83, 0.255, 0.83};

/// Hardware without any imperfection other than fiber loss.
inline constexpr HardwareParams kNoiseless{std::numeric_limits<double>::infinity(), 1, 1.0,
                                           1.0, 1.0};

enum class Param { coherence_time, num_modes, link_fidelity, detection_prob, swap_quality };

inline constexpr std::array<Param, 5> kAllParams{Param::coherence_time, Param::num_modes,
                                                 Param::link_fidelity, Param::detection_prob,
                                                 Param::swap_quality};

inline constexpr std::string_view param_name(Param p) {
  switch (p) {
    case Param::coherence_time: return "coherence_time";
    case Param::num_modes: return "num_modes";
    case Param::link_fidelity: return "link_fidelity";
    case Param::detection_prob: return "detection_prob";
    case Param::swap_quality: return "swap_quality";
  }
  return "?";
}

inline Param param_from_name(std::string_view name) {
  for (Param p : kAllParams) {
    if (param_name(p) == name) return p;
  }
  throw std::invalid_argument("unknown hardware parameter: " + std::string(name));
}

inline double param_value(const HardwareParams& hw, Param p) {
  switch (p) {
    case Param::coherence_time: return hw.coherence_time;
    case Param::num_modes: return static_cast<double>(hw.num_modes);
    case Param::link_fidelity: return hw.link_fidelity;
    case Param::detection_prob: return hw.detection_prob;
    case Param::swap_quality: return hw.swap_quality;
  }
  return 0.0;
}

/// Path-dependent data needed to price the number of multiplexing modes.
struct PathContext {
  /// Photon survival probability over an elementary link made of two average segments.
  double p_surv_baseline = 1.0;
};

/// p_base improved by factor k: p_base^(1/k).
inline double improve_probability(double p_base, double factor) {
  if (!(p_base > 0.0 && p_base <= 1.0)) throw std::invalid_argument("probability must be in (0, 1]");
  if (!(factor > 0.0)) throw std::invalid_argument("improvement factor must be > 0");
  return std::pow(p_base, 1.0 / factor);
}

/// ln p_base / ln p_cand.
inline double factor_between(double p_base, double p_cand) {
  if (!(p_base > 0.0 && p_base < 1.0)) throw std::invalid_argument("baseline probability must be in (0, 1)");
  if (!(p_cand > 0.0 && p_cand < 1.0)) throw std::domain_error("candidate probability must be in (0, 1)");
  return std::log(p_base) / std::log(p_cand);
}

/// Probability that parameter `p` at `value` introduces no error or loss.
inline double no_imperfection_prob(Param p, double value, const PathContext& ctx) {
  switch (p) {
    case Param::detection_prob:
    case Param::swap_quality:
      if (!(value > 0.0 && value <= 1.0)) {
        throw std::invalid_argument(std::string(param_name(p)) + " must be in (0, 1]");
      }
      return value;
    case Param::link_fidelity:
      if (!(value > 0.25 && value <= 1.0)) {
        throw std::invalid_argument("link_fidelity must be in (0.25, 1]");
      }
      return value;
    case Param::coherence_time:
      if (!(value > 0.0)) throw std::invalid_argument("coherence_time must be > 0");
      return std::exp(-1.0 / value);
    case Param::num_modes:
      if (!(value >= 1.0)) throw std::invalid_argument("num_modes must be >= 1");
      if (!(ctx.p_surv_baseline > 0.0 && ctx.p_surv_baseline <= 1.0)) {
        throw std::invalid_argument("p_surv_baseline must be in (0, 1]");
      }
      // 1 - (1-p)^N, written to stay accurate when p is tiny.
      return -std::expm1(value * std::log1p(-ctx.p_surv_baseline));
  }
  throw std::invalid_argument("unknown parameter");
}

/// k such that the no-imperfection probability at `value` equals p_baseline^(1/k).
/// Values worse than baseline give k < 1.
inline double improvement_factor(Param p, double value, const PathContext& ctx) {
  const double p_base = no_imperfection_prob(p, param_value(kBaseline, p), ctx);
  const double p_cand = no_imperfection_prob(p, value, ctx);
  if (!(p_cand > 0.0)) {
    throw std::domain_error(std::string(param_name(p)) + ": no-imperfection probability <= 0");
  }
  double log_base = std::log(p_base);
  double log_cand = std::log(p_cand);
  if (p == Param::num_modes) {
    // ln(1 - q) with q = (1-p)^N kept in log space; p_cand rounds to 1 long before q does.
    const double log_miss = std::log1p(-ctx.p_surv_baseline);
    log_base = std::log1p(-std::exp(param_value(kBaseline, p) * log_miss));
    log_cand = std::log1p(-std::exp(value * log_miss));
  }
  if (p_cand >= 1.0 && log_cand == 0.0) {
    throw std::domain_error(std::string(param_name(p)) +
                            ": no-imperfection probability 1 needs an infinite improvement");
  }
  return log_base / log_cand;
}

/// Inverse of improvement_factor for the continuous parameters.
inline double value_for_factor(Param p, double factor, const PathContext& ctx) {
  if (!(factor > 0.0)) throw std::invalid_argument("improvement factor must be > 0");
  switch (p) {
    case Param::coherence_time: return kBaseline.coherence_time * factor;
    case Param::link_fidelity: return std::pow(kBaseline.link_fidelity, 1.0 / factor);
    case Param::detection_prob: return std::pow(kBaseline.detection_prob, 1.0 / factor);
    case Param::swap_quality: return std::pow(kBaseline.swap_quality, 1.0 / factor);
    case Param::num_modes: {
      const double p_base = no_imperfection_prob(p, 1.0, ctx);
      const double target = std::pow(p_base, 1.0 / factor);
      if (target >= 1.0) return std::numeric_limits<double>::infinity();
      return std::log1p(-target) / std::log1p(-ctx.p_surv_baseline);
    }
  }
  throw std::invalid_argument("unknown parameter");
}

struct CostBreakdown {
  std::array<double, 5> improvement_factors{};  // indexed like kAllParams
  double hardware_cost = 0.0;
  double penalty = 0.0;
  double total_cost = 0.0;

  double factor(Param p) const { return improvement_factors[static_cast<std::size_t>(p)]; }
};

/// Improvement factors of all five parameters and their sum. Penalty is left at zero.
inline CostBreakdown hardware_cost(const HardwareParams& hw, const PathContext& ctx) {
  hw.validate();
  CostBreakdown out;
  for (Param p : kAllParams) {
    const double k = improvement_factor(p, param_value(hw, p), ctx);
    out.improvement_factors[static_cast<std::size_t>(p)] = k;
    out.hardware_cost += k;
  }
  out.total_cost = out.hardware_cost;
  return out;
}

// Color-center component values from which the baseline was derived.
struct ColorCenterComponents {
  double carbon_coherence = 1.0;
  double elementary_link_fidelity = 0.83;
  double electron_init_fidelity = 0.995;
  double carbon_init_fidelity = 0.99;
  double electron_carbon_gate_fidelity = 0.97;
  double electron_1q_gate_fidelity = 0.995;
  double carbon_1q_gate_fidelity = 0.999;
  double electron_readout_fidelity_0 = 0.93;
  double electron_readout_fidelity_1 = 0.995;
  double photonic_interface_eff = 0.855;
  double freq_conversion_eff = 0.3;
};

namespace detail {

inline double checked_unit(double v, const char* what) {
  if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(what) + " must be in (0, 1]");
  return v;
}

// Survival probability p of a depolarizing channel with the given fidelity, F = p + (1 - p)/d.
inline double survival_1q(double fidelity, const char* what) {
  return checked_unit(2.0 * fidelity - 1.0, what);
}
inline double survival_2q(double fidelity, const char* what) {
  return checked_unit((4.0 * fidelity - 1.0) / 3.0, what);
}

}  // namespace detail

/// p_det = photonic interface efficiency x frequency conversion efficiency.
inline double derive_baseline_detection_prob(const ColorCenterComponents& c) {
  return detail::checked_unit(c.photonic_interface_eff, "photonic_interface_eff") *
         detail::checked_unit(c.freq_conversion_eff, "freq_conversion_eff");
}

/// Product of depolarizing survival probabilities over the swap circuit:
/// carbon 1q gate (x2), electron-carbon gate, electron 1q gate (x2), electron init,
/// electron readout (x2) and the retrieve operation. Readout uses the mean of the two
/// outcome fidelities.
inline double derive_baseline_swap_quality(const ColorCenterComponents& c,
                                           double retrieve_survival = 1.0) {
  using detail::survival_1q;
  using detail::survival_2q;
  const double carbon = survival_1q(c.carbon_1q_gate_fidelity, "carbon_1q_gate");
  const double ec = survival_2q(c.electron_carbon_gate_fidelity, "electron_carbon_gate");
  const double electron = survival_1q(c.electron_1q_gate_fidelity, "electron_1q_gate");
  const double init = survival_1q(c.electron_init_fidelity, "electron_init");
  const double readout = 0.5 * (c.electron_readout_fidelity_0 + c.electron_readout_fidelity_1);
  const double meas = survival_1q(readout, "electron_readout");
  const double retrieve = detail::checked_unit(retrieve_survival, "retrieve_survival");
  return carbon * carbon * ec * electron * electron * init * meas * meas * retrieve;
}

}  // namespace qrchain
