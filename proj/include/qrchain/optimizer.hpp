#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qrchain/fibergrid.hpp"
#include "qrchain/hardware.hpp"
#include "qrchain/metrics.hpp"
#include "qrchain/simcore.hpp"

namespace qrchain {

struct CostWeights {
  double w1 = 1e100;  // rate-target penalty
  double w2 = 1.0;    // hardware cost
};

/// Point in the search space: hardware plus the placement choice (r, a) and the
/// cut-off expressed as a fraction of the coherence time.
struct Candidate {
  HardwareParams params = kBaseline;
  int r = 0;
  double a = 0.0;
  double cutoff_fraction = 1.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct OptimizerConfig {
  CostWeights weights;
  double target_rate = 10.0;  // Hz
  Metric target_metric = Metric::skr;

  std::size_t population_size = 32;
  std::size_t generations = 30;
  double mutation_scale = 0.1;  // Gaussian sigma in normalized gene units
  double mutation_prob = 0.25;  // per gene
  double crossover_rate = 0.9;
  std::size_t elitism_count = 1;
  std::size_t tournament_size = 3;
  std::size_t sims_per_eval = 100;
  std::uint64_t rng_seed = 1;
  std::size_t threads = 0;  // 0: hardware concurrency

  // Bounds. Improvement factors apply to T, F, p_det and s_q.
  double factor_min = 1.0;
  double factor_max = 100.0;
  std::int64_t modes_cap = 1'000'000;
  int min_repeaters = 0;
  int max_repeaters = -1;  // -1: as many as the path holds
  double cutoff_fraction_min = 1e-3;
  double cutoff_fraction_max = 1.0;
  std::optional<int> fixed_repeaters;
  std::optional<double> fixed_asymmetry;
  std::optional<double> fixed_cutoff_fraction;

  double light_speed = kFiberLightSpeed;

  std::size_t local_search_budget = 200;  // cost evaluations
  double local_search_step = 0.05;        // relative step in factor space
};

struct OptimizationResult {
  Candidate best;
  CostBreakdown cost;
  double achieved_rate = 0.0;
  ChainConfiguration placement;
  std::size_t placement_rank = 0;
  std::vector<double> history;  // best total cost after each generation
  std::size_t evaluations = 0;
};

/// C = w1 (1 + (R_target - R_real))^2 Theta(R_target - R_real) + w2 H_C, Theta(0) = 0.
inline CostBreakdown total_cost(const Candidate& candidate, double achieved_rate,
                                double target_rate, const CostWeights& weights,
                                const PathContext& ctx) {
  if (!(achieved_rate >= 0.0)) throw std::invalid_argument("achieved rate must be >= 0");
  CostBreakdown cost = hardware_cost(candidate.params, ctx);
  const double gap = target_rate - achieved_rate;
  cost.penalty = gap > 0.0 ? weights.w1 * (1.0 + gap) * (1.0 + gap) : 0.0;
  cost.total_cost = cost.penalty + weights.w2 * cost.hardware_cost;
  return cost;
}

struct Evaluation {
  double achieved_rate = 0.0;
  CostBreakdown cost;
  bool stalled = false;
};

/// Cost landscape over one fiber path: placement table, pricing context and the
/// simulate-then-score evaluation shared by the genetic and local searches.
class HardwareOptimizer {
 public:
  static constexpr std::size_t kGenes = 8;
  using Genome = std::array<double, kGenes>;  // each gene in [0, 1]

  HardwareOptimizer(FiberPath path, OptimizerConfig config)
      : path_(std::move(path)), cfg_(std::move(config)), ctx_(path_context(path_)) {
    if (cfg_.population_size < 2) throw std::invalid_argument("population_size must be >= 2");
    if (cfg_.sims_per_eval < 2) throw std::invalid_argument("sims_per_eval must be >= 2");
    if (!(cfg_.factor_min > 0.0 && cfg_.factor_min <= cfg_.factor_max)) {
      throw std::invalid_argument("empty improvement-factor range");
    }
    if (cfg_.modes_cap < 1) throw std::invalid_argument("modes_cap must be >= 1");
    if (!(cfg_.cutoff_fraction_min > 0.0 && cfg_.cutoff_fraction_min <= cfg_.cutoff_fraction_max)) {
      throw std::invalid_argument("empty cut-off range");
    }
    const int feasible = max_feasible_repeaters(path_.num_sites());
    r_max_ = cfg_.max_repeaters < 0 ? feasible : std::min(cfg_.max_repeaters, feasible);
    r_min_ = std::max(cfg_.min_repeaters, 0);
    if (cfg_.fixed_repeaters) r_min_ = r_max_ = *cfg_.fixed_repeaters;
    if (r_min_ > r_max_ || r_max_ > feasible) {
      throw std::invalid_argument("no admissible repeater count for this path");
    }
    table_ = enumerate_placements(path_, r_max_);
    // The factor cap bounds the modes as well, so the hardware cost stays below 5 * factor_max.
    const double n_at_cap = value_for_factor(Param::num_modes, cfg_.factor_max, ctx_);
    modes_max_ = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::min(static_cast<double>(cfg_.modes_cap), std::floor(n_at_cap))));
  }

  const FiberPath& path() const { return path_; }
  const OptimizerConfig& config() const { return cfg_; }
  const PlacementTable& table() const { return table_; }
  const PathContext& context() const { return ctx_; }
  int min_repeaters() const { return r_min_; }
  int max_repeaters() const { return r_max_; }
  std::int64_t max_modes() const { return modes_max_; }
  std::size_t evaluations() const { return evaluations_.load(); }

  const ChainConfiguration& placement(const Candidate& c) const {
    if (c.r == 0) {
      if (!direct_) direct_ = direct_configuration(path_);
      return *direct_;
    }
    return select_configuration(table_, c.r, c.a);
  }

  /// Simulates `sims_per_eval` independent generations (same derived seed for every
  /// candidate) and prices the result.
  Evaluation evaluate(const Candidate& c) const {
    ++evaluations_;
    SimConfig sim;
    sim.chain = placement(c);
    sim.params = c.params;
    sim.cutoff_time = c.cutoff_fraction * c.params.coherence_time;
    sim.num_pairs = cfg_.sims_per_eval;
    sim.rng_seed = derive_seed(cfg_.rng_seed, 0xE7A1);
    sim.light_speed = cfg_.light_speed;
    Evaluation out;
    try {
      ChainSimulator simulator(sim);
      const auto records = simulator.run();
      out.achieved_rate = evaluate_metric(cfg_.target_metric, records, c.params.coherence_time).value;
    } catch (const SimulationStalled&) {
      out.stalled = true;
      out.achieved_rate = 0.0;
    }
    try {
      out.cost = total_cost(c, out.achieved_rate, cfg_.target_rate, cfg_.weights, ctx_);
    } catch (const std::domain_error&) {
      // Improvement needed is unbounded (e.g. so many modes that p_ni rounds to 1).
      out.cost.hardware_cost = out.cost.total_cost = std::numeric_limits<double>::infinity();
    }
    return out;
  }

  Candidate decode(const Genome& g) const {
    auto log_between = [](double lo, double hi, double u) {
      return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
    };
    Candidate c;
    const double fmin = cfg_.factor_min, fmax = cfg_.factor_max;
    c.params.coherence_time = value_for_factor(Param::coherence_time, log_between(fmin, fmax, g[0]), ctx_);
    c.params.num_modes = std::clamp<std::int64_t>(
        std::llround(log_between(1.0, static_cast<double>(modes_max_), g[1])), 1, modes_max_);
    c.params.link_fidelity = value_for_factor(Param::link_fidelity, log_between(fmin, fmax, g[2]), ctx_);
    c.params.detection_prob = value_for_factor(Param::detection_prob, log_between(fmin, fmax, g[3]), ctx_);
    c.params.swap_quality = value_for_factor(Param::swap_quality, log_between(fmin, fmax, g[4]), ctx_);
    const int span = r_max_ - r_min_ + 1;
    c.r = std::min(r_max_, r_min_ + static_cast<int>(std::floor(g[5] * span)));
    c.a = cfg_.fixed_asymmetry.value_or(g[6]);
    c.cutoff_fraction = cfg_.fixed_cutoff_fraction.value_or(
        log_between(cfg_.cutoff_fraction_min, cfg_.cutoff_fraction_max, g[7]));
    return c;
  }

  Genome encode(const Candidate& c) const {
    auto unit = [](double lo, double hi, double v) {
      if (hi <= lo) return 0.0;
      return std::clamp((std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo)), 0.0, 1.0);
    };
    const double fmin = cfg_.factor_min, fmax = cfg_.factor_max;
    Genome g{};
    g[0] = unit(fmin, fmax, improvement_factor(Param::coherence_time, c.params.coherence_time, ctx_));
    g[1] = unit(1.0, static_cast<double>(modes_max_), static_cast<double>(c.params.num_modes));
    g[2] = unit(fmin, fmax, improvement_factor(Param::link_fidelity, c.params.link_fidelity, ctx_));
    g[3] = unit(fmin, fmax, improvement_factor(Param::detection_prob, c.params.detection_prob, ctx_));
    g[4] = unit(fmin, fmax, improvement_factor(Param::swap_quality, c.params.swap_quality, ctx_));
    const int span = r_max_ - r_min_ + 1;
    g[5] = std::clamp((c.r - r_min_ + 0.5) / span, 0.0, 1.0);
    g[6] = std::clamp(c.a, 0.0, 1.0);
    g[7] = unit(cfg_.cutoff_fraction_min, cfg_.cutoff_fraction_max, c.cutoff_fraction);
    return g;
  }

  /// Baseline hardware at the largest admissible repeater count, most symmetric placement.
  Candidate baseline_candidate() const {
    Candidate c;
    c.params = kBaseline;
    c.r = r_max_;
    c.a = cfg_.fixed_asymmetry.value_or(0.0);
    c.cutoff_fraction = cfg_.fixed_cutoff_fraction.value_or(cfg_.cutoff_fraction_max);
    return decode(encode(c));
  }

  OptimizationResult genetic_search() const {
    std::mt19937_64 rng(derive_seed(cfg_.rng_seed, 0x6A));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, cfg_.mutation_scale);

    std::vector<Genome> population;
    population.push_back(encode(baseline_candidate()));
    while (population.size() < cfg_.population_size) {
      Genome g;
      for (double& x : g) x = unit(rng);
      population.push_back(g);
    }

    std::vector<Evaluation> scores = evaluate_all(population);
    OptimizationResult result;
    std::size_t best = argmin(scores);
    Genome best_genome = population[best];
    Evaluation best_eval = scores[best];
    result.history.push_back(best_eval.cost.total_cost);

    for (std::size_t gen = 1; gen < cfg_.generations; ++gen) {
      std::vector<std::size_t> order(population.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return scores[x].cost.total_cost < scores[y].cost.total_cost;
      });

      std::vector<Genome> next;
      std::vector<Evaluation> next_scores;
      const std::size_t elites = std::min(cfg_.elitism_count, population.size());
      for (std::size_t i = 0; i < elites; ++i) {
        next.push_back(population[order[i]]);
        next_scores.push_back(scores[order[i]]);
      }
      auto tournament = [&]() {
        std::size_t pick = static_cast<std::size_t>(unit(rng) * population.size()) % population.size();
        for (std::size_t k = 1; k < cfg_.tournament_size; ++k) {
          const std::size_t other =
              static_cast<std::size_t>(unit(rng) * population.size()) % population.size();
          if (scores[other].cost.total_cost < scores[pick].cost.total_cost) pick = other;
        }
        return pick;
      };
      std::vector<Genome> children;
      while (next.size() + children.size() < cfg_.population_size) {
        const Genome& p1 = population[tournament()];
        const Genome& p2 = population[tournament()];
        Genome child = p1;
        if (unit(rng) < cfg_.crossover_rate) {
          for (std::size_t k = 0; k < kGenes; ++k) {
            if (unit(rng) < 0.5) child[k] = p2[k];
          }
        }
        for (double& x : child) {
          if (unit(rng) < cfg_.mutation_prob) x = std::clamp(x + gauss(rng), 0.0, 1.0);
        }
        children.push_back(child);
      }
      auto child_scores = evaluate_all(children);
      next.insert(next.end(), children.begin(), children.end());
      next_scores.insert(next_scores.end(), child_scores.begin(), child_scores.end());
      population = std::move(next);
      scores = std::move(next_scores);

      best = argmin(scores);
      if (scores[best].cost.total_cost < best_eval.cost.total_cost) {
        best_eval = scores[best];
        best_genome = population[best];
      }
      result.history.push_back(best_eval.cost.total_cost);
    }

    result.best = decode(best_genome);
    result.cost = best_eval.cost;
    result.achieved_rate = best_eval.achieved_rate;
    fill_placement(result);
    result.evaluations = evaluations();
    return result;
  }

  /// Coordinate-wise descent over the five hardware parameters in improvement-factor
  /// space. A step is kept only if it strictly lowers the cost; the same parameter is
  /// then stepped again. Stops after a full pass without improvement or when
  /// `local_search_budget` evaluations are spent.
  Candidate local_search(const Candidate& start) const {
    std::size_t budget = cfg_.local_search_budget;
    Candidate current = start;
    if (budget == 0) return current;
    double current_cost = evaluate(current).cost.total_cost;
    --budget;
    bool improved_in_pass = true;
    while (improved_in_pass && budget > 0) {
      improved_in_pass = false;
      for (Param p : kAllParams) {
        for (int direction : {-1, +1}) {
          bool moved = false;
          while (budget > 0) {
            auto trial = step(current, p, direction);
            if (!trial) break;
            --budget;
            const double cost = evaluate(*trial).cost.total_cost;
            if (cost < current_cost) {
              current = *trial;
              current_cost = cost;
              moved = improved_in_pass = true;
            } else {
              break;
            }
          }
          if (moved || budget == 0) break;
        }
        if (budget == 0) break;
      }
    }
    return current;
  }

  OptimizationResult describe(const Candidate& c) const {
    OptimizationResult r;
    const auto ev = evaluate(c);
    r.best = c;
    r.cost = ev.cost;
    r.achieved_rate = ev.achieved_rate;
    fill_placement(r);
    r.evaluations = evaluations();
    return r;
  }

 private:
  std::optional<Candidate> step(const Candidate& c, Param p, int direction) const {
    Candidate out = c;
    const double rel = cfg_.local_search_step;
    if (p == Param::num_modes) {
      const auto n = c.params.num_modes;
      const auto delta = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(n * rel)));
      const auto next = std::clamp<std::int64_t>(n + direction * delta, 1, modes_max_);
      if (next == n) return std::nullopt;
      out.params.num_modes = next;
      return out;
    }
    const double k = improvement_factor(p, param_value(c.params, p), ctx_);
    const double next = std::clamp(k * (1.0 + direction * rel), cfg_.factor_min, cfg_.factor_max);
    if (next == k) return std::nullopt;
    const double value = value_for_factor(p, next, ctx_);
    switch (p) {
      case Param::coherence_time: out.params.coherence_time = value; break;
      case Param::link_fidelity: out.params.link_fidelity = value; break;
      case Param::detection_prob: out.params.detection_prob = value; break;
      case Param::swap_quality: out.params.swap_quality = value; break;
      case Param::num_modes: break;
    }
    if (out == c) return std::nullopt;
    return out;
  }

  std::vector<Evaluation> evaluate_all(const std::vector<Genome>& genomes) const {
    std::vector<Evaluation> out(genomes.size());
    std::size_t workers = cfg_.threads ? cfg_.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, genomes.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&]() {
      for (std::size_t i = next++; i < genomes.size(); i = next++) {
        try {
          out[i] = evaluate(decode(genomes[i]));
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    };
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);
    return out;
  }

  static std::size_t argmin(const std::vector<Evaluation>& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i].cost.total_cost < scores[best].cost.total_cost) best = i;
    }
    return best;
  }

  void fill_placement(OptimizationResult& r) const {
    r.placement = placement(r.best);
    r.placement_rank = r.best.r == 0 ? 0 : placement_rank(table_.count(r.best.r), r.best.a);
  }

  FiberPath path_;
  OptimizerConfig cfg_;
  PathContext ctx_;
  PlacementTable table_;
  int r_min_ = 0;
  int r_max_ = 0;
  std::int64_t modes_max_ = 1;
  mutable std::optional<ChainConfiguration> direct_;
  mutable std::atomic<std::size_t> evaluations_{0};
};

inline Evaluation evaluate(const Candidate& candidate, const OptimizerConfig& config,
                           const FiberPath& path) {
  return HardwareOptimizer(path, config).evaluate(candidate);
}

inline OptimizationResult genetic_search(const OptimizerConfig& config, const FiberPath& path) {
  return HardwareOptimizer(path, config).genetic_search();
}

inline Candidate local_search(const Candidate& start, const OptimizerConfig& config,
                              const FiberPath& path) {
  return HardwareOptimizer(path, config).local_search(start);
}

struct MinModesConfig {
  double total_length = 0.0;       // km
  double total_attenuation = 0.0;  // dB
  int num_repeaters = 0;
  double target_rate = 1.0;  // Hz
  Metric metric = Metric::skr;
  double z = 1.645;  // one-sided 95% lower confidence bound must reach the target
  std::size_t sims = 100;
  std::uint64_t rng_seed = 1;
  std::int64_t modes_cap = 1'000'000;
  double light_speed = kFiberLightSpeed;
};

struct MinModesResult {
  std::int64_t num_modes = 0;
  double rate = 0.0;
  double rate_stderr = 0.0;
  std::size_t evaluations = 0;
};

class TargetUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Equidistant chain on the symmetrized path: repeaters on every second site.
inline ChainConfiguration symmetric_chain(double total_length, double total_attenuation,
                                          int num_repeaters) {
  const FiberPath path = symmetrized_path(total_length, total_attenuation, num_repeaters);
  if (num_repeaters == 0) return direct_configuration(path);
  std::vector<int> sites;
  for (int k = 1; k <= num_repeaters; ++k) sites.push_back(2 * k);
  return make_configuration(path, sites);
}

/// Smallest number of modes for which noiseless hardware reaches the target rate.
/// Doubling search followed by bisection; every probe reuses the same seed.
inline MinModesResult minimal_modes(const MinModesConfig& cfg) {
  if (!(cfg.target_rate >= 0.0)) throw std::invalid_argument("target rate must be >= 0");
  if (cfg.sims < 2) throw std::invalid_argument("sims must be >= 2");
  if (cfg.modes_cap < 1) throw std::invalid_argument("modes_cap must be >= 1");
  const ChainConfiguration chain =
      symmetric_chain(cfg.total_length, cfg.total_attenuation, cfg.num_repeaters);

  MinModesResult out;
  auto probe = [&](std::int64_t n) {
    ++out.evaluations;
    SimConfig sim;
    sim.chain = chain;
    sim.params = kNoiseless;
    sim.params.num_modes = n;
    sim.num_pairs = cfg.sims;
    sim.rng_seed = derive_seed(cfg.rng_seed, 0x3F);
    sim.light_speed = cfg.light_speed;
    const auto records = run_chain(sim);
    return evaluate_metric(cfg.metric, records, sim.params.coherence_time);
  };
  // Relative slack of 1e-12 absorbs rounding in 1 / mean(duration).
  auto accepted = [&](const MetricValue& m) {
    return m.value - cfg.z * m.std_error >= cfg.target_rate * (1.0 - 1e-12);
  };

  std::int64_t lo = 0;  // largest n known to fail
  std::int64_t hi = 1;
  MetricValue at_hi = probe(hi);
  while (!accepted(at_hi)) {
    if (hi == cfg.modes_cap) {
      throw TargetUnreachable("target " + std::to_string(cfg.target_rate) +
                              " Hz not reached with " + std::to_string(cfg.modes_cap) + " modes");
    }
    lo = hi;
    hi = std::min(cfg.modes_cap, 2 * hi);
    at_hi = probe(hi);
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    const auto m = probe(mid);
    if (accepted(m)) {
      hi = mid;
      at_hi = m;
    } else {
      lo = mid;
    }
  }
  out.num_modes = hi;
  out.rate = at_hi.value;
  out.rate_stderr = at_hi.std_error;
  return out;
}

}  // namespace qrchain
