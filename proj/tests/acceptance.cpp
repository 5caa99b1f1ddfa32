// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qrchain/fibergrid.hpp"
#include "qrchain/hardware.hpp"
#include "qrchain/metrics.hpp"
#include "qrchain/optimizer.hpp"
#include "qrchain/oracle.hpp"
#include "qrchain/simcore.hpp"

using namespace qrchain;

namespace {

const std::string kGrid = std::string(QRCHAIN_DATA_DIR) + "/bonn_berlin_grid.csv";

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int id, const std::string& name, double time_limit_s,
               const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.detail << " [exception: " << e.what() << "]";
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (elapsed > time_limit_s) {
    c.ok = false;
    c.detail << " [too slow: limit " << time_limit_s << " s]";
  }
  if (!c.ok) ++failures;
  std::printf("%s %2d %s (%.2f s)%s\n", c.ok ? "PASS" : "FAIL", id, name.c_str(), elapsed,
              c.detail.str().c_str());
  std::fflush(stdout);
}

// Gap-constrained r-subsets of sites 1..S counted by exhaustive bitmask scan.
std::size_t brute_force_placements(int sites, int r) {
  std::size_t count = 0;
  for (std::uint32_t mask = 0; mask < (1u << sites); ++mask) {
    if (std::popcount(mask) != r) continue;
    int prev = 0;
    bool ok = true;
    for (int s = 1; s <= sites && ok; ++s) {
      if (!(mask & (1u << (s - 1)))) continue;
      ok = s - prev >= 2;
      prev = s;
    }
    count += ok && sites + 1 - prev >= 2;
  }
  return count;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& x) {
  MeanSe out;
  for (double v : x) out.mean += v;
  out.mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - out.mean) * (v - out.mean);
  out.se = std::sqrt(ss / (x.size() - 1.0) / static_cast<double>(x.size()));
  return out;
}

double fidelity(double w) { return (1.0 + 3.0 * w) / 4.0; }

}  // namespace

int main() {
  criterion(1, "placement count on the 17-segment Bonn-Berlin grid", 1.0, [](Check& c) {
    const auto path = load_fiber_path_file(kGrid);
    const auto table = enumerate_placements(path, 7);
    const auto oracle7 = brute_force_placements(static_cast<int>(path.num_sites()), 7);
    c.detail << " total=" << table.total() << " r7=" << table.count(7) << " oracle_r7=" << oracle7;
    c.require(path.num_segments() == 17, "17 segments");
    c.require(table.total() == 986, "986 placements");
    c.require(table.count(7) == 8 && oracle7 == 8, "8 placements with 7 repeaters");
  });

  criterion(2, "improvement-factor worked example", 0.1, [](Check& c) {
    const double p = improve_probability(0.1, 5.0);
    c.detail << " p=" << p;
    c.require(std::abs(p - 0.6310) <= 1e-4, "0.1^(1/5) = 0.6310");
  });

  criterion(3, "Werner product formula vs density-matrix oracle", 10.0, [](Check& c) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uw(0.5, 1.0), usq(0.8, 1.0), u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int links = 2 + trial % 2;
      const double T = 0.1 + 2.0 * u(rng);
      std::vector<double> ws, storage;
      for (int i = 0; i < links; ++i) ws.push_back(uw(rng));
      for (int j = 0; j < 2 * (links - 1); ++j) storage.push_back(T * u(rng));
      const double sq = usq(rng);
      const double f_formula = fidelity(chain_werner(ws, sq, storage, T));
      const double f_oracle = oracle::bell_fidelity(oracle::chain_state(ws, sq, storage, T));
      worst = std::max(worst, std::abs(f_formula - f_oracle));
    }
    // The simulator itself, with every attempt succeeding and storage times known.
    double worst_sim = 0.0;
    std::uniform_real_distribution<double> ulen(10.0, 300.0);
    for (int trial = 0; trial < 100; ++trial) {
      const int links = 2 + trial % 2;
      std::vector<ElementaryLink> ls;
      for (int i = 0; i < links; ++i) ls.push_back({ulen(rng), 0.0});
      SimConfig sim;
      sim.chain = configuration_from_links(ls);
      sim.params = {0.005 + 0.05 * u(rng), 1, 0.875 + 0.125 * u(rng), 1.0, usq(rng)};
      sim.num_pairs = 1;
      const double w = run_chain(sim).front().werner;
      std::vector<double> storage;
      for (int j = 1; j < links; ++j) {
        const double left = ls[j - 1].length_km / kFiberLightSpeed;
        const double right = ls[j].length_km / kFiberLightSpeed;
        storage.push_back(std::max(left, right) - left);
        storage.push_back(std::max(left, right) - right);
      }
      const std::vector<double> lw(links, sim.params.link_werner());
      const double f_oracle = oracle::bell_fidelity(
          oracle::chain_state(lw, sim.params.swap_quality, storage, sim.params.coherence_time));
      worst_sim = std::max(worst_sim, std::abs(fidelity(w) - f_oracle));
    }
    c.detail << " max|dF| formula=" << worst << " simulator=" << worst_sim;
    c.require(worst <= 1e-9, "formula within 1e-9");
    c.require(worst_sim <= 1e-9, "simulator within 1e-9");
  });

  criterion(4, "single-link waiting time", 5.0, [](Check& c) {
    SimConfig sim;
    sim.chain = configuration_from_links({{200.0, 0.0}});  // 1 ms per attempt
    sim.params = kNoiseless;
    sim.params.detection_prob = 0.5;
    sim.num_pairs = 10000;
    sim.rng_seed = 41;
    std::vector<double> d;
    for (const auto& r : run_chain(sim)) d.push_back(r.generation_duration);
    const auto m = mean_se(d);
    c.detail << " mean=" << m.mean * 1e3 << " ms se=" << m.se * 1e3 << " ms";
    c.require(std::abs(m.mean - 2e-3) <= 3 * m.se, "within 3 se of 2 ms");
  });

  criterion(5, "two-link swap-asap waiting time", 30.0, [](Check& c) {
    SimConfig sim;
    sim.chain = configuration_from_links({{200.0, 0.0}, {200.0, 0.0}});
    sim.params = kNoiseless;
    sim.params.detection_prob = 0.1;
    sim.num_pairs = 10000;
    sim.rng_seed = 42;
    const double t = 1e-3;
    const double latency = 200.0 / kFiberLightSpeed;  // swap outcome reaching the far end
    std::vector<double> attempts;
    for (const auto& r : run_chain(sim)) attempts.push_back((r.generation_duration - latency) / t);
    const auto m = mean_se(attempts);
    const double p = 0.1;
    const double expected = 2.0 / p - 1.0 / (2.0 * p - p * p);
    c.detail << " mean=" << m.mean << " se=" << m.se << " expected=" << expected;
    c.require(std::abs(m.mean - expected) <= 3 * m.se, "within 3 se of 14.74");
  });

  criterion(6, "QBER threshold", 0.1, [](Check& c) {
    const double q = qber_threshold();
    const double w = 1.0 - 2.0 * q;
    c.detail << " q*=" << q << " F*=" << fidelity(w);
    c.require(std::abs(q - 0.1100) <= 5e-4, "threshold 0.1100 +- 0.0005");
    c.require(std::abs(fidelity(w) - 0.8350) <= 1e-3, "fidelity 0.8350 +- 0.001");
    for (double qq : {q, q + 1e-9, 0.2, 0.5}) {
      std::vector<PairRecord> recs;
      for (int i = 0; i < 10; ++i) recs.push_back({0.1 * (i + 1), 0.1, 1.0 - 2.0 * qq});
      c.require(skr_from_records(recs).skr == 0.0, "zero SKR at qber " + std::to_string(qq));
    }
  });

  criterion(7, "BQC success-probability limits", 0.1, [](Check& c) {
    c.require(bqc_round_success_prob(1.0, 1.0, 0.0, 1.0) == 1.0, "perfect pairs, no wait");
    const double far = bqc_round_success_prob(0.9, 0.7, 1e3, 1.0);
    c.require(std::abs(far - 0.5) <= 1e-12, "long wait tends to 1/2");
    bool symmetric = true;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
      const double a = u(rng), b = u(rng);
      symmetric &= std::abs(bqc_round_success_prob(a, b, 0.0, 1.0) -
                            bqc_round_success_prob(b, a, 0.0, 1.0)) <= 1e-15;
    }
    c.require(symmetric, "designation-swap symmetry");
    c.detail << " p_s(inf wait)=" << far;
  });

  criterion(8, "minimal-modes orderings on the symmetrized path", 1800.0, [](Check& c) {
    const auto path = load_fiber_path_file(kGrid);
    const int rs[] = {5, 6, 7};
    const double targets[] = {1.0, 10.0};
    std::int64_t n[3][2];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 2; ++j) {
        MinModesConfig cfg;
        cfg.total_length = path.total_length();
        cfg.total_attenuation = path.total_attenuation();
        cfg.num_repeaters = rs[i];
        cfg.target_rate = targets[j];
        cfg.sims = 100;
        n[i][j] = minimal_modes(cfg).num_modes;
        c.detail << " n(r=" << rs[i] << "," << targets[j] << "Hz)=" << n[i][j];
      }
    }
    for (int j = 0; j < 2; ++j) {
      c.require(n[0][j] >= n[1][j] && n[1][j] >= n[2][j], "nonincreasing in r");
    }
    for (int i = 0; i < 3; ++i) c.require(n[i][1] >= n[i][0], "nondecreasing in target");
  });

  criterion(9, "optimizer soundness", 900.0, [](Check& c) {
    // (a) penalty dominance
    const auto bb = load_fiber_path_file(kGrid);
    const PathContext ctx = path_context(bb);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_candidate = [&]() {
      Candidate cand;
      cand.params.coherence_time = value_for_factor(Param::coherence_time, 1.0 + 99.0 * u(rng), ctx);
      cand.params.num_modes = std::max<std::int64_t>(
          1, static_cast<std::int64_t>(value_for_factor(Param::num_modes, 1.0 + 99.0 * u(rng), ctx)));
      cand.params.link_fidelity = value_for_factor(Param::link_fidelity, 1.0 + 99.0 * u(rng), ctx);
      cand.params.detection_prob = value_for_factor(Param::detection_prob, 1.0 + 99.0 * u(rng), ctx);
      cand.params.swap_quality = value_for_factor(Param::swap_quality, 1.0 + 99.0 * u(rng), ctx);
      return cand;
    };
    bool dominance = true;
    for (int i = 0; i < 1000; ++i) {
      const double target = 100.0 * u(rng) + 1e-6;
      const auto unmet = total_cost(random_candidate(), target * u(rng) * 0.9999, target, {}, ctx);
      const auto met = total_cost(random_candidate(), target * (1.0 + u(rng)), target, {}, ctx);
      dominance &= unmet.total_cost > met.total_cost;
    }
    c.require(dominance, "(a) penalty dominance");

    // (b) toy problem: 50 km, one link, 1 Hz SKR
    const FiberPath toy({{"A", "H", 25.0, 5.85}, {"H", "B", 25.0, 5.85}});
    OptimizerConfig cfg;
    cfg.target_rate = 1.0;
    cfg.modes_cap = 1000;
    cfg.rng_seed = 5;
    HardwareOptimizer opt(toy, cfg);
    Candidate hand;
    hand.params.link_fidelity = 0.9;
    const auto hand_eval = opt.evaluate(hand);
    const auto ga = opt.genetic_search();
    const Candidate refined = opt.local_search(ga.best);
    const auto final_eval = opt.evaluate(refined);
    c.detail << " (b) hand_cost=" << hand_eval.cost.total_cost << " ga_cost=" << ga.cost.total_cost
             << " refined_cost=" << final_eval.cost.total_cost;
    c.require(hand_eval.cost.penalty == 0.0, "(b) hand candidate feasible");
    c.require(final_eval.cost.penalty == 0.0, "(b) penalty 0 reached");
    c.require(final_eval.cost.total_cost <= hand_eval.cost.total_cost, "(b) cost <= hand candidate");

    // (c) local search never increases cost
    bool monotone = true;
    for (int i = 0; i < 100; ++i) {
      HardwareOptimizer::Genome g;
      for (double& x : g) x = u(rng);
      const Candidate start = opt.decode(g);
      const double before = opt.evaluate(start).cost.total_cost;
      const double after = opt.evaluate(opt.local_search(start)).cost.total_cost;
      monotone &= after <= before;
    }
    c.require(monotone, "(c) local search monotone over 100 starts");
  });

  criterion(10, "SKR replay of the 7-repeater minimal parameter set", 3600.0, [](Check& c) {
    const auto path = load_fiber_path_file(kGrid);
    SimConfig sim;
    sim.chain = make_configuration(path, {3, 5, 7, 9, 11, 13, 15});
    sim.params = {3.14, 592, 0.987, 0.360, 0.997};

    // Pick the cut-off on one seed, then measure on an independent one.
    double best_cutoff = kInfinity, best_skr = -1.0;
    std::vector<double> grid{kInfinity};
    for (double f = 1.0; f >= 1e-3; f /= std::sqrt(10.0)) grid.push_back(f * sim.params.coherence_time);
    for (double cutoff : grid) {
      sim.cutoff_time = cutoff;
      sim.num_pairs = 500;
      sim.rng_seed = 1001;
      try {
        const double skr = skr_from_records(run_chain(sim)).skr;
        if (skr > best_skr) {
          best_skr = skr;
          best_cutoff = cutoff;
        }
      } catch (const SimulationStalled&) {
      }
    }
    sim.cutoff_time = best_cutoff;
    sim.num_pairs = 4000;
    sim.rng_seed = 2002;
    const auto r = skr_from_records(run_chain(sim));
    const double lo = r.skr - 1.96 * r.skr_stderr;
    const double hi = r.skr + 1.96 * r.skr_stderr;
    c.detail << " cutoff=" << best_cutoff << " s skr=" << r.skr << " Hz 95%CI=[" << lo << ", " << hi
             << "] pairs=" << r.pairs;
    c.require(r.pairs >= 2000, ">= 2000 runs");
    c.require(hi >= 10.0, "10 Hz inside or below the confidence interval");
    c.require(lo >= 8.0, "lower confidence bound >= 8 Hz");
  });

  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
