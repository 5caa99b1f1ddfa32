#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrchain/fibergrid.hpp"
#include "qrchain/hardware.hpp"

namespace qrchain {

inline constexpr double kFiberLightSpeed = 200000.0;  // km/s
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Success probability of one attempt window on a link: at least one of the n modes
/// heralds, each with p_el = p_det * 10^(-A/10).
inline double link_success_prob(double attenuation_db, const HardwareParams& hw) {
  if (!(attenuation_db >= 0.0)) throw std::invalid_argument("attenuation must be >= 0");
  const double p_el = hw.detection_prob * std::pow(10.0, -attenuation_db / 10.0);
  if (p_el >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(hw.num_modes) * std::log1p(-p_el));
}

inline double attempt_duration(double length_km, double light_speed = kFiberLightSpeed) {
  if (!(length_km > 0.0)) throw std::invalid_argument("link length must be > 0");
  return length_km / light_speed;
}

/// Two-qubit depolarizing with parameter s_q followed by a perfect Bell measurement.
inline double swap_werner(double w1, double w2, double swap_quality) {
  return swap_quality * w1 * w2;
}

/// Memory decoherence of one stored qubit.
inline double decohere_werner(double w, double stored_duration, double coherence_time) {
  if (!(stored_duration >= 0.0)) throw std::invalid_argument("stored duration must be >= 0");
  return w * std::exp(-stored_duration / coherence_time);
}

/// Closed form of an end-to-end Werner parameter: product of link parameters, one
/// swap-quality factor per swap and one decoherence factor per stored repeater qubit.
inline double chain_werner(const std::vector<double>& link_werners, double swap_quality,
                           const std::vector<double>& storage_durations,
                           double coherence_time) {
  double w = 1.0;
  for (double x : link_werners) w *= x;
  for (std::size_t i = 1; i < link_werners.size(); ++i) w *= swap_quality;
  for (double t : storage_durations) w = decohere_werner(w, t, coherence_time);
  return w;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

struct SimConfig {
  ChainConfiguration chain;
  HardwareParams params = kBaseline;
  double cutoff_time = kInfinity;  // seconds
  std::size_t num_pairs = 1;
  std::uint64_t rng_seed = 0;
  double light_speed = kFiberLightSpeed;
  /// Events allowed per delivered pair before the run is declared stalled.
  std::uint64_t max_events_per_pair = 20'000'000;
};

struct PairRecord {
  double delivery_time = 0.0;        // both end nodes know the pair exists
  double generation_duration = 0.0;  // since previous delivery (or start)
  double werner = 0.0;
};

struct RunStats {
  std::uint64_t events = 0;
  std::uint64_t link_successes = 0;
  std::uint64_t swaps = 0;
  std::uint64_t cutoffs = 0;
  std::uint64_t remote_discards = 0;
  double max_storage = 0.0;  // longest time any repeater qubit sat in memory
};

class SimulationStalled : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Swap-asap repeater chain driven by a discrete-event loop.
///
/// Node k in [0, N] sits at node_positions_km[k]; link i joins nodes i and i+1. Each node
/// has a left and a right memory slot. A link attempts only while both of its slots are
/// free; a repeater swaps as soon as both of its slots hold entanglement. Repeater qubits
/// decohere while stored and are reset by their local cut-off timer; the partner is reset
/// when the discard notice reaches it. End-node qubits are measured on arrival and do not
/// decohere, but the end-node slot stays reserved until the pair is delivered. After every
/// delivery the chain is reset and the next pair is generated from scratch.
class ChainSimulator {
 public:
  explicit ChainSimulator(SimConfig config) : cfg_(std::move(config)) {
    cfg_.params.validate();
    if (cfg_.num_pairs < 1) throw std::invalid_argument("num_pairs must be >= 1");
    if (!(cfg_.cutoff_time > 0.0)) throw std::invalid_argument("cutoff_time must be > 0");
    if (!(cfg_.light_speed > 0.0)) throw std::invalid_argument("light_speed must be > 0");
    const auto& links = cfg_.chain.links;
    if (links.empty()) throw std::invalid_argument("chain has no links");
    if (cfg_.chain.node_positions_km.size() != links.size() + 1) {
      throw std::invalid_argument("chain node positions do not match its links");
    }
    for (std::size_t i = 0; i < links.size(); ++i) {
      const double p = link_success_prob(links[i].attenuation_db, cfg_.params);
      if (!(p > 0.0)) {
        throw std::invalid_argument("link " + std::to_string(i) +
                                    " has zero success probability; simulation cannot end");
      }
      success_prob_.push_back(p);
      attempt_time_.push_back(attempt_duration(links[i].length_km, cfg_.light_speed));
    }
    const double first = cfg_.chain.node_positions_km.front();
    const double last = cfg_.chain.node_positions_km.back();
    for (double x : cfg_.chain.node_positions_km) {
      outcome_delay_.push_back(std::max(x - first, last - x) / cfg_.light_speed);
    }
  }

  const SimConfig& config() const { return cfg_; }
  const RunStats& stats() const { return stats_; }

  std::vector<PairRecord> run() {
    std::vector<PairRecord> records;
    records.reserve(cfg_.num_pairs);
    double clock = 0.0;
    for (std::size_t g = 0; g < cfg_.num_pairs; ++g) {
      const auto [duration, werner] = run_generation(g);
      clock += duration;
      records.push_back({clock, duration, werner});
    }
    return records;
  }

  /// Generates one end-to-end pair from an empty chain. Returns (duration, werner),
  /// with time measured from the start of this generation.
  std::pair<double, double> run_generation(std::size_t generation) {
    reset(generation);
    const std::uint64_t budget = cfg_.max_events_per_pair;
    std::uint64_t processed = 0;
    while (!queue_.empty()) {
      const Event ev = queue_.top();
      queue_.pop();
      ++stats_.events;
      if (++processed > budget) {
        throw SimulationStalled("no end-to-end pair after " + std::to_string(budget) +
                                " events (cut-off too short?)");
      }
      switch (ev.kind) {
        case EventKind::link_success: on_link_success(ev); break;
        case EventKind::cutoff_expired: on_cutoff(ev); break;
        case EventKind::discard_arrival: on_discard(ev); break;
      }
      if (delivered_) return {delivery_time_, delivery_werner_};
    }
    throw std::logic_error("event queue drained without delivery");
  }

 private:
  enum class EventKind : std::uint8_t { link_success, cutoff_expired, discard_arrival };

  struct Event {
    double time;
    std::uint64_t seq;
    EventKind kind;
    int target;      // link index, slot index or node index depending on kind
    int pair;        // discard: pair being chased
    std::uint32_t version;
    double origin_pos;  // discard: where the notice was sent from
    double origin_time;

    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      return seq > o.seq;
    }
  };

  struct Slot {
    int pair = -1;  // -1 when free
    std::uint32_t version = 0;
  };

  struct Pair {
    std::array<int, 2> end{};
    std::array<bool, 2> alive{true, true};
    std::array<double, 2> created{};  // storage start of each end qubit
    double werner = 1.0;              // excludes decoherence still pending at the ends
    double informed = 0.0;            // when both end nodes have all swap outcomes
    int merged_into = -1;
    int merged_at = -1;
  };

  static constexpr int kLeft = 0;
  static constexpr int kRight = 1;

  int num_links() const { return static_cast<int>(cfg_.chain.links.size()); }
  int last_node() const { return num_links(); }
  bool is_repeater(int node) const { return node > 0 && node < last_node(); }
  static int slot_index(int node, int side) { return 2 * node + side; }
  double pos(int node) const { return cfg_.chain.node_positions_km[static_cast<std::size_t>(node)]; }

  void reset(std::size_t generation) {
    queue_ = {};
    pairs_.clear();
    slots_.assign(static_cast<std::size_t>(2 * (num_links() + 1)), Slot{});
    attempting_.assign(static_cast<std::size_t>(num_links()), false);
    link_rng_.clear();
    for (int i = 0; i < num_links(); ++i) {
      link_rng_.emplace_back(derive_seed(cfg_.rng_seed, generation, static_cast<std::uint64_t>(i)));
    }
    delivered_ = false;
    for (int i = 0; i < num_links(); ++i) try_start_link(i, 0.0);
  }

  void push(Event ev) {
    ev.seq = next_seq_++;
    queue_.push(ev);
  }

  // Number of attempt windows until the first success, by inverse transform.
  double sample_attempts(int link) {
    const double p = success_prob_[static_cast<std::size_t>(link)];
    if (p >= 1.0) return 1.0;
    auto& rng = link_rng_[static_cast<std::size_t>(link)];
    const double u = 1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;  // (0, 1]
    return 1.0 + std::floor(std::log(u) / std::log1p(-p));
  }

  void try_start_link(int link, double now) {
    if (link < 0 || link >= num_links()) return;
    if (attempting_[static_cast<std::size_t>(link)]) return;
    if (slots_[slot_index(link, kRight)].pair >= 0) return;
    if (slots_[slot_index(link + 1, kLeft)].pair >= 0) return;
    attempting_[static_cast<std::size_t>(link)] = true;
    const double done = now + sample_attempts(link) * attempt_time_[static_cast<std::size_t>(link)];
    push({done, 0, EventKind::link_success, link, -1, 0, 0.0, 0.0});
  }

  void occupy(int node, int side, int pair, double now) {
    Slot& s = slots_[slot_index(node, side)];
    s.pair = pair;
    ++s.version;
    if (is_repeater(node) && std::isfinite(cfg_.cutoff_time)) {
      push({now + cfg_.cutoff_time, 0, EventKind::cutoff_expired, slot_index(node, side), -1,
            s.version, 0.0, 0.0});
    }
  }

  void release(int node, int side) {
    Slot& s = slots_[slot_index(node, side)];
    s.pair = -1;
    ++s.version;
  }

  void on_link_success(const Event& ev) {
    const int link = ev.target;
    const double now = ev.time;
    attempting_[static_cast<std::size_t>(link)] = false;
    ++stats_.link_successes;

    Pair p;
    p.end = {link, link + 1};
    p.created = {now, now};
    p.werner = cfg_.params.link_werner();
    p.informed = now;
    const int id = static_cast<int>(pairs_.size());
    pairs_.push_back(p);
    occupy(link, kRight, id, now);
    occupy(link + 1, kLeft, id, now);

    if (num_links() == 1) {
      deliver(id, now);
      return;
    }
    if (is_repeater(link) && slots_[slot_index(link, kLeft)].pair >= 0) swap(link, now);
    if (delivered_) return;
    if (is_repeater(link + 1) && slots_[slot_index(link + 1, kRight)].pair >= 0) {
      swap(link + 1, now);
    }
  }

  void swap(int node, double now) {
    const int a_id = slots_[slot_index(node, kLeft)].pair;
    const int b_id = slots_[slot_index(node, kRight)].pair;
    const Pair a = pairs_[static_cast<std::size_t>(a_id)];
    const Pair b = pairs_[static_cast<std::size_t>(b_id)];
    const double stored_a = now - a.created[1];
    const double stored_b = now - b.created[0];
    stats_.max_storage = std::max({stats_.max_storage, stored_a, stored_b});
    ++stats_.swaps;

    const double wa = decohere_werner(a.werner, stored_a, cfg_.params.coherence_time);
    const double wb = decohere_werner(b.werner, stored_b, cfg_.params.coherence_time);

    Pair c;
    c.end = {a.end[0], b.end[1]};
    c.alive = {a.alive[0], b.alive[1]};
    c.created = {a.created[0], b.created[1]};
    c.werner = swap_werner(wa, wb, cfg_.params.swap_quality);
    c.informed = std::max({a.informed, b.informed, now + outcome_delay_[static_cast<std::size_t>(node)]});
    const int c_id = static_cast<int>(pairs_.size());
    pairs_.push_back(c);
    for (int id : {a_id, b_id}) {
      pairs_[static_cast<std::size_t>(id)].merged_into = c_id;
      pairs_[static_cast<std::size_t>(id)].merged_at = node;
    }
    // Outer qubits keep their slots and timers; they now belong to the new pair.
    if (c.alive[0]) slots_[slot_index(c.end[0], kRight)].pair = c_id;
    if (c.alive[1]) slots_[slot_index(c.end[1], kLeft)].pair = c_id;

    release(node, kLeft);
    release(node, kRight);

    if (c.end[0] == 0 && c.end[1] == last_node() && c.alive[0] && c.alive[1]) {
      deliver(c_id, now);
      return;
    }
    try_start_link(node - 1, now);
    try_start_link(node, now);
  }

  void on_cutoff(const Event& ev) {
    Slot& s = slots_[static_cast<std::size_t>(ev.target)];
    if (s.pair < 0 || s.version != ev.version) return;
    const int node = ev.target / 2;
    const int side = ev.target % 2;
    const int id = s.pair;
    Pair& p = pairs_[static_cast<std::size_t>(id)];
    // A qubit in a node's left slot is the right-hand end of its pair.
    const int which = side == kLeft ? 1 : 0;
    p.alive[which] = false;
    stats_.max_storage = std::max(stats_.max_storage, ev.time - p.created[which]);
    ++stats_.cutoffs;
    release(node, side);
    const int other = 1 - which;
    if (p.alive[other]) {
      const int target = p.end[other];
      push({ev.time + std::abs(pos(target) - pos(node)) / cfg_.light_speed, 0,
            EventKind::discard_arrival, target, id, 0, pos(node), ev.time});
    }
    try_start_link(side == kLeft ? node - 1 : node, ev.time);
  }

  // The notice chases the pair: if the target already swapped it away, it travels on
  // to the far end of the merged pair.
  void on_discard(const Event& ev) {
    const int node = ev.target;
    Pair& p = pairs_[static_cast<std::size_t>(ev.pair)];
    const int which = p.end[1] == node ? 1 : 0;
    if (p.merged_at == node) {
      const int c_id = p.merged_into;
      const Pair& c = pairs_[static_cast<std::size_t>(c_id)];
      if (c.alive[which]) {
        const int next = c.end[which];
        push({ev.origin_time + std::abs(pos(next) - ev.origin_pos) / cfg_.light_speed, 0,
              EventKind::discard_arrival, next, c_id, 0, ev.origin_pos, ev.origin_time});
      }
      return;
    }
    const int side = which == 1 ? kLeft : kRight;
    if (!p.alive[which] || slots_[slot_index(node, side)].pair != ev.pair) return;
    p.alive[which] = false;
    ++stats_.remote_discards;
    release(node, side);
    try_start_link(side == kLeft ? node - 1 : node, ev.time);
  }

  void deliver(int id, double now) {
    const Pair& p = pairs_[static_cast<std::size_t>(id)];
    delivered_ = true;
    delivery_time_ = std::max(now, p.informed);
    delivery_werner_ = p.werner;
  }

  SimConfig cfg_;
  std::vector<double> success_prob_;
  std::vector<double> attempt_time_;
  std::vector<double> outcome_delay_;  // per node: until both end nodes hear a swap outcome

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  std::vector<Slot> slots_;
  std::vector<Pair> pairs_;
  std::vector<bool> attempting_;
  std::vector<std::mt19937_64> link_rng_;
  bool delivered_ = false;
  double delivery_time_ = 0.0;
  double delivery_werner_ = 0.0;
  RunStats stats_;
};

inline std::vector<PairRecord> run_chain(const SimConfig& config) {
  ChainSimulator sim(config);
  return sim.run();
}

}  // namespace qrchain
