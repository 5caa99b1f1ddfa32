#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrchain/hardware.hpp"

namespace qrchain {

struct FiberSegment {
  std::string name_a;
  std::string name_b;
  double length_km = 0.0;
  double attenuation_db = 0.0;
};

/// Average dB/km of the Bonn-Berlin path (214.7 dB over 917.1 km), used when a
/// segment line omits its attenuation.
inline constexpr double kDefaultAttenuationPerKm = 214.7 / 917.1;

/// An ordered chain of fiber segments. Junctions between segments are the sites
/// where repeaters or heralding stations may be installed.
class FiberPath {
 public:
  FiberPath() = default;

  explicit FiberPath(std::vector<FiberSegment> segments, bool check_attenuation_band = true)
      : segments_(std::move(segments)) {
    if (segments_.empty()) throw std::invalid_argument("fiber path has no segments");
    positions_.reserve(segments_.size() + 1);
    positions_.push_back(0.0);
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& s = segments_[i];
      if (!(s.length_km > 0.0)) {
        throw std::invalid_argument("segment " + std::to_string(i + 1) + " (" + s.name_a + "-" +
                                    s.name_b + ") has non-positive length");
      }
      if (!(s.attenuation_db >= 0.0)) {
        throw std::invalid_argument("segment " + std::to_string(i + 1) +
                                    " has negative attenuation");
      }
      if (check_attenuation_band) {
        const double per_km = s.attenuation_db / s.length_km;
        if (per_km <= 0.1 || per_km >= 0.5) {
          throw std::invalid_argument("segment " + std::to_string(i + 1) + " (" + s.name_a +
                                      "-" + s.name_b + ") attenuation " +
                                      std::to_string(per_km) + " dB/km outside (0.1, 0.5)");
        }
      }
      if (i > 0 && !s.name_a.empty() && !segments_[i - 1].name_b.empty() &&
          s.name_a != segments_[i - 1].name_b) {
        throw std::invalid_argument("segment " + std::to_string(i + 1) + " starts at '" +
                                    s.name_a + "' but previous segment ends at '" +
                                    segments_[i - 1].name_b + "'");
      }
      total_length_ += s.length_km;
      total_attenuation_ += s.attenuation_db;
      positions_.push_back(total_length_);
    }
  }

  const std::vector<FiberSegment>& segments() const { return segments_; }
  std::size_t num_segments() const { return segments_.size(); }
  /// Number of junctions strictly between the two end nodes.
  std::size_t num_sites() const { return segments_.empty() ? 0 : segments_.size() - 1; }
  double total_length() const { return total_length_; }
  double total_attenuation() const { return total_attenuation_; }
  /// Fiber distance from the start of the path to site `i` (0 = start, num_segments() = end).
  double position(std::size_t i) const { return positions_.at(i); }

  std::string site_name(std::size_t i) const {
    if (i == 0) return segments_.front().name_a;
    return segments_.at(i - 1).name_b;
  }

  /// Sum of length and attenuation over segments [from_site, to_site).
  std::pair<double, double> span(std::size_t from_site, std::size_t to_site) const {
    double len = 0.0, att = 0.0;
    for (std::size_t s = from_site; s < to_site; ++s) {
      len += segments_.at(s).length_km;
      att += segments_.at(s).attenuation_db;
    }
    return {len, att};
  }

 private:
  std::vector<FiberSegment> segments_;
  std::vector<double> positions_;
  double total_length_ = 0.0;
  double total_attenuation_ = 0.0;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& field, std::size_t line_no, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": cannot parse " + what +
                                " '" + field + "'");
  }
}

}  // namespace detail

/// Reads `name_a,name_b,length_km[,attenuation_db]` lines; `#` starts a comment line.
inline FiberPath load_fiber_path(std::istream& in, bool check_attenuation_band = true) {
  std::vector<FiberSegment> segments;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(detail::trim(f));
    if (fields.size() < 3 || fields.size() > 4) {
      throw std::invalid_argument("line " + std::to_string(line_no) +
                                  ": expected name_a,name_b,length_km[,attenuation_db]");
    }
    FiberSegment seg;
    seg.name_a = fields[0];
    seg.name_b = fields[1];
    seg.length_km = detail::parse_double(fields[2], line_no, "length");
    seg.attenuation_db = (fields.size() == 4 && !fields[3].empty())
                             ? detail::parse_double(fields[3], line_no, "attenuation")
                             : seg.length_km * kDefaultAttenuationPerKm;
    segments.push_back(std::move(seg));
  }
  if (segments.empty()) throw std::invalid_argument("fiber path file contains no segments");
  return FiberPath(std::move(segments), check_attenuation_band);
}

inline FiberPath load_fiber_path_file(const std::string& filename,
                                      bool check_attenuation_band = true) {
  std::ifstream in(filename);
  if (!in) throw std::runtime_error("cannot open fiber path file '" + filename + "'");
  return load_fiber_path(in, check_attenuation_band);
}

/// Equidistant path with `num_repeaters + 1` identical elementary links, each split
/// into two equal segments so that a heralding site sits at its midpoint.
inline FiberPath symmetrized_path(double total_length, double total_attenuation,
                                  int num_repeaters) {
  if (num_repeaters < 0) throw std::invalid_argument("num_repeaters must be >= 0");
  if (!(total_length > 0.0)) throw std::invalid_argument("total_length must be > 0");
  if (!(total_attenuation >= 0.0)) throw std::invalid_argument("total_attenuation must be >= 0");
  const int links = num_repeaters + 1;
  const double half_len = total_length / links / 2.0;
  const double half_att = total_attenuation / links / 2.0;
  std::vector<FiberSegment> segs;
  auto node = [links](int k) {
    if (k == 0) return std::string("A");
    if (k == 2 * links) return std::string("B");
    return (k % 2 == 0 ? "R" : "H") + std::to_string(k);
  };
  for (int k = 0; k < 2 * links; ++k) {
    segs.push_back({node(k), node(k + 1), half_len, half_att});
  }
  return FiberPath(std::move(segs), false);
}

struct ElementaryLink {
  double length_km = 0.0;
  double attenuation_db = 0.0;
};

/// A choice of repeater sites on a path together with the links it induces.
struct ChainConfiguration {
  std::vector<int> repeater_sites;  // strictly increasing, in [1, num_sites]
  std::vector<ElementaryLink> links;
  std::vector<double> node_positions_km;  // end node, repeaters..., end node
  double asymmetry = 0.0;

  int num_repeaters() const { return static_cast<int>(repeater_sites.size()); }
};

/// (1/r) * sum over repeaters of |L_left - L_right| / (L_left + L_right).
inline double chain_asymmetry(const std::vector<ElementaryLink>& links) {
  if (links.size() < 2) throw std::invalid_argument("chain asymmetry needs at least one repeater");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < links.size(); ++i) {
    const double l = links[i].length_km;
    const double r = links[i + 1].length_km;
    sum += std::abs(l - r) / (l + r);
  }
  return sum / static_cast<double>(links.size() - 1);
}

inline double chain_asymmetry(const ChainConfiguration& config) {
  return chain_asymmetry(config.links);
}

/// Builds the configuration for the given repeater sites. Every elementary link must
/// span at least two segments so that a heralding station fits in between.
inline ChainConfiguration make_configuration(const FiberPath& path, std::vector<int> sites) {
  const int n_sites = static_cast<int>(path.num_sites());
  std::vector<int> nodes;
  nodes.reserve(sites.size() + 2);
  nodes.push_back(0);
  for (int s : sites) {
    if (s < 1 || s > n_sites) {
      throw std::invalid_argument("repeater site " + std::to_string(s) + " outside [1, " +
                                  std::to_string(n_sites) + "]");
    }
    nodes.push_back(s);
  }
  nodes.push_back(n_sites + 1);
  ChainConfiguration c;
  c.repeater_sites = std::move(sites);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    if (nodes[i + 1] - nodes[i] < 2) {
      throw std::invalid_argument("no room for a heralding station between sites " +
                                  std::to_string(nodes[i]) + " and " +
                                  std::to_string(nodes[i + 1]));
    }
    auto [len, att] = path.span(nodes[i], nodes[i + 1]);
    c.links.push_back({len, att});
  }
  for (int n : nodes) c.node_positions_km.push_back(path.position(n));
  c.asymmetry = c.links.size() >= 2 ? chain_asymmetry(c.links) : 0.0;
  return c;
}

/// Direct end-to-end link over the whole path; needs no heralding-site check.
inline ChainConfiguration direct_configuration(const FiberPath& path) {
  ChainConfiguration c;
  c.links.push_back({path.total_length(), path.total_attenuation()});
  c.node_positions_km = {0.0, path.total_length()};
  return c;
}

/// Chain built straight from a list of elementary links (no underlying segment grid).
inline ChainConfiguration configuration_from_links(std::vector<ElementaryLink> links) {
  if (links.empty()) throw std::invalid_argument("chain needs at least one link");
  ChainConfiguration c;
  c.node_positions_km.push_back(0.0);
  for (const auto& l : links) {
    if (!(l.length_km > 0.0)) throw std::invalid_argument("link length must be > 0");
    c.node_positions_km.push_back(c.node_positions_km.back() + l.length_km);
  }
  for (std::size_t i = 1; i < links.size(); ++i) c.repeater_sites.push_back(static_cast<int>(i));
  c.links = std::move(links);
  c.asymmetry = c.links.size() >= 2 ? chain_asymmetry(c.links) : 0.0;
  return c;
}

/// Largest r for which a gap-respecting placement exists on `num_sites` sites.
inline int max_feasible_repeaters(std::size_t num_sites) {
  if (num_sites < 3) return 0;
  return static_cast<int>((num_sites - 1) / 2);
}

/// All placements grouped by repeater count, each group ordered from most symmetric to
/// most asymmetric (ties broken by site indices).
struct PlacementTable {
  std::vector<std::vector<ChainConfiguration>> by_repeaters;  // index r; [0] stays empty
  bool truncated = false;  // requested max exceeded what the path can hold

  int max_repeaters() const { return static_cast<int>(by_repeaters.size()) - 1; }

  std::size_t count(int r) const {
    if (r < 0 || r > max_repeaters()) return 0;
    return by_repeaters[static_cast<std::size_t>(r)].size();
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& g : by_repeaters) n += g.size();
    return n;
  }
};

inline PlacementTable enumerate_placements(const FiberPath& path, int max_repeaters) {
  if (max_repeaters < 0) throw std::invalid_argument("max_repeaters must be >= 0");
  const int n_sites = static_cast<int>(path.num_sites());
  const int feasible = max_feasible_repeaters(path.num_sites());
  PlacementTable table;
  table.truncated = max_repeaters > feasible;
  const int r_max = std::min(max_repeaters, feasible);
  table.by_repeaters.resize(static_cast<std::size_t>(r_max) + 1);

  // Depth-first over sites: first repeater at >= 2, each next one >= previous + 2,
  // and the last one <= n_sites - 1.
  std::vector<int> current;
  auto extend = [&](auto&& self, int next_min) -> void {
    const int r = static_cast<int>(current.size());
    if (r >= 1) table.by_repeaters[static_cast<std::size_t>(r)].push_back(
        make_configuration(path, current));
    if (r == r_max) return;
    for (int s = next_min; s <= n_sites - 1; ++s) {
      current.push_back(s);
      self(self, s + 2);
      current.pop_back();
    }
  };
  extend(extend, 2);

  for (auto& group : table.by_repeaters) {
    std::stable_sort(group.begin(), group.end(), [](const auto& x, const auto& y) {
      if (x.asymmetry != y.asymmetry) return x.asymmetry < y.asymmetry;
      return x.repeater_sites < y.repeater_sites;
    });
  }
  return table;
}

/// Rank n = round(a * (m_r - 1)), rounding halves away from zero.
inline std::size_t placement_rank(std::size_t m_r, double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("a must be in [0, 1]");
  if (m_r == 0) throw std::invalid_argument("no placements to choose from");
  return static_cast<std::size_t>(std::lround(a * static_cast<double>(m_r - 1)));
}

inline const ChainConfiguration& select_configuration(const PlacementTable& table, int r,
                                                      double a) {
  if (r < 1 || r > table.max_repeaters()) {
    throw std::invalid_argument("no placements with " + std::to_string(r) + " repeaters");
  }
  const auto& group = table.by_repeaters[static_cast<std::size_t>(r)];
  if (group.empty()) {
    throw std::invalid_argument("no placements with " + std::to_string(r) + " repeaters");
  }
  return group[placement_rank(group.size(), a)];
}

/// Survival probability over an elementary link made of two average segments:
/// 10^(-abar/10) with abar = (2/N) * sum of segment attenuations in dB.
inline double baseline_survival_prob(const FiberPath& path) {
  const double n = static_cast<double>(path.num_segments());
  if (n == 0) throw std::invalid_argument("empty path");
  const double abar = 2.0 / n * path.total_attenuation();
  return std::pow(10.0, -abar / 10.0);
}

inline PathContext path_context(const FiberPath& path) {
  return PathContext{baseline_survival_prob(path)};
}

}  // namespace qrchain
