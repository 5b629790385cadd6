#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "mrg/engine.hpp"
#include "mrg/fixed.hpp"
#include "mrg/grid.hpp"
#include "mrg/record.hpp"

namespace mrg {

struct ReallocStats {
  int moved = 0;       // donor cells emptied into a recipient
  int unresolved = 0;  // failing cells no strategy could help
};

namespace detail {

inline CellId ancestor_of(const GridSpec& spec, CellId id, int level) {
  while (id.level < level) id = spec.parent_of(id);
  return id;
}

}  // namespace detail

/**
 * Sibling-block reallocation: within each block of one coarser level,
 * failing cells donate their entire statistics to a single recipient —
 * the passing sibling with the largest value, or the largest-value
 * sibling if none passes. Donors become empty and disappear. Further
 * passes repeat the step over ever-larger blocks for cells that still
 * fail, without ever changing cell geometry.
 */
inline ReallocStats realloc_blocks(std::map<CellId, CellAcc>& cells,
                                   const GridSpec& spec,
                                   const Evaluator& evaluate, int passes = 1) {
  ReallocStats stats;
  if (cells.empty()) return stats;
  const int base_level = cells.begin()->first.level;

  for (int pass = 1; pass <= passes; ++pass) {
    const int group_level = base_level + pass;
    if (group_level >= spec.levels()) break;

    std::map<CellId, std::vector<CellId>> groups;
    for (const auto& [id, acc] : cells) {
      groups[detail::ancestor_of(spec, id, group_level)].push_back(id);
    }

    for (const auto& [block, members] : groups) {
      std::vector<CellId> failing;
      for (const CellId& id : members) {
        if (evaluate(cells.at(id)).failed()) failing.push_back(id);
      }
      if (failing.empty()) continue;

      auto better = [&cells](const CellId& a, const CellId& b) {
        const Fixed va = detail::share_value(cells.at(a));
        const Fixed vb = detail::share_value(cells.at(b));
        if (va != vb) return va > vb;
        return a < b;
      };
      CellId recipient = members.front();
      bool have_passing = false;
      for (const CellId& id : members) {
        const bool passes_rules =
            std::find(failing.begin(), failing.end(), id) == failing.end();
        if (passes_rules && !have_passing) {
          recipient = id;
          have_passing = true;
        } else if (passes_rules == have_passing && better(id, recipient)) {
          recipient = id;
        }
      }

      for (const CellId& donor : failing) {
        if (donor == recipient) continue;
        cells.at(recipient).merge(cells.at(donor));
        cells.erase(donor);
        ++stats.moved;
      }
    }
  }

  for (const auto& [id, acc] : cells) {
    if (evaluate(acc).failed()) ++stats.unresolved;
  }
  return stats;
}

// Modal region label of each populated cell's records; ties go to the
// lexicographically smallest label.
inline std::map<CellId, std::uint32_t> cell_regions(const Dataset& d,
                                                    const GridSpec& spec,
                                                    int level) {
  std::map<CellId, std::map<std::uint32_t, std::int64_t>> counts;
  for (const Record& r : d.records) {
    ++counts[spec.cell_of(r.xy, level)][r.region];
  }
  std::map<CellId, std::uint32_t> out;
  for (const auto& [id, per_region] : counts) {
    std::uint32_t best = per_region.begin()->first;
    std::int64_t best_n = per_region.begin()->second;
    for (const auto& [region, n] : per_region) {
      if (n > best_n ||
          (n == best_n && d.regions[region] < d.regions[best])) {
        best = region;
        best_n = n;
      }
    }
    out.emplace(id, best);
  }
  return out;
}

/**
 * Random-neighbor reallocation: each failing cell donates its statistics
 * to a uniformly chosen populated cell of the same region, searching
 * Chebyshev rings of growing radius. Cells with no eligible neighbor
 * within max_radius stay as they are and will be suppressed downstream.
 */
inline ReallocStats realloc_neighbor(std::map<CellId, CellAcc>& cells,
                                     std::map<CellId, std::uint32_t>& regions,
                                     const Evaluator& evaluate,
                                     std::uint64_t seed, int max_radius) {
  ReallocStats stats;
  std::mt19937_64 rng(seed);

  std::vector<CellId> failing;
  for (const auto& [id, acc] : cells) {
    if (evaluate(acc).failed()) failing.push_back(id);
  }

  for (const CellId& donor : failing) {
    auto donor_it = cells.find(donor);
    if (donor_it == cells.end()) continue;          // already absorbed
    if (!evaluate(donor_it->second).failed()) continue;  // healed by a move

    const std::uint32_t region = regions.at(donor);
    bool placed = false;
    for (int radius = 1; radius <= max_radius && !placed; ++radius) {
      std::vector<CellId> ring;
      for (std::int64_t dc = -radius; dc <= radius; ++dc) {
        for (std::int64_t dr = -radius; dr <= radius; ++dr) {
          const std::int64_t chebyshev =
              std::max(dc < 0 ? -dc : dc, dr < 0 ? -dr : dr);
          if (chebyshev != radius) continue;
          const CellId cand{donor.level, donor.col + dc, donor.row + dr};
          const auto it = cells.find(cand);
          if (it == cells.end()) continue;
          if (regions.at(cand) != region) continue;
          ring.push_back(cand);
        }
      }
      if (ring.empty()) continue;
      std::sort(ring.begin(), ring.end());
      std::uniform_int_distribution<std::size_t> pick(0, ring.size() - 1);
      const CellId recipient = ring[pick(rng)];
      cells.at(recipient).merge(donor_it->second);
      cells.erase(donor_it);
      regions.erase(donor);
      ++stats.moved;
      placed = true;
    }
    if (!placed) ++stats.unresolved;
  }
  return stats;
}

}  // namespace mrg
