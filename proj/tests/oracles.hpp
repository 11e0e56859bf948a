// Test-only oracles, deliberately independent of the library's solver and
// propagator: plain exhaustive backtracking with direct row/column scans.
#pragma once

#include <vector>

#include "pls/grid.hpp"

namespace oracles {

inline bool placement_ok(const pls::Grid& g, int row, int col, int value) {
  const int n = g.shape().n();
  for (int i = 0; i < n; ++i) {
    if (g.at(row, i) == value || g.at(i, col) == value) return false;
  }
  return true;
}

inline bool grid_valid(const pls::Grid& g) {
  const int n = g.shape().n();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int v = g.at(r, c);
      if (v == 0) continue;
      for (int i = 0; i < n; ++i) {
        if (i != c && g.at(r, i) == v) return false;
        if (i != r && g.at(i, c) == v) return false;
      }
    }
  }
  return true;
}

inline bool complete_from(pls::Grid& g, int cell) {
  const int n = g.shape().n();
  if (cell == n * n) return true;
  const int r = cell / n;
  const int c = cell % n;
  if (g.at(r, c) != 0) return complete_from(g, cell + 1);
  for (int v = 1; v <= n; ++v) {
    if (!placement_ok(g, r, c, v)) continue;
    g.set(r, c, v);
    if (complete_from(g, cell + 1)) return true;
    g.clear_cell(r, c);
  }
  return false;
}

// Whether the partial square extends to a full Latin square.
inline bool completable(const pls::Grid& partial) {
  if (!grid_valid(partial)) return false;
  pls::Grid work = partial;
  return complete_from(work, 0);
}

inline bool completable(const pls::PartialAssignment& x) {
  if (!x.cell_consistent()) return false;
  return completable(pls::to_grid(x));
}

inline void enumerate_from(pls::Grid& g, int cell, std::vector<pls::Grid>& out) {
  const int n = g.shape().n();
  if (cell == n * n) {
    out.push_back(g);
    return;
  }
  const int r = cell / n;
  const int c = cell % n;
  for (int v = 1; v <= n; ++v) {
    if (!placement_ok(g, r, c, v)) continue;
    g.set(r, c, v);
    enumerate_from(g, cell + 1, out);
    g.clear_cell(r, c);
  }
}

// Every Latin square of order n, in lexicographic cell order.
inline std::vector<pls::Grid> all_latin_squares(int n) {
  pls::Grid g{pls::GridShape(n)};
  std::vector<pls::Grid> out;
  enumerate_from(g, 0, out);
  return out;
}

}  // namespace oracles
