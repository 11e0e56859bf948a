#include "pls/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pls/errors.hpp"
#include "pls/rng.hpp"

namespace pls {

void UniformEstimator::scores(const PartialAssignment&, std::span<float> out) const {
  std::fill(out.begin(), out.end(), 1.0f);
}

namespace {

struct SearchState {
  explicit SearchState(const PartialAssignment& start)
      : shape(start.shape()),
        n(shape.n()),
        full_mask(n == 64 ? ~0ull : (1ull << n) - 1),
        grid(to_grid(start)),
        row_used(static_cast<std::size_t>(n), 0),
        col_used(static_cast<std::size_t>(n), 0),
        x(start) {
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const int v = grid.at(r, c);
        if (v != 0) {
          row_used[r] |= 1ull << (v - 1);
          col_used[c] |= 1ull << (v - 1);
        }
      }
    }
  }

  std::uint64_t candidates(int r, int c) const {
    return ~(row_used[r] | col_used[c]) & full_mask;
  }

  // Forward checking: every empty cell must keep at least one value.
  bool wipeout() const {
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        if (grid.at(r, c) == 0 && candidates(r, c) == 0) return true;
      }
    }
    return false;
  }

  void assign(int r, int c, int v) {
    grid.set(r, c, v);
    row_used[r] |= 1ull << (v - 1);
    col_used[c] |= 1ull << (v - 1);
    x.set(encode_pair(shape, r, c, v));
  }

  void undo(int r, int c, int v) {
    grid.clear_cell(r, c);
    row_used[r] &= ~(1ull << (v - 1));
    col_used[c] &= ~(1ull << (v - 1));
    x.clear(encode_pair(shape, r, c, v));
  }

  GridShape shape;
  int n;
  std::uint64_t full_mask;
  Grid grid;
  std::vector<std::uint64_t> row_used;
  std::vector<std::uint64_t> col_used;
  PartialAssignment x;  // mirrors grid; queried by the estimator
};

struct Searcher {
  SearchState& state;
  rng::Stream& stream;
  const ProbabilityEstimator& h;
  std::uint64_t node_limit;
  std::uint64_t nodes = 0;
  bool limit_hit = false;
  std::vector<float> score_buffer;

  // Weighted sampling without replacement; weights are consumed in the
  // sampled order. Falls back to equal weights once the remaining total
  // is zero, so zero-score values still get explored (completeness).
  void sample_order(std::vector<int>& values, std::vector<double>& weights) {
    const std::size_t count = values.size();
    std::vector<int> ordered;
    ordered.reserve(count);
    while (ordered.size() < count) {
      const std::size_t left = count - ordered.size();
      double total = 0.0;
      for (std::size_t i = 0; i < left; ++i) total += weights[i];
      if (total <= 0.0) {
        for (std::size_t i = 0; i < left; ++i) weights[i] = 1.0;
        total = static_cast<double>(left);
      }
      const double r = stream.next_unit() * total;
      double cumulative = 0.0;
      std::size_t pick = left - 1;
      for (std::size_t i = 0; i < left; ++i) {
        cumulative += weights[i];
        if (r < cumulative) {
          pick = i;
          break;
        }
      }
      ordered.push_back(values[pick]);
      values.erase(values.begin() + static_cast<std::ptrdiff_t>(pick));
      weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    values = std::move(ordered);
  }

  // Returns true once a full assignment is reached. cell_cursor is the
  // first possibly-empty cell; cells before it are filled on this branch.
  bool dfs(int cell_cursor) {
    const int n = state.n;
    int cell = cell_cursor;
    while (cell < state.shape.cell_count() &&
           state.grid.at(cell / n, cell % n) != 0) {
      ++cell;
    }
    if (cell == state.shape.cell_count()) return true;

    if (state.wipeout()) return false;

    const int r = cell / n;
    const int c = cell % n;
    const std::uint64_t survivors = state.candidates(r, c);

    std::vector<int> values;
    std::vector<double> weights;
    for (int v = 1; v <= n; ++v) {
      if (survivors & (1ull << (v - 1))) values.push_back(v);
    }
    if (values.empty()) return false;

    if (h.is_uniform()) {
      weights.assign(values.size(), 1.0);
    } else {
      score_buffer.resize(static_cast<std::size_t>(state.shape.m()));
      h.scores(state.x, score_buffer);
      weights.resize(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        const float s = score_buffer[static_cast<std::size_t>(
            encode_pair(state.shape, r, c, values[i]))];
        if (!(s >= 0.0f) || !std::isfinite(s)) {
          throw std::invalid_argument("estimator produced a negative or non-finite score");
        }
        weights[i] = static_cast<double>(s);
      }
    }
    sample_order(values, weights);

    for (const int v : values) {
      if (node_limit != 0 && nodes >= node_limit) {
        limit_hit = true;
        return false;
      }
      ++nodes;
      state.assign(r, c, v);
      if (dfs(cell + 1)) return true;
      state.undo(r, c, v);
      if (limit_hit) return false;
    }
    return false;
  }
};

}  // namespace

SolveOutcome solve(const PartialAssignment& x, const SearchConfig& config,
                   const ProbabilityEstimator& h) {
  if (!x.cell_consistent()) {
    throw std::invalid_argument("solve requires a cell-consistent assignment");
  }
  SolveOutcome outcome;
  // A start that already violates a row or column constraint has no
  // completion; report the proof without searching.
  if (!is_latin_consistent(x)) {
    outcome.status = SolveStatus::Infeasible;
    return outcome;
  }

  SearchState state(x);
  rng::Stream stream(config.seed);
  Searcher searcher{state, stream, h, config.node_limit};
  const bool found = searcher.dfs(0);
  outcome.nodes = searcher.nodes;
  if (found) {
    outcome.status = SolveStatus::Solution;
    if (!is_latin_consistent(state.grid) || !state.grid.complete()) {
      throw std::logic_error("search produced an invalid solution");
    }
    outcome.solution = state.grid;
  } else if (searcher.limit_hit) {
    outcome.status = SolveStatus::NodeLimit;
  } else {
    outcome.status = SolveStatus::Infeasible;
  }
  return outcome;
}

Grid generate_solution(GridShape shape, const SearchConfig& config) {
  const UniformEstimator uniform;
  const SolveOutcome outcome = solve(PartialAssignment(shape), config, uniform);
  if (outcome.status == SolveStatus::NodeLimit) {
    throw resource_error("node limit reached while generating a solution");
  }
  if (outcome.status != SolveStatus::Solution) {
    throw std::logic_error("empty square reported infeasible");
  }
  return *outcome.solution;
}

}  // namespace pls
