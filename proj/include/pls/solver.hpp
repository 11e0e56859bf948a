#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "pls/grid.hpp"

namespace pls {

// Scoring interface for variable-value pairs, the search's value-selection
// weight source. Implementations must write a nonnegative finite score for
// every pair of x's shape and must be safe for concurrent calls.
class ProbabilityEstimator {
 public:
  virtual ~ProbabilityEstimator() = default;

  virtual void scores(const PartialAssignment& x, std::span<float> out) const = 0;

  // Uniform estimators let the search skip the score query entirely.
  virtual bool is_uniform() const { return false; }
};

// Equal positive score for every pair.
class UniformEstimator final : public ProbabilityEstimator {
 public:
  void scores(const PartialAssignment& x, std::span<float> out) const override;
  bool is_uniform() const override { return true; }
};

enum class SolveStatus { Solution, Infeasible, NodeLimit };

struct SolveOutcome {
  SolveStatus status = SolveStatus::Infeasible;
  std::optional<Grid> solution;  // set iff status == Solution
  std::uint64_t nodes = 0;       // value assignments explored
};

struct SearchConfig {
  std::uint64_t seed = 0;
  std::uint64_t node_limit = 0;  // 0 = unlimited
};

// Complete randomized depth-first search with forward-checking propagation
// over the full row+column constraints. Branches on the first unassigned
// cell in row-major order; value order is repeated weighted sampling
// without replacement with weights h(x') restricted to surviving values.
// Infeasible is a proof: the whole space below x was exhausted.
// Requires x cell-consistent (throws std::invalid_argument otherwise).
SolveOutcome solve(const PartialAssignment& x, const SearchConfig& config,
                   const ProbabilityEstimator& h);

// solve from the empty square with uniform scores, unwrapped. Throws
// resource_error if config.node_limit stops the search.
Grid generate_solution(GridShape shape, const SearchConfig& config);

}  // namespace pls
