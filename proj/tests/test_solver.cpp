#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pls/datagen.hpp"
#include "pls/rng.hpp"
#include "pls/solver.hpp"

using namespace pls;

TEST_CASE("order one solves trivially") {
  const SolveOutcome outcome =
      solve(PartialAssignment(GridShape(1)), SearchConfig{0, 0}, UniformEstimator{});
  REQUIRE(outcome.status == SolveStatus::Solution);
  CHECK(outcome.solution->at(0, 0) == 1);
}

TEST_CASE("hand-proved infeasible start at n=2") {
  // (0,0)=1 forces (0,1)=2 and (1,1)=2 forces (1,0)=1: column 0 repeats 1.
  const GridShape shape(2);
  PartialAssignment x(shape);
  x.set(encode_pair(shape, 0, 0, 1));
  x.set(encode_pair(shape, 1, 1, 2));
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const SolveOutcome outcome = solve(x, SearchConfig{seed, 0}, UniformEstimator{});
    CHECK(outcome.status == SolveStatus::Infeasible);
  }
}

TEST_CASE("cell-inconsistent start is a precondition error") {
  const GridShape shape(2);
  PartialAssignment bad(shape);
  bad.set(encode_pair(shape, 0, 0, 1));
  bad.set(encode_pair(shape, 0, 0, 2));
  CHECK_THROWS_AS(solve(bad, SearchConfig{}, UniformEstimator{}), std::invalid_argument);
}

TEST_CASE("latin-inconsistent but cell-consistent start is infeasible") {
  const GridShape shape(3);
  PartialAssignment x(shape);
  x.set(encode_pair(shape, 0, 0, 1));
  x.set(encode_pair(shape, 0, 1, 1));
  const SolveOutcome outcome = solve(x, SearchConfig{1, 0}, UniformEstimator{});
  CHECK(outcome.status == SolveStatus::Infeasible);
}

TEST_CASE("order-3 census: all 12 squares and nothing else") {
  const auto oracle_squares = oracles::all_latin_squares(3);
  REQUIRE(oracle_squares.size() == 12);
  std::set<std::string> oracle_lines;
  for (const Grid& g : oracle_squares) oracle_lines.insert(grid_to_line(g));

  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const Grid g = generate_solution(GridShape(3), SearchConfig{seed, 0});
    REQUIRE(is_latin_consistent(g));
    REQUIRE(g.complete());
    seen.insert(grid_to_line(g));
  }
  CHECK(seen.size() == 12);
  CHECK(seen == oracle_lines);
}

TEST_CASE("generated order-10 solutions are valid") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Grid g = generate_solution(GridShape(10), SearchConfig{seed, 0});
    CHECK(g.complete());
    CHECK(is_latin_consistent(g));
    CHECK(from_grid(g).fill_level() == 100);
  }
}

TEST_CASE("identical seeds give identical outcomes and node counts") {
  const GridShape shape(6);
  PartialAssignment x(shape);
  x.set(encode_pair(shape, 0, 0, 3));
  x.set(encode_pair(shape, 2, 4, 1));
  const SolveOutcome a = solve(x, SearchConfig{77, 0}, UniformEstimator{});
  const SolveOutcome b = solve(x, SearchConfig{77, 0}, UniformEstimator{});
  REQUIRE(a.status == SolveStatus::Solution);
  CHECK(a.nodes == b.nodes);
  CHECK(*a.solution == *b.solution);

  const SolveOutcome c = solve(x, SearchConfig{78, 0}, UniformEstimator{});
  REQUIRE(c.status == SolveStatus::Solution);  // different seed may differ
}

TEST_CASE("node limit reports a distinct outcome") {
  const SolveOutcome outcome =
      solve(PartialAssignment(GridShape(10)), SearchConfig{5, 3}, UniformEstimator{});
  CHECK(outcome.status == SolveStatus::NodeLimit);
  CHECK(outcome.nodes <= 3);
  CHECK_FALSE(outcome.solution.has_value());
}

TEST_CASE("verdicts agree with the exhaustive oracle on mutated partials") {
  // Deconstruction states are always completable; mutating one value makes
  // infeasible states reachable, exercising the Infeasible branch too.
  const UniformEstimator uniform;
  int infeasible_seen = 0;
  for (const int n : {3, 4}) {
    const GridShape shape(n);
    pls::rng::Stream stream(500 + n);
    for (int trial = 0; trial < 300; ++trial) {
      const Grid solution =
          generate_solution(shape, SearchConfig{stream.next_u64(), 0});
      Grid partial = solution;
      const int drop = 1 + static_cast<int>(stream.next_below(
                               static_cast<std::uint64_t>(shape.cell_count())));
      std::vector<int> cells(static_cast<std::size_t>(shape.cell_count()));
      for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
      stream.shuffle(cells.begin(), cells.end());
      for (int i = 0; i < drop; ++i) {
        partial.clear_cell(cells[static_cast<std::size_t>(i)] / n,
                           cells[static_cast<std::size_t>(i)] % n);
      }
      // Mutate one remaining cell to a random value, keeping cell
      // consistency but possibly breaking completability.
      for (int c = 0; c < shape.cell_count(); ++c) {
        if (partial.at(c / n, c % n) != 0) {
          partial.set(c / n, c % n, 1 + static_cast<int>(stream.next_below(
                                            static_cast<std::uint64_t>(n))));
          break;
        }
      }
      if (!oracles::grid_valid(partial)) continue;

      const bool oracle_says = oracles::completable(partial);
      const SolveOutcome outcome =
          solve(from_grid(partial), SearchConfig{stream.next_u64(), 0}, uniform);
      REQUIRE(outcome.status != SolveStatus::NodeLimit);
      CHECK((outcome.status == SolveStatus::Solution) == oracle_says);
      if (outcome.status == SolveStatus::Infeasible) ++infeasible_seen;
    }
  }
  CHECK(infeasible_seen > 0);
}

TEST_CASE("a peaked estimator steers the first solution") {
  // Score 1 on the pairs of one target square, 0 elsewhere: the first
  // branch at every node follows the target, so the search returns it.
  const GridShape shape(4);
  const Grid target = generate_solution(shape, SearchConfig{123, 0});
  class Peaked final : public ProbabilityEstimator {
   public:
    explicit Peaked(const PartialAssignment& wanted) : wanted_(wanted) {}
    void scores(const PartialAssignment&, std::span<float> out) const override {
      for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = wanted_.test(static_cast<int>(j)) ? 1.0f : 0.0f;
      }
    }

   private:
    PartialAssignment wanted_;
  };
  const Peaked h(from_grid(target));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SolveOutcome outcome =
        solve(PartialAssignment(shape), SearchConfig{seed, 0}, h);
    REQUIRE(outcome.status == SolveStatus::Solution);
    CHECK(*outcome.solution == target);
  }
}

TEST_CASE("negative or non-finite scores are rejected") {
  class Broken final : public ProbabilityEstimator {
   public:
    void scores(const PartialAssignment&, std::span<float> out) const override {
      std::fill(out.begin(), out.end(), -1.0f);
    }
  };
  CHECK_THROWS_AS(solve(PartialAssignment(GridShape(2)), SearchConfig{}, Broken{}),
                  std::invalid_argument);
}
