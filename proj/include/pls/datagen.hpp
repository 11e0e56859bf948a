#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pls/grid.hpp"

namespace pls {

// One training example: a partial assignment (as sorted pair indices) and
// the pair that extends it. The target is never part of the input.
struct Example {
  std::vector<std::int32_t> x_indices;
  std::int32_t target = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

struct SolutionPool {
  GridShape shape;
  std::vector<Grid> solutions;
};

// Columnar example store; x index lists are concatenated so that batch
// processing streams one flat array.
class Dataset {
 public:
  explicit Dataset(GridShape shape);

  GridShape shape() const { return shape_; }
  std::size_t count() const { return targets_.size(); }

  void append(std::span<const std::int32_t> x_indices, std::int32_t target);
  void append(const Example& example) { append(example.x_indices, example.target); }

  int fill_level(std::size_t i) const {
    return static_cast<int>(offsets_[i + 1] - offsets_[i]);
  }
  std::span<const std::int32_t> x_indices(std::size_t i) const {
    return {indices_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::int32_t target(std::size_t i) const { return targets_[i]; }

  Example example(std::size_t i) const;
  PartialAssignment assignment(std::size_t i) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  GridShape shape_;
  std::vector<std::uint64_t> offsets_;  // count()+1 entries
  std::vector<std::int32_t> indices_;
  std::vector<std::int32_t> targets_;
};

// Randomized deconstruction of a full solution: repeatedly retract a random
// assigned pair and record (remaining assignment, retracted pair). Produces
// n^2 examples with fill levels n^2-1 down to 0. Requires a complete,
// consistent solution.
std::vector<Example> deconstruct(const Grid& solution, std::uint64_t seed);

struct BuildStats {
  std::uint64_t pre_dedup = 0;
  std::uint64_t post_dedup = 0;
};

// Concatenates `passes` deconstructions of every pool solution (in pool
// order, passes innermost), then drops exact (x, y) duplicates keeping
// first occurrences. Deterministic for a given seed, including ordering.
Dataset build_dataset(const SolutionPool& pool, int passes, std::uint64_t seed,
                      BuildStats* stats = nullptr);

// Uniform example-level partition; |test| = round(fraction * count).
// Both halves keep the dataset's relative order.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed);

// `count` pairwise-distinct solutions from per-index derived seeds;
// duplicates are regenerated with a bounded retry budget.
SolutionPool gen_pool(GridShape shape, int count, std::uint64_t seed);

// Pool text format: first line "n=<N>", then one solution per line as n^2
// space-separated values in [1,n], row-major.
void write_pool(std::ostream& out, const SolutionPool& pool);
SolutionPool read_pool(std::istream& in);
void write_pool_file(const std::filesystem::path& path, const SolutionPool& pool);
SolutionPool read_pool_file(const std::filesystem::path& path);

// PLSD binary dataset format, little-endian:
//   magic "PLSD", version byte 0x01, n as u16, example count as u64;
//   per example: fill level k as u16, k ascending pair indices as u32,
//   then the target pair index as u32.
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
void write_dataset_file(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset_file(const std::filesystem::path& path);

}  // namespace pls
