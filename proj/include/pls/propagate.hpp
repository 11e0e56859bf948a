#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pls/grid.hpp"

namespace pls {

// How much of the problem structure the forward-checking propagator sees.
//   None     - no pruning at all; even reassigning a filled cell is allowed.
//   Rows     - prunes pairs of already-assigned cells and row value repeats.
//   RowsCols - Rows plus column value repeats.
enum class KnowledgeLevel { None, Rows, RowsCols };

const char* to_string(KnowledgeLevel level);
KnowledgeLevel knowledge_level_from_string(std::string_view name);

// bit j = 1 iff pair j has not been marked infeasible by the propagator.
class FeasibilityMask {
 public:
  FeasibilityMask(GridShape shape, std::vector<std::uint8_t> bits);

  GridShape shape() const { return shape_; }
  bool test(int index) const { return bits_[static_cast<std::size_t>(index)] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  int count_ones() const;

 private:
  GridShape shape_;
  std::vector<std::uint8_t> bits_;
};

// One-shot forward checking over the assigned pairs of x. No fixpoint
// iteration and no lookahead: only direct single-assignment implications.
// Requires x cell-consistent.
FeasibilityMask forward_check(const PartialAssignment& x, KnowledgeLevel level);

// Same pruning on a sorted pair-index list, written as packed 64-bit words
// (LSB first, ceil(m/64) words). Used by the training loop's mask cache;
// assumes the indices describe a cell-consistent assignment.
void forward_check_packed(GridShape shape, std::span<const std::int32_t> x_indices,
                          KnowledgeLevel level, std::span<std::uint64_t> out_words);

inline int mask_words_per_example(GridShape shape) {
  return (shape.m() + 63) / 64;
}

}  // namespace pls
