#include "pls/propagate.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pls {

const char* to_string(KnowledgeLevel level) {
  switch (level) {
    case KnowledgeLevel::None: return "none";
    case KnowledgeLevel::Rows: return "rows";
    case KnowledgeLevel::RowsCols: return "rowscols";
  }
  return "?";
}

KnowledgeLevel knowledge_level_from_string(std::string_view name) {
  if (name == "none") return KnowledgeLevel::None;
  if (name == "rows") return KnowledgeLevel::Rows;
  if (name == "rowscols") return KnowledgeLevel::RowsCols;
  throw std::invalid_argument("unknown knowledge level: " + std::string(name));
}

FeasibilityMask::FeasibilityMask(GridShape shape, std::vector<std::uint8_t> bits)
    : shape_(shape), bits_(std::move(bits)) {
  if (bits_.size() != static_cast<std::size_t>(shape.m())) {
    throw std::invalid_argument("mask length does not match shape");
  }
}

int FeasibilityMask::count_ones() const {
  int ones = 0;
  for (const std::uint8_t bit : bits_) ones += bit;
  return ones;
}

namespace {

// Marks the pairs pruned by one assigned pair (row, col, value-1):
//   (a) all pairs of the assigned cell,
//   (b) the same value elsewhere in the row,
//   (c) the same value elsewhere in the column (RowsCols only).
template <class ZeroFn>
void prune_for_assignment(GridShape shape, int index, KnowledgeLevel level,
                          ZeroFn&& zero) {
  const int n = shape.n();
  const int cell = index / n;
  const int row = cell / n;
  const int col = cell % n;
  const int v0 = index % n;
  for (int v = 0; v < n; ++v) zero(cell * n + v);
  for (int c = 0; c < n; ++c) zero((row * n + c) * n + v0);
  if (level == KnowledgeLevel::RowsCols) {
    for (int r = 0; r < n; ++r) zero((r * n + col) * n + v0);
  }
}

}  // namespace

FeasibilityMask forward_check(const PartialAssignment& x, KnowledgeLevel level) {
  if (!x.cell_consistent()) {
    throw std::invalid_argument("forward_check requires a cell-consistent assignment");
  }
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(x.shape().m()), 1);
  if (level != KnowledgeLevel::None) {
    for (int j = 0; j < x.shape().m(); ++j) {
      if (!x.test(j)) continue;
      prune_for_assignment(x.shape(), j, level,
                           [&](int k) { bits[static_cast<std::size_t>(k)] = 0; });
    }
  }
  return FeasibilityMask(x.shape(), std::move(bits));
}

void forward_check_packed(GridShape shape, std::span<const std::int32_t> x_indices,
                          KnowledgeLevel level, std::span<std::uint64_t> out_words) {
  const int words = mask_words_per_example(shape);
  if (out_words.size() < static_cast<std::size_t>(words)) {
    throw std::invalid_argument("mask word buffer too small");
  }
  std::fill_n(out_words.begin(), words, ~0ull);
  const int m = shape.m();
  if (m % 64 != 0) out_words[words - 1] = (1ull << (m % 64)) - 1;
  if (level == KnowledgeLevel::None) return;
  for (const std::int32_t j : x_indices) {
    prune_for_assignment(shape, j, level, [&](int k) {
      out_words[static_cast<std::size_t>(k >> 6)] &= ~(1ull << (k & 63));
    });
  }
}

}  // namespace pls
