#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace pls {

// Square side n plus the derived pair space of size m = n^3. One pair index
// encodes a (row, column, value) triple: index = (row*n + col)*n + (value-1),
// so pair indices enumerate cells in row-major order, values innermost.
class GridShape {
 public:
  explicit GridShape(int n);

  int n() const { return n_; }
  int m() const { return n_ * n_ * n_; }
  int cell_count() const { return n_ * n_; }

  friend bool operator==(GridShape, GridShape) = default;

 private:
  int n_;
};

struct CellValue {
  int row = 0;
  int col = 0;
  int value = 0;  // in [1, n]

  friend bool operator==(const CellValue&, const CellValue&) = default;
};

int encode_pair(GridShape shape, int row, int col, int value);
CellValue decode_pair(GridShape shape, int index);

// Binary vector over the pair space: bit j set means pair j is asserted.
class PartialAssignment {
 public:
  explicit PartialAssignment(GridShape shape);

  // Indices must be in range and pairwise distinct.
  static PartialAssignment from_indices(GridShape shape,
                                        std::span<const std::int32_t> indices);

  GridShape shape() const { return shape_; }
  bool test(int index) const { return bits_[static_cast<std::size_t>(index)] != 0; }
  void set(int index) { bits_[static_cast<std::size_t>(index)] = 1; }
  void clear(int index) { bits_[static_cast<std::size_t>(index)] = 0; }

  int fill_level() const;
  std::vector<std::int32_t> set_indices() const;

  // No two set bits share a cell.
  bool cell_consistent() const;

  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const PartialAssignment&, const PartialAssignment&) = default;

 private:
  GridShape shape_;
  std::vector<std::uint8_t> bits_;
};

// Cell-value map view of a partial assignment; 0 stands for an empty cell.
class Grid {
 public:
  explicit Grid(GridShape shape);

  GridShape shape() const { return shape_; }
  int at(int row, int col) const;
  void set(int row, int col, int value);  // value in [1, n]
  void clear_cell(int row, int col);
  bool empty_at(int row, int col) const { return at(row, col) == 0; }

  int filled_count() const;
  bool complete() const { return filled_count() == shape_.cell_count(); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int cell_index(int row, int col) const;

  GridShape shape_;
  std::vector<std::int8_t> cells_;
};

// Direct violation oracle: cell-consistent and no value twice in any row or
// column. No lookahead of any kind.
bool is_latin_consistent(const PartialAssignment& x);
bool is_latin_consistent(const Grid& g);

// Conversion is lossless for cell-consistent assignments; to_grid throws
// std::invalid_argument otherwise.
Grid to_grid(const PartialAssignment& x);
PartialAssignment from_grid(const Grid& g);

// One line of the pool text format: n^2 space-separated values, row-major.
std::string grid_to_line(const Grid& g);
Grid grid_from_line(GridShape shape, const std::string& line, int line_number);

}  // namespace pls
