#include "pls/grid.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pls/errors.hpp"

namespace pls {

namespace {

// Value sets are tracked as 64-bit masks throughout the solver and the
// propagator, which caps the supported square side.
constexpr int kMaxSide = 64;

[[noreturn]] void throw_range(const char* what, int got) {
  throw std::out_of_range(std::string(what) + " out of range: " + std::to_string(got));
}

}  // namespace

GridShape::GridShape(int n) : n_(n) {
  if (n < 1 || n > kMaxSide) throw_range("square side n", n);
}

int encode_pair(GridShape shape, int row, int col, int value) {
  const int n = shape.n();
  if (row < 0 || row >= n) throw_range("row", row);
  if (col < 0 || col >= n) throw_range("column", col);
  if (value < 1 || value > n) throw_range("value", value);
  return (row * n + col) * n + (value - 1);
}

CellValue decode_pair(GridShape shape, int index) {
  const int n = shape.n();
  if (index < 0 || index >= shape.m()) throw_range("pair index", index);
  return CellValue{index / (n * n), (index / n) % n, index % n + 1};
}

PartialAssignment::PartialAssignment(GridShape shape)
    : shape_(shape), bits_(static_cast<std::size_t>(shape.m()), 0) {}

PartialAssignment PartialAssignment::from_indices(
    GridShape shape, std::span<const std::int32_t> indices) {
  PartialAssignment x(shape);
  for (const std::int32_t index : indices) {
    if (index < 0 || index >= shape.m()) throw_range("pair index", index);
    if (x.bits_[static_cast<std::size_t>(index)] != 0) {
      throw std::invalid_argument("duplicate pair index " + std::to_string(index));
    }
    x.bits_[static_cast<std::size_t>(index)] = 1;
  }
  return x;
}

int PartialAssignment::fill_level() const {
  int count = 0;
  for (const std::uint8_t bit : bits_) count += bit;
  return count;
}

std::vector<std::int32_t> PartialAssignment::set_indices() const {
  std::vector<std::int32_t> indices;
  for (std::size_t j = 0; j < bits_.size(); ++j) {
    if (bits_[j] != 0) indices.push_back(static_cast<std::int32_t>(j));
  }
  return indices;
}

bool PartialAssignment::cell_consistent() const {
  const int n = shape_.n();
  for (int cell = 0; cell < shape_.cell_count(); ++cell) {
    int set = 0;
    for (int v = 0; v < n; ++v) set += bits_[static_cast<std::size_t>(cell * n + v)];
    if (set > 1) return false;
  }
  return true;
}

Grid::Grid(GridShape shape)
    : shape_(shape), cells_(static_cast<std::size_t>(shape.cell_count()), 0) {}

int Grid::cell_index(int row, int col) const {
  const int n = shape_.n();
  if (row < 0 || row >= n) throw_range("row", row);
  if (col < 0 || col >= n) throw_range("column", col);
  return row * n + col;
}

int Grid::at(int row, int col) const {
  return cells_[static_cast<std::size_t>(cell_index(row, col))];
}

void Grid::set(int row, int col, int value) {
  if (value < 1 || value > shape_.n()) throw_range("value", value);
  cells_[static_cast<std::size_t>(cell_index(row, col))] = static_cast<std::int8_t>(value);
}

void Grid::clear_cell(int row, int col) {
  cells_[static_cast<std::size_t>(cell_index(row, col))] = 0;
}

int Grid::filled_count() const {
  int count = 0;
  for (const std::int8_t cell : cells_) count += cell != 0;
  return count;
}

bool is_latin_consistent(const Grid& g) {
  const int n = g.shape().n();
  for (int r = 0; r < n; ++r) {
    std::uint64_t seen = 0;
    for (int c = 0; c < n; ++c) {
      const int v = g.at(r, c);
      if (v == 0) continue;
      const std::uint64_t bit = 1ull << (v - 1);
      if (seen & bit) return false;
      seen |= bit;
    }
  }
  for (int c = 0; c < n; ++c) {
    std::uint64_t seen = 0;
    for (int r = 0; r < n; ++r) {
      const int v = g.at(r, c);
      if (v == 0) continue;
      const std::uint64_t bit = 1ull << (v - 1);
      if (seen & bit) return false;
      seen |= bit;
    }
  }
  return true;
}

bool is_latin_consistent(const PartialAssignment& x) {
  if (!x.cell_consistent()) return false;
  Grid g(x.shape());
  const int n = x.shape().n();
  for (int j = 0; j < x.shape().m(); ++j) {
    if (!x.test(j)) continue;
    const int cell = j / n;
    g.set(cell / n, cell % n, j % n + 1);
  }
  return is_latin_consistent(g);
}

Grid to_grid(const PartialAssignment& x) {
  if (!x.cell_consistent()) {
    throw std::invalid_argument("assignment sets two values for one cell");
  }
  Grid g(x.shape());
  const int n = x.shape().n();
  for (int j = 0; j < x.shape().m(); ++j) {
    if (!x.test(j)) continue;
    const int cell = j / n;
    g.set(cell / n, cell % n, j % n + 1);
  }
  return g;
}

PartialAssignment from_grid(const Grid& g) {
  PartialAssignment x(g.shape());
  const int n = g.shape().n();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int v = g.at(r, c);
      if (v != 0) x.set(encode_pair(g.shape(), r, c, v));
    }
  }
  return x;
}

std::string grid_to_line(const Grid& g) {
  std::string line;
  const int n = g.shape().n();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!line.empty()) line += ' ';
      line += std::to_string(g.at(r, c));
    }
  }
  return line;
}

Grid grid_from_line(GridShape shape, const std::string& line, int line_number) {
  std::istringstream in(line);
  Grid g(shape);
  const int n = shape.n();
  for (int cell = 0; cell < shape.cell_count(); ++cell) {
    int value = 0;
    if (!(in >> value) || value < 1 || value > n) {
      throw parse_error("line " + std::to_string(line_number) +
                        ": expected " + std::to_string(shape.cell_count()) +
                        " values in [1," + std::to_string(n) + "]");
    }
    g.set(cell / n, cell % n, value);
  }
  int trailing = 0;
  if (in >> trailing) {
    throw parse_error("line " + std::to_string(line_number) + ": trailing values");
  }
  return g;
}

}  // namespace pls
