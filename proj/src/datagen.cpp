#include "pls/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "pls/errors.hpp"
#include "pls/rng.hpp"
#include "pls/solver.hpp"

namespace pls {

namespace {

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t example_hash(std::span<const std::int32_t> x, std::int32_t y) {
  std::uint64_t h = fnv1a64(x.data(), x.size() * sizeof(std::int32_t));
  return fnv1a64(&y, sizeof(y), h);
}

// Little-endian scalar IO.
template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw parse_error(std::string("unexpected end of file reading ") + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return value;
}

}  // namespace

Dataset::Dataset(GridShape shape) : shape_(shape), offsets_{0} {}

void Dataset::append(std::span<const std::int32_t> x_indices, std::int32_t target) {
  indices_.insert(indices_.end(), x_indices.begin(), x_indices.end());
  offsets_.push_back(indices_.size());
  targets_.push_back(target);
}

Example Dataset::example(std::size_t i) const {
  const auto x = x_indices(i);
  return Example{{x.begin(), x.end()}, target(i)};
}

PartialAssignment Dataset::assignment(std::size_t i) const {
  return PartialAssignment::from_indices(shape_, x_indices(i));
}

std::vector<Example> deconstruct(const Grid& solution, std::uint64_t seed) {
  if (!solution.complete() || !is_latin_consistent(solution)) {
    throw std::invalid_argument("deconstruct requires a complete consistent solution");
  }
  std::vector<std::int32_t> remaining = from_grid(solution).set_indices();
  rng::Stream stream(seed);
  std::vector<Example> examples;
  examples.reserve(remaining.size());
  while (!remaining.empty()) {
    const std::size_t pick = stream.next_below(remaining.size());
    const std::int32_t target = remaining[pick];
    remaining[pick] = remaining.back();
    remaining.pop_back();
    Example example;
    example.x_indices = remaining;
    std::sort(example.x_indices.begin(), example.x_indices.end());
    example.target = target;
    examples.push_back(std::move(example));
  }
  return examples;
}

Dataset build_dataset(const SolutionPool& pool, int passes, std::uint64_t seed,
                      BuildStats* stats) {
  if (pool.solutions.empty()) {
    throw std::invalid_argument("build_dataset requires a non-empty pool");
  }
  if (passes < 1) {
    throw std::out_of_range("deconstructions per solution must be positive");
  }
  const std::size_t tasks = pool.solutions.size() * static_cast<std::size_t>(passes);
  std::vector<std::vector<Example>> produced(tasks);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(tasks); ++t) {
    const std::size_t solution = static_cast<std::size_t>(t) / passes;
    produced[t] = deconstruct(pool.solutions[solution],
                              rng::derive(seed, "deconstruct", static_cast<std::uint64_t>(t)));
  }

  // Ordered merge with first-occurrence dedup: hash buckets, exact compare.
  Dataset dataset(pool.shape);
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
  std::uint64_t pre_dedup = 0;
  for (const auto& batch : produced) {
    for (const Example& example : batch) {
      ++pre_dedup;
      const std::uint64_t h = example_hash(example.x_indices, example.target);
      auto& bucket = buckets[h];
      bool duplicate = false;
      for (const std::uint32_t id : bucket) {
        const auto seen = dataset.x_indices(id);
        if (dataset.target(id) == example.target &&
            std::equal(seen.begin(), seen.end(), example.x_indices.begin(),
                       example.x_indices.end())) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) continue;
      bucket.push_back(static_cast<std::uint32_t>(dataset.count()));
      dataset.append(example);
    }
  }
  if (stats != nullptr) {
    stats->pre_dedup = pre_dedup;
    stats->post_dedup = dataset.count();
  }
  return dataset;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed) {
  if (dataset.count() == 0) {
    throw std::invalid_argument("split requires a non-empty dataset");
  }
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
    throw std::out_of_range("test fraction must lie in (0, 1)");
  }
  const std::size_t count = dataset.count();
  const auto test_size = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(count)));

  std::vector<std::uint32_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = static_cast<std::uint32_t>(i);
  rng::Stream stream(rng::derive(seed, "split"));
  stream.shuffle(order.begin(), order.end());

  std::vector<std::uint8_t> in_test(count, 0);
  for (std::size_t i = 0; i < test_size; ++i) in_test[order[i]] = 1;

  Dataset train(dataset.shape());
  Dataset test(dataset.shape());
  for (std::size_t i = 0; i < count; ++i) {
    (in_test[i] ? test : train).append(dataset.x_indices(i), dataset.target(i));
  }
  return {std::move(train), std::move(test)};
}

SolutionPool gen_pool(GridShape shape, int count, std::uint64_t seed) {
  if (count < 1) throw std::out_of_range("pool size must be positive");
  constexpr int kRetryBudget = 1000;

  SolutionPool pool{shape, {}};
  pool.solutions.reserve(static_cast<std::size_t>(count));
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;

  auto accept_if_new = [&](const Grid& candidate) {
    const std::string line = grid_to_line(candidate);
    const std::uint64_t h = fnv1a64(line.data(), line.size());
    auto& bucket = buckets[h];
    for (const std::uint32_t id : bucket) {
      if (pool.solutions[id] == candidate) return false;
    }
    bucket.push_back(static_cast<std::uint32_t>(pool.solutions.size()));
    pool.solutions.push_back(candidate);
    return true;
  };

  std::vector<Grid> round(static_cast<std::size_t>(count), Grid(shape));
  std::vector<int> pending(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) pending[static_cast<std::size_t>(i)] = i;
  std::vector<int> retries(static_cast<std::size_t>(count), 0);

  while (!pending.empty()) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(pending.size()); ++p) {
      const int i = pending[static_cast<std::size_t>(p)];
      const std::uint64_t root = rng::derive(seed, "pool", static_cast<std::uint64_t>(i));
      const std::uint64_t draw =
          rng::derive(root, "retry", static_cast<std::uint64_t>(retries[static_cast<std::size_t>(i)]));
      round[static_cast<std::size_t>(i)] = generate_solution(shape, SearchConfig{draw, 0});
    }
    // Acceptance is sequential in index order so the result does not depend
    // on scheduling.
    std::vector<int> still_pending;
    for (const int i : pending) {
      if (accept_if_new(round[static_cast<std::size_t>(i)])) continue;
      if (++retries[static_cast<std::size_t>(i)] >= kRetryBudget) {
        throw resource_error("could not find " + std::to_string(count) +
                             " distinct solutions of order " + std::to_string(shape.n()));
      }
      still_pending.push_back(i);
    }
    pending = std::move(still_pending);
  }
  return pool;
}

void write_pool(std::ostream& out, const SolutionPool& pool) {
  out << "n=" << pool.shape.n() << '\n';
  for (const Grid& solution : pool.solutions) {
    out << grid_to_line(solution) << '\n';
  }
}

SolutionPool read_pool(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("n=", 0) != 0) {
    throw parse_error("line 1: expected pool header n=<N>");
  }
  int n = 0;
  try {
    std::size_t used = 0;
    n = std::stoi(header.substr(2), &used);
    if (used != header.size() - 2) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw parse_error("line 1: malformed pool header: " + header);
  }
  SolutionPool pool{GridShape(n), {}};
  std::string line;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    Grid g = grid_from_line(pool.shape, line, line_number);
    if (!is_latin_consistent(g)) {
      throw parse_error("line " + std::to_string(line_number) + ": not a Latin square");
    }
    pool.solutions.push_back(std::move(g));
  }
  return pool;
}

void write_pool_file(const std::filesystem::path& path, const SolutionPool& pool) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  write_pool(out, pool);
  if (!out.flush()) throw io_error("failed writing " + path.string());
}

SolutionPool read_pool_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  return read_pool(in);
}

namespace {
constexpr char kDatasetMagic[4] = {'P', 'L', 'S', 'D'};
constexpr std::uint8_t kDatasetVersion = 0x01;
}  // namespace

void write_dataset(std::ostream& out, const Dataset& dataset) {
  out.write(kDatasetMagic, 4);
  put_le<std::uint8_t>(out, kDatasetVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(dataset.shape().n()));
  put_le<std::uint64_t>(out, dataset.count());
  for (std::size_t i = 0; i < dataset.count(); ++i) {
    const auto x = dataset.x_indices(i);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(x.size()));
    for (const std::int32_t index : x) {
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index));
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.target(i)));
  }
}

Dataset read_dataset(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kDatasetMagic)) {
    throw parse_error("not a PLSD dataset file");
  }
  if (get_le<std::uint8_t>(in, "version") != kDatasetVersion) {
    throw parse_error("unsupported PLSD version");
  }
  const int n = get_le<std::uint16_t>(in, "square side");
  GridShape shape(n);
  const std::uint64_t count = get_le<std::uint64_t>(in, "example count");
  Dataset dataset(shape);
  std::vector<std::int32_t> x;
  std::vector<std::uint8_t> cell_seen(static_cast<std::size_t>(shape.cell_count()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const int fill = get_le<std::uint16_t>(in, "fill level");
    if (fill >= shape.cell_count()) {
      throw parse_error("example " + std::to_string(i) + ": fill level " +
                        std::to_string(fill) + " out of range");
    }
    x.resize(static_cast<std::size_t>(fill));
    std::fill(cell_seen.begin(), cell_seen.end(), 0);
    std::int32_t previous = -1;
    for (int k = 0; k < fill; ++k) {
      const auto index = static_cast<std::int32_t>(get_le<std::uint32_t>(in, "pair index"));
      if (index < 0 || index >= shape.m() || index <= previous) {
        throw parse_error("example " + std::to_string(i) +
                          ": pair indices must be ascending and in range");
      }
      const int cell = index / shape.n();
      if (cell_seen[static_cast<std::size_t>(cell)]++ != 0) {
        throw parse_error("example " + std::to_string(i) + ": two values for one cell");
      }
      previous = index;
      x[static_cast<std::size_t>(k)] = index;
    }
    const auto target = static_cast<std::int32_t>(get_le<std::uint32_t>(in, "target index"));
    if (target < 0 || target >= shape.m()) {
      throw parse_error("example " + std::to_string(i) + ": target out of range");
    }
    if (std::binary_search(x.begin(), x.end(), target)) {
      throw parse_error("example " + std::to_string(i) + ": target already assigned");
    }
    dataset.append(x, target);
  }
  return dataset;
}

void write_dataset_file(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
  if (!out.flush()) throw io_error("failed writing " + path.string());
}

Dataset read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace pls
