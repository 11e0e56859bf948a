#include "pls/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pls/errors.hpp"

namespace pls {

void NetworkEstimator::scores(const PartialAssignment& x, std::span<float> out) const {
  const std::vector<float> f = forward(*model_, x);
  if (out.size() != f.size()) {
    throw std::invalid_argument("score buffer does not match the model width");
  }
  std::copy(f.begin(), f.end(), out.begin());
}

FeasibilityReport::FeasibilityReport(GridShape shape)
    : shape_(shape), bins_(static_cast<std::size_t>(shape.cell_count())) {}

double FeasibilityReport::ratio(int fill) const {
  const Bin& bin = bins_[static_cast<std::size_t>(fill)];
  if (bin.tested == 0) return std::nan("");
  return static_cast<double>(bin.feasible) / static_cast<double>(bin.tested);
}

double FeasibilityReport::band_mean(int lo, int hi) const {
  double sum = 0.0;
  int levels = 0;
  for (int fill = lo; fill <= hi && fill < static_cast<int>(bins_.size()); ++fill) {
    if (fill < 0 || bins_[static_cast<std::size_t>(fill)].tested == 0) continue;
    sum += ratio(fill);
    ++levels;
  }
  return levels > 0 ? sum / levels : std::nan("");
}

std::uint64_t FeasibilityReport::total_tested() const {
  std::uint64_t total = 0;
  for (const Bin& bin : bins_) total += bin.tested;
  return total;
}

namespace {

// Conflict test for adding one pair to a consistent assignment: same cell,
// same value in the row, or same value in the column.
bool addition_conflicts(const PartialAssignment& x, int index) {
  const GridShape shape = x.shape();
  const CellValue added = decode_pair(shape, index);
  for (int c = 0; c < shape.n(); ++c) {
    if (c != added.col && x.test(encode_pair(shape, added.row, c, added.value))) return true;
  }
  for (int r = 0; r < shape.n(); ++r) {
    if (r != added.row && x.test(encode_pair(shape, r, added.col, added.value))) return true;
  }
  const int cell_base = (added.row * shape.n() + added.col) * shape.n();
  for (int v = 0; v < shape.n(); ++v) {
    if (cell_base + v != index && x.test(cell_base + v)) return true;
  }
  return false;
}

}  // namespace

FeastestResult feastest(const PartialAssignment& x, KnowledgeLevel eval_level,
                        const ProbabilityEstimator& h, rng::Stream& stream,
                        std::uint64_t solve_node_limit) {
  if (!x.cell_consistent()) {
    throw std::invalid_argument("feastest requires a cell-consistent assignment");
  }
  const GridShape shape = x.shape();
  if (x.fill_level() >= shape.cell_count()) {
    throw std::invalid_argument("feastest requires a non-full square");
  }

  const FeasibilityMask mask = forward_check(x, eval_level);
  std::vector<float> score(static_cast<std::size_t>(shape.m()));
  h.scores(x, score);

  // Argmax over unmasked pairs; ties are exact score equality.
  float best = -1.0f;
  std::vector<int> argmax;
  for (int j = 0; j < shape.m(); ++j) {
    if (!mask.test(j)) continue;
    const float s = score[static_cast<std::size_t>(j)];
    if (s > best) {
      best = s;
      argmax.clear();
      argmax.push_back(j);
    } else if (s == best) {
      argmax.push_back(j);
    }
  }

  FeastestResult result;
  if (argmax.empty()) {
    result.no_candidates = true;
    return result;
  }
  const int chosen = argmax[stream.next_below(argmax.size())];

  PartialAssignment extended = x;
  if (!extended.test(chosen)) {
    // A directly conflicting suggestion is globally infeasible; no search
    // is needed (and the solver would reject a cell-inconsistent start).
    if (addition_conflicts(extended, chosen)) return result;
    extended.set(chosen);
  }

  const UniformEstimator uniform;
  const SolveOutcome outcome =
      solve(extended, SearchConfig{stream.next_u64(), solve_node_limit}, uniform);
  if (outcome.status == SolveStatus::Solution) {
    result.feasible = 1;
  } else if (outcome.status == SolveStatus::NodeLimit) {
    result.node_limit_hit = true;
  }
  return result;
}

FeasibilityReport evaluate(const Dataset& test_set, const ProbabilityEstimator& h,
                           const EvalOptions& options) {
  FeasibilityReport report(test_set.shape());
  const std::size_t count = test_set.count();
  const int cells = test_set.shape().cell_count();

  // Seed-stable uniform subsample: keep the max_per_fill smallest draw
  // values within each fill level.
  std::vector<std::uint8_t> selected(count, 1);
  if (options.max_per_fill > 0) {
    std::vector<std::vector<std::pair<std::uint64_t, std::size_t>>> per_fill(
        static_cast<std::size_t>(cells));
    for (std::size_t i = 0; i < count; ++i) {
      const int fill = test_set.fill_level(i);
      if (fill >= cells) continue;
      rng::Stream draw(rng::derive(options.seed, "subsample", i));
      per_fill[static_cast<std::size_t>(fill)].emplace_back(draw.next_u64(), i);
    }
    std::fill(selected.begin(), selected.end(), 0);
    for (auto& entries : per_fill) {
      std::sort(entries.begin(), entries.end());
      const std::size_t keep = std::min<std::size_t>(entries.size(), options.max_per_fill);
      for (std::size_t i = 0; i < keep; ++i) selected[entries[i].second] = 1;
    }
  }

  std::uint64_t no_candidates = 0;
  std::uint64_t node_limit_hits = 0;
  std::uint64_t skipped_full = 0;
  std::vector<FeasibilityReport::Bin>& bins = report.bins();

#pragma omp parallel
  {
    std::vector<std::uint64_t> local_tested(static_cast<std::size_t>(cells), 0);
    std::vector<std::uint64_t> local_feasible(static_cast<std::size_t>(cells), 0);
    std::uint64_t local_no_candidates = 0;
    std::uint64_t local_limit_hits = 0;
    std::uint64_t local_skipped = 0;

#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
      if (!selected[static_cast<std::size_t>(i)]) continue;
      const int fill = test_set.fill_level(static_cast<std::size_t>(i));
      if (fill >= cells) {
        ++local_skipped;
        continue;
      }
      const PartialAssignment x = test_set.assignment(static_cast<std::size_t>(i));
      rng::Stream stream(
          rng::derive(options.seed, "feastest", static_cast<std::uint64_t>(i)));
      const FeastestResult result =
          feastest(x, options.eval_level, h, stream, options.node_limit);
      ++local_tested[static_cast<std::size_t>(fill)];
      local_feasible[static_cast<std::size_t>(fill)] +=
          static_cast<std::uint64_t>(result.feasible);
      local_no_candidates += result.no_candidates ? 1 : 0;
      local_limit_hits += result.node_limit_hit ? 1 : 0;
    }

#pragma omp critical
    {
      for (int fill = 0; fill < cells; ++fill) {
        bins[static_cast<std::size_t>(fill)].tested += local_tested[static_cast<std::size_t>(fill)];
        bins[static_cast<std::size_t>(fill)].feasible += local_feasible[static_cast<std::size_t>(fill)];
      }
      no_candidates += local_no_candidates;
      node_limit_hits += local_limit_hits;
      skipped_full += local_skipped;
    }
  }

  report.no_candidates = no_candidates;
  report.node_limit_hits = node_limit_hits;
  report.skipped_full = skipped_full;
  report.metadata["eval_level"] = to_string(options.eval_level);
  report.metadata["seed"] = std::to_string(options.seed);
  report.metadata["node_limit"] = std::to_string(options.node_limit);
  if (options.max_per_fill > 0) {
    report.metadata["max_per_fill"] = std::to_string(options.max_per_fill);
  }
  return report;
}

RegimeComparison compare_regimes(const std::vector<RegimeEntry>& estimators,
                                 const Dataset& test_set,
                                 const std::vector<KnowledgeLevel>& eval_levels,
                                 const EvalOptions& base_options,
                                 int band_lo, int band_hi) {
  RegimeComparison comparison;
  for (const RegimeEntry& entry : estimators) {
    for (const KnowledgeLevel level : eval_levels) {
      EvalOptions options = base_options;
      options.eval_level = level;
      FeasibilityReport report = evaluate(test_set, *entry.estimator, options);
      report.metadata["estimator"] = entry.label;
      comparison.summary.push_back(
          RegimeSummaryRow{entry.label, level, report.band_mean(band_lo, band_hi)});
      comparison.reports.push_back(std::move(report));
    }
  }
  return comparison;
}

void write_report_csv(std::ostream& out, const FeasibilityReport& report) {
  out << "# n=" << report.shape().n() << '\n';
  for (const auto& [key, value] : report.metadata) {
    out << "# " << key << "=" << value << '\n';
  }
  out << "# no_candidates=" << report.no_candidates << '\n';
  out << "# node_limit_hits=" << report.node_limit_hits << '\n';
  out << "# skipped_full=" << report.skipped_full << '\n';
  out << "fill,tested,feasible,ratio\n";
  char line[96];
  for (std::size_t fill = 0; fill < report.bins().size(); ++fill) {
    const auto& bin = report.bins()[fill];
    if (bin.tested == 0) {
      std::snprintf(line, sizeof(line), "%zu,%llu,%llu,nan\n", fill,
                    static_cast<unsigned long long>(bin.tested),
                    static_cast<unsigned long long>(bin.feasible));
    } else {
      std::snprintf(line, sizeof(line), "%zu,%llu,%llu,%.6f\n", fill,
                    static_cast<unsigned long long>(bin.tested),
                    static_cast<unsigned long long>(bin.feasible),
                    report.ratio(static_cast<int>(fill)));
    }
    out << line;
  }
}

FeasibilityReport read_report_csv(std::istream& in) {
  std::string line;
  std::map<std::string, std::string> metadata;
  int line_number = 0;
  bool header_seen = false;
  std::vector<std::array<std::uint64_t, 3>> rows;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::size_t eq = line.find('=');
      if (eq != std::string::npos) {
        std::size_t key_start = 1;
        while (key_start < line.size() && line[key_start] == ' ') ++key_start;
        metadata[line.substr(key_start, eq - key_start)] = line.substr(eq + 1);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "fill,tested,feasible,ratio") {
        throw parse_error("line " + std::to_string(line_number) + ": bad report header");
      }
      header_seen = true;
      continue;
    }
    std::uint64_t fill = 0, tested = 0, feasible = 0;
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu",
                    reinterpret_cast<unsigned long long*>(&fill),
                    reinterpret_cast<unsigned long long*>(&tested),
                    reinterpret_cast<unsigned long long*>(&feasible)) != 3) {
      throw parse_error("line " + std::to_string(line_number) + ": bad report row");
    }
    rows.push_back({fill, tested, feasible});
  }
  if (!header_seen) throw parse_error("missing report header");
  const auto it = metadata.find("n");
  if (it == metadata.end()) throw parse_error("report is missing the n metadata line");
  FeasibilityReport report{GridShape(std::stoi(it->second))};
  for (const auto& row : rows) {
    if (row[0] >= report.bins().size()) {
      throw parse_error("fill level " + std::to_string(row[0]) + " out of range");
    }
    report.bins()[row[0]].tested = row[1];
    report.bins()[row[0]].feasible = row[2];
  }
  report.metadata = std::move(metadata);
  report.metadata.erase("n");
  if (auto found = report.metadata.find("no_candidates"); found != report.metadata.end()) {
    report.no_candidates = std::stoull(found->second);
    report.metadata.erase(found);
  }
  if (auto found = report.metadata.find("node_limit_hits"); found != report.metadata.end()) {
    report.node_limit_hits = std::stoull(found->second);
    report.metadata.erase(found);
  }
  if (auto found = report.metadata.find("skipped_full"); found != report.metadata.end()) {
    report.skipped_full = std::stoull(found->second);
    report.metadata.erase(found);
  }
  return report;
}

void write_report_csv_file(const std::filesystem::path& path,
                           const FeasibilityReport& report) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  write_report_csv(out, report);
  if (!out.flush()) throw io_error("failed writing " + path.string());
}

FeasibilityReport read_report_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  return read_report_csv(in);
}

}  // namespace pls
