#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pls/datagen.hpp"
#include "pls/mlp.hpp"
#include "pls/propagate.hpp"
#include "pls/rng.hpp"
#include "pls/solver.hpp"

namespace pls {

// Scores straight from the network's forward pass.
class NetworkEstimator final : public ProbabilityEstimator {
 public:
  explicit NetworkEstimator(const Mlp<float>& model) : model_(&model) {}

  void scores(const PartialAssignment& x, std::span<float> out) const override;

 private:
  const Mlp<float>* model_;
};

// Per fill level: how many suggestions were tested and how many of them
// were globally feasible (completable into full solutions).
class FeasibilityReport {
 public:
  struct Bin {
    std::uint64_t tested = 0;
    std::uint64_t feasible = 0;
  };

  explicit FeasibilityReport(GridShape shape);

  GridShape shape() const { return shape_; }
  const std::vector<Bin>& bins() const { return bins_; }
  std::vector<Bin>& bins() { return bins_; }
  double ratio(int fill) const;  // NaN when the bin is empty

  // Unweighted mean of the per-level ratios over [lo, hi], skipping
  // untested levels; NaN if the whole band is empty.
  double band_mean(int lo, int hi) const;

  std::uint64_t total_tested() const;

  // Suggestions with an empty candidate set and searches stopped by the
  // node budget, both counted infeasible and tallied separately; plus
  // examples skipped because their square was already full.
  std::uint64_t no_candidates = 0;
  std::uint64_t node_limit_hits = 0;
  std::uint64_t skipped_full = 0;

  std::map<std::string, std::string> metadata;

 private:
  GridShape shape_;
  std::vector<Bin> bins_;
};

struct FeastestResult {
  int feasible = 0;
  bool no_candidates = false;
  bool node_limit_hit = false;
};

// One evaluation trial: filter the pair space through forward checking at
// eval_level, take the estimator's argmax over the surviving pairs (ties
// broken uniformly at random), assert that pair, then try to complete the
// square with full constraints and uniform value choice. Requires x
// cell-consistent and not full.
FeastestResult feastest(const PartialAssignment& x, KnowledgeLevel eval_level,
                        const ProbabilityEstimator& h, rng::Stream& stream,
                        std::uint64_t solve_node_limit = 0);

struct EvalOptions {
  KnowledgeLevel eval_level = KnowledgeLevel::None;
  std::uint64_t seed = 0;
  // Backstop for pathological completion searches; hits are tallied in the
  // report, never conflated with proven infeasibility.
  std::uint64_t node_limit = 50'000'000;
  // 0 = evaluate every example; otherwise a seed-stable uniform subsample
  // of at most this many examples per fill level.
  std::uint64_t max_per_fill = 0;
};

// feastest over every test example's x (targets are ignored), binned by
// fill level. Counts do not depend on the parallel execution order.
FeasibilityReport evaluate(const Dataset& test_set, const ProbabilityEstimator& h,
                           const EvalOptions& options);

struct RegimeEntry {
  std::string label;
  const ProbabilityEstimator* estimator = nullptr;
};

struct RegimeSummaryRow {
  std::string label;
  KnowledgeLevel eval_level = KnowledgeLevel::None;
  double band_mean = 0.0;
};

struct RegimeComparison {
  std::vector<FeasibilityReport> reports;  // estimator-major, levels inner
  std::vector<RegimeSummaryRow> summary;
};

// Cartesian sweep of estimators x evaluation levels with one report each
// plus a band-mean summary (default band 30..70).
RegimeComparison compare_regimes(const std::vector<RegimeEntry>& estimators,
                                 const Dataset& test_set,
                                 const std::vector<KnowledgeLevel>& eval_levels,
                                 const EvalOptions& base_options,
                                 int band_lo = 30, int band_hi = 70);

// CSV with a '#'-prefixed metadata preamble and one row per fill level:
// fill,tested,feasible,ratio.
void write_report_csv(std::ostream& out, const FeasibilityReport& report);
FeasibilityReport read_report_csv(std::istream& in);
void write_report_csv_file(const std::filesystem::path& path, const FeasibilityReport& report);
FeasibilityReport read_report_csv_file(const std::filesystem::path& path);

}  // namespace pls
