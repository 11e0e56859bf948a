#include <omp.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pls/datagen.hpp"
#include "pls/errors.hpp"
#include "pls/harness.hpp"
#include "pls/mlp.hpp"
#include "pls/propagate.hpp"
#include "pls/rng.hpp"
#include "pls/train.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json g_config;  // parsed --config file, empty object when absent

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw pls::io_error("cannot open config file " + path.string());
  json parsed;
  try {
    in >> parsed;
  } catch (const json::exception& e) {
    throw pls::parse_error("config file " + path.string() + ": " + e.what());
  }
  if (!parsed.is_object()) {
    throw pls::parse_error("config file " + path.string() + ": expected a JSON object");
  }
  return parsed;
}

// Flags override the config file; the config file overrides defaults.
// Lookup order: config[stage][key], then config[key].
template <class T>
void config_fallback(const CLI::Option* opt, const std::string& stage,
                     const std::string& key, T& value) {
  if (opt != nullptr && opt->count() > 0) return;
  const json* source = nullptr;
  if (g_config.contains(stage) && g_config[stage].is_object() &&
      g_config[stage].contains(key)) {
    source = &g_config[stage][key];
  } else if (g_config.contains(key)) {
    source = &g_config[key];
  }
  if (source == nullptr) return;
  try {
    value = source->get<T>();
  } catch (const json::exception&) {
    throw pls::config_error("config key '" + key + "' has the wrong type");
  }
}

// Every stage derives its randomness from the run's single top-level seed
// through a named substream, so stages never share streams.
std::uint64_t rng_root(std::uint64_t seed, std::string_view stage) {
  return pls::rng::derive(seed, stage);
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(const json& doc) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return hex;
}

// Sidecar provenance next to every output whose format has no metadata slot.
void write_sidecar(const fs::path& target, const std::string& command, const json& params) {
  json doc;
  doc["command"] = command;
  doc["parameters"] = params;
  doc["config_hash"] = hash_hex(params);
  std::ofstream out(target.string() + ".meta.json");
  if (!out) throw pls::io_error("cannot write sidecar for " + target.string());
  out << doc.dump(2) << '\n';
}

struct GenPoolArgs {
  int n = 10;
  int count = 0;
  std::uint64_t seed = 0;
  std::string out;
};

void run_gen_pool(const GenPoolArgs& args) {
  if (args.out.empty()) throw pls::config_error("gen-pool needs an output path (--out)");
  if (args.count < 1) throw pls::config_error("gen-pool needs a positive --count");
  const pls::SolutionPool pool =
      pls::gen_pool(pls::GridShape(args.n), args.count, rng_root(args.seed, "gen-pool"));
  pls::write_pool_file(args.out, pool);
  write_sidecar(args.out, "gen-pool",
                json{{"n", args.n}, {"count", args.count}, {"seed", args.seed}});
  std::cout << "wrote " << pool.solutions.size() << " solutions of order " << args.n
            << " to " << args.out << '\n';
}

struct BuildDatasetArgs {
  std::string pool;
  int passes = 1;
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
  std::string out;
};

void run_build_dataset(const BuildDatasetArgs& args) {
  if (args.pool.empty()) throw pls::config_error("build-dataset needs --pool");
  if (args.out.empty()) throw pls::config_error("build-dataset needs --out");
  const pls::SolutionPool pool = pls::read_pool_file(args.pool);
  pls::BuildStats stats;
  const pls::Dataset dataset =
      pls::build_dataset(pool, args.passes, rng_root(args.seed, "build-dataset"), &stats);
  std::cout << "examples: " << stats.pre_dedup << " before dedup, " << stats.post_dedup
            << " after\n";

  const json params{{"pool", args.pool},       {"passes", args.passes},
                    {"seed", args.seed},       {"test_fraction", args.test_fraction},
                    {"n", dataset.shape().n()}};
  if (args.test_fraction > 0.0) {
    const auto [train_set, test_set] =
        pls::split(dataset, args.test_fraction, rng_root(args.seed, "build-dataset"));
    std::string stem = args.out;
    if (stem.size() > 5 && stem.ends_with(".plsd")) stem.resize(stem.size() - 5);
    const fs::path train_path = stem + ".train.plsd";
    const fs::path test_path = stem + ".test.plsd";
    pls::write_dataset_file(train_path, train_set);
    pls::write_dataset_file(test_path, test_set);
    write_sidecar(train_path, "build-dataset", params);
    write_sidecar(test_path, "build-dataset", params);
    std::cout << "train: " << train_set.count() << " examples -> " << train_path.string()
              << "\ntest:  " << test_set.count() << " examples -> " << test_path.string()
              << '\n';
  } else {
    pls::write_dataset_file(args.out, dataset);
    write_sidecar(args.out, "build-dataset", params);
    std::cout << "dataset: " << dataset.count() << " examples -> " << args.out << '\n';
  }
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string log;
  std::string regime;
  double lambda = -1.0;  // <0 = take from regime
  std::string level;
  int epochs = 1000;
  int batch_size = 50000;
  std::vector<int> hidden;
  double adam_step = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-7;
  std::uint64_t seed = 0;
  bool quiet = false;
};

void run_train(const TrainArgs& args) {
  if (args.dataset.empty()) throw pls::config_error("train needs --dataset");
  if (args.out.empty()) throw pls::config_error("train needs --out");
  if (args.regime.empty() && (args.lambda < 0.0 || args.level.empty())) {
    throw pls::config_error("train needs --regime, or both --lambda and --level");
  }
  pls::TrainConfig config =
      args.regime.empty() ? pls::TrainConfig{} : pls::regime_config(args.regime);
  if (args.lambda >= 0.0) config.lambda = args.lambda;
  if (!args.level.empty()) config.level = pls::knowledge_level_from_string(args.level);
  config.epochs = args.epochs;
  config.batch_size = args.batch_size;
  if (!args.hidden.empty()) config.hidden = args.hidden;
  config.adam = pls::AdamParams{args.adam_step, args.adam_beta1, args.adam_beta2,
                                args.adam_epsilon};
  config.init_seed = rng_root(args.seed, "train-init");
  config.shuffle_seed = rng_root(args.seed, "train-shuffle");

  const pls::Dataset train_set = pls::read_dataset_file(args.dataset);
  std::vector<pls::EpochStats> stats;
  const pls::Mlp<float> model =
      pls::train(train_set, config, &stats, args.quiet ? nullptr : &std::cerr);

  pls::ModelTrailer trailer;
  trailer.n = train_set.shape().n();
  trailer.lambda = static_cast<float>(config.lambda);
  trailer.level = config.level;
  trailer.epochs = static_cast<std::uint32_t>(config.epochs);
  trailer.init_seed = config.init_seed;
  trailer.shuffle_seed = config.shuffle_seed;
  pls::write_model_file(args.out, model, trailer);

  const json params{{"dataset", args.dataset},
                    {"regime", args.regime},
                    {"lambda", config.lambda},
                    {"level", pls::to_string(config.level)},
                    {"epochs", config.epochs},
                    {"batch_size", config.batch_size},
                    {"hidden", config.hidden},
                    {"adam", {{"step", config.adam.step},
                              {"beta1", config.adam.beta1},
                              {"beta2", config.adam.beta2},
                              {"epsilon", config.adam.epsilon}}},
                    {"seed", args.seed},
                    {"n", trailer.n}};
  write_sidecar(args.out, "train", params);

  std::map<std::string, std::string> log_metadata;
  log_metadata["dataset"] = args.dataset;
  log_metadata["lambda"] = std::to_string(config.lambda);
  log_metadata["level"] = pls::to_string(config.level);
  log_metadata["seed"] = std::to_string(args.seed);
  log_metadata["config_hash"] = hash_hex(params);
  const std::string log_path = args.log.empty() ? args.out + ".log.csv" : args.log;
  pls::write_training_log(log_path, stats, log_metadata);
  std::cout << "model -> " << args.out << "\ntraining log -> " << log_path << '\n';
}

struct EvaluateArgs {
  std::string test;
  std::vector<std::string> estimators;
  std::vector<std::string> levels;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::uint64_t max_per_fill = 0;
  std::uint64_t node_limit = 50'000'000;
  int band_lo = 30;
  int band_hi = 70;
};

void run_evaluate(const EvaluateArgs& args) {
  if (args.test.empty()) throw pls::config_error("evaluate needs --test");
  if (args.estimators.empty()) throw pls::config_error("evaluate needs at least one --estimator");
  if (args.levels.empty()) throw pls::config_error("evaluate needs at least one --eval-level");

  const pls::Dataset test_set = pls::read_dataset_file(args.test);

  struct LoadedEstimator {
    std::string label;
    std::unique_ptr<pls::Mlp<float>> model;
    std::unique_ptr<pls::ProbabilityEstimator> estimator;
    std::string provenance;
  };
  std::vector<LoadedEstimator> loaded;
  for (const std::string& spec : args.estimators) {
    LoadedEstimator entry;
    std::string path = spec;
    if (spec == "rnd") {
      entry.label = "rnd";
      entry.estimator = std::make_unique<pls::UniformEstimator>();
      entry.provenance = "uniform";
    } else {
      if (const std::size_t eq = spec.find('='); eq != std::string::npos) {
        entry.label = spec.substr(0, eq);
        path = spec.substr(eq + 1);
      } else {
        entry.label = fs::path(spec).stem().string();
      }
      auto [model, trailer] = pls::read_model_file(path);
      if (trailer.n != test_set.shape().n() ||
          model.input_dim() != test_set.shape().m()) {
        throw pls::config_error("model " + path + " was trained for n=" +
                                std::to_string(trailer.n) + ", test set has n=" +
                                std::to_string(test_set.shape().n()));
      }
      entry.model = std::make_unique<pls::Mlp<float>>(std::move(model));
      entry.estimator = std::make_unique<pls::NetworkEstimator>(*entry.model);
      entry.provenance = path;
    }
    loaded.push_back(std::move(entry));
  }

  fs::create_directories(args.out_dir);
  std::printf("%-16s %-10s %s\n", "estimator", "level", "band_mean");
  for (const LoadedEstimator& entry : loaded) {
    for (const std::string& level_name : args.levels) {
      pls::EvalOptions options;
      options.eval_level = pls::knowledge_level_from_string(level_name);
      options.seed = rng_root(args.seed, "evaluate");
      options.node_limit = args.node_limit;
      options.max_per_fill = args.max_per_fill;
      pls::FeasibilityReport report = pls::evaluate(test_set, *entry.estimator, options);
      report.metadata["estimator"] = entry.label;
      report.metadata["estimator_source"] = entry.provenance;
      report.metadata["test_set"] = args.test;
      const json params{{"test", args.test},
                        {"estimator", entry.label},
                        {"estimator_source", entry.provenance},
                        {"eval_level", level_name},
                        {"seed", args.seed},
                        {"node_limit", args.node_limit},
                        {"max_per_fill", args.max_per_fill}};
      report.metadata["config_hash"] = hash_hex(params);
      const fs::path out_path =
          fs::path(args.out_dir) / (entry.label + "_" + level_name + ".csv");
      pls::write_report_csv_file(out_path, report);
      std::printf("%-16s %-10s %.4f   -> %s\n", entry.label.c_str(), level_name.c_str(),
                  report.band_mean(args.band_lo, args.band_hi), out_path.c_str());
    }
  }
}

struct ReportArgs {
  std::vector<std::string> inputs;
  int band_lo = 30;
  int band_hi = 70;
  std::string out;
};

void run_report(const ReportArgs& args) {
  if (args.inputs.empty()) throw pls::config_error("report needs at least one input CSV");
  struct Entry {
    std::string label;
    pls::FeasibilityReport report;
  };
  std::vector<Entry> entries;
  int n = 0;
  for (const std::string& input : args.inputs) {
    pls::FeasibilityReport report = pls::read_report_csv_file(input);
    if (n == 0) {
      n = report.shape().n();
    } else if (n != report.shape().n()) {
      throw pls::config_error("reports mix different square sizes");
    }
    std::string label = fs::path(input).stem().string();
    if (const auto est = report.metadata.find("estimator"); est != report.metadata.end()) {
      label = est->second;
      if (const auto lvl = report.metadata.find("eval_level"); lvl != report.metadata.end()) {
        label += "@" + lvl->second;
      }
    }
    entries.push_back(Entry{std::move(label), std::move(report)});
  }

  std::printf("%-24s %s\n", "report", "band_mean");
  for (const Entry& entry : entries) {
    std::printf("%-24s %.4f\n", entry.label.c_str(),
                entry.report.band_mean(args.band_lo, args.band_hi));
  }

  if (!args.out.empty()) {
    std::ofstream out(args.out);
    if (!out) throw pls::io_error("cannot open " + args.out + " for writing");
    out << "# band=" << args.band_lo << ":" << args.band_hi << '\n';
    char line[64];
    for (const Entry& entry : entries) {
      std::snprintf(line, sizeof(line), "%.6f",
                    entry.report.band_mean(args.band_lo, args.band_hi));
      out << "# band_mean " << entry.label << " " << line << '\n';
    }
    out << "fill";
    for (const Entry& entry : entries) out << ',' << entry.label;
    out << '\n';
    const int cells = n * n;
    for (int fill = 0; fill < cells; ++fill) {
      out << fill;
      for (const Entry& entry : entries) {
        const double r = entry.report.ratio(fill);
        if (std::isnan(r)) {
          out << ",nan";
        } else {
          std::snprintf(line, sizeof(line), "%.6f", r);
          out << ',' << line;
        }
      }
      out << '\n';
    }
    if (!out.flush()) throw pls::io_error("failed writing " + args.out);
    std::cout << "merged table -> " << args.out << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven partial Latin square completion experiments"};
  app.require_subcommand(1);

  std::string config_path;
  int jobs = 0;
  app.add_option("--config", config_path, "JSON config file; flags override it");
  app.add_option("--jobs", jobs, "Worker thread cap (0 = all cores)");

  GenPoolArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-pool", "Generate a pool of full solutions");
  auto* gen_n = gen->add_option("--n", gen_args.n, "Square side");
  auto* gen_count = gen->add_option("--count", gen_args.count, "Number of distinct solutions");
  auto* gen_seed = gen->add_option("--seed", gen_args.seed, "Top-level seed");
  auto* gen_out = gen->add_option("--out", gen_args.out, "Output pool file");

  BuildDatasetArgs build_args;
  CLI::App* build = app.add_subcommand("build-dataset", "Deconstruct a pool into a dataset");
  auto* build_pool = build->add_option("--pool", build_args.pool, "Input pool file");
  auto* build_passes = build->add_option("--passes", build_args.passes,
                                         "Deconstructions per solution");
  auto* build_seed = build->add_option("--seed", build_args.seed, "Top-level seed");
  auto* build_fraction = build->add_option("--test-fraction", build_args.test_fraction,
                                           "Held-out example fraction in (0,1)");
  auto* build_out = build->add_option("--out", build_args.out, "Output dataset path");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a network on a dataset");
  auto* train_dataset = train_cmd->add_option("--dataset", train_args.dataset, "Training dataset");
  auto* train_out = train_cmd->add_option("--out", train_args.out, "Output model file");
  auto* train_log = train_cmd->add_option("--log", train_args.log, "Training log CSV");
  auto* train_regime = train_cmd->add_option("--regime", train_args.regime,
                                             "agn, rows or full");
  auto* train_lambda = train_cmd->add_option("--lambda", train_args.lambda,
                                             "SBR weight (overrides the regime)");
  auto* train_level = train_cmd->add_option("--level", train_args.level,
                                            "none, rows or rowscols (overrides the regime)");
  auto* train_epochs = train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
  auto* train_batch = train_cmd->add_option("--batch-size", train_args.batch_size,
                                            "Mini-batch size");
  auto* train_hidden = train_cmd->add_option("--hidden", train_args.hidden,
                                             "Hidden layer widths");
  auto* train_step = train_cmd->add_option("--adam-step", train_args.adam_step, "Adam step size");
  auto* train_b1 = train_cmd->add_option("--adam-beta1", train_args.adam_beta1, "Adam beta1");
  auto* train_b2 = train_cmd->add_option("--adam-beta2", train_args.adam_beta2, "Adam beta2");
  auto* train_eps = train_cmd->add_option("--adam-epsilon", train_args.adam_epsilon,
                                          "Adam epsilon");
  auto* train_seed = train_cmd->add_option("--seed", train_args.seed, "Top-level seed");
  train_cmd->add_flag("--quiet", train_args.quiet, "No per-epoch progress on stderr");

  EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Run feasibility evaluation");
  auto* eval_test = eval_cmd->add_option("--test", eval_args.test, "Test dataset");
  auto* eval_est = eval_cmd->add_option("--estimator", eval_args.estimators,
                                        "rnd, a model path, or label=path (repeatable)");
  auto* eval_levels = eval_cmd->add_option("--eval-level", eval_args.levels,
                                           "none, rows or rowscols (repeatable)");
  auto* eval_seed = eval_cmd->add_option("--seed", eval_args.seed, "Top-level seed");
  auto* eval_out = eval_cmd->add_option("--out-dir", eval_args.out_dir, "Report directory");
  auto* eval_cap = eval_cmd->add_option("--max-per-fill", eval_args.max_per_fill,
                                        "Evaluate at most this many examples per fill level");
  auto* eval_nodes = eval_cmd->add_option("--node-limit", eval_args.node_limit,
                                          "Completion search node budget");
  auto* eval_blo = eval_cmd->add_option("--band-lo", eval_args.band_lo, "Summary band start");
  auto* eval_bhi = eval_cmd->add_option("--band-hi", eval_args.band_hi, "Summary band end");

  ReportArgs report_args;
  CLI::App* report_cmd = app.add_subcommand("report", "Merge report CSVs into one table");
  report_cmd->add_option("inputs", report_args.inputs, "Report CSV files");
  auto* report_blo = report_cmd->add_option("--band-lo", report_args.band_lo, "Band start");
  auto* report_bhi = report_cmd->add_option("--band-hi", report_args.band_hi, "Band end");
  auto* report_out = report_cmd->add_option("--out", report_args.out, "Merged CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!config_path.empty()) g_config = load_config(config_path);

    config_fallback(nullptr, "", "jobs", jobs);
    if (jobs > 0) omp_set_num_threads(jobs);

    if (gen->parsed()) {
      config_fallback(gen_n, "gen_pool", "n", gen_args.n);
      config_fallback(gen_count, "gen_pool", "count", gen_args.count);
      config_fallback(gen_seed, "gen_pool", "seed", gen_args.seed);
      config_fallback(gen_out, "gen_pool", "out", gen_args.out);
      run_gen_pool(gen_args);
    } else if (build->parsed()) {
      config_fallback(build_pool, "build_dataset", "pool", build_args.pool);
      config_fallback(build_passes, "build_dataset", "passes", build_args.passes);
      config_fallback(build_seed, "build_dataset", "seed", build_args.seed);
      config_fallback(build_fraction, "build_dataset", "test_fraction", build_args.test_fraction);
      config_fallback(build_out, "build_dataset", "out", build_args.out);
      run_build_dataset(build_args);
    } else if (train_cmd->parsed()) {
      config_fallback(train_dataset, "train", "dataset", train_args.dataset);
      config_fallback(train_out, "train", "out", train_args.out);
      config_fallback(train_log, "train", "log", train_args.log);
      config_fallback(train_regime, "train", "regime", train_args.regime);
      config_fallback(train_lambda, "train", "lambda", train_args.lambda);
      config_fallback(train_level, "train", "level", train_args.level);
      config_fallback(train_epochs, "train", "epochs", train_args.epochs);
      config_fallback(train_batch, "train", "batch_size", train_args.batch_size);
      config_fallback(train_hidden, "train", "hidden", train_args.hidden);
      config_fallback(train_step, "train", "adam_step", train_args.adam_step);
      config_fallback(train_b1, "train", "adam_beta1", train_args.adam_beta1);
      config_fallback(train_b2, "train", "adam_beta2", train_args.adam_beta2);
      config_fallback(train_eps, "train", "adam_epsilon", train_args.adam_epsilon);
      config_fallback(train_seed, "train", "seed", train_args.seed);
      run_train(train_args);
    } else if (eval_cmd->parsed()) {
      config_fallback(eval_test, "evaluate", "test", eval_args.test);
      config_fallback(eval_est, "evaluate", "estimators", eval_args.estimators);
      config_fallback(eval_levels, "evaluate", "eval_levels", eval_args.levels);
      config_fallback(eval_seed, "evaluate", "seed", eval_args.seed);
      config_fallback(eval_out, "evaluate", "out_dir", eval_args.out_dir);
      config_fallback(eval_cap, "evaluate", "max_per_fill", eval_args.max_per_fill);
      config_fallback(eval_nodes, "evaluate", "node_limit", eval_args.node_limit);
      config_fallback(eval_blo, "evaluate", "band_lo", eval_args.band_lo);
      config_fallback(eval_bhi, "evaluate", "band_hi", eval_args.band_hi);
      run_evaluate(eval_args);
    } else if (report_cmd->parsed()) {
      config_fallback(report_blo, "report", "band_lo", report_args.band_lo);
      config_fallback(report_bhi, "report", "band_hi", report_args.band_hi);
      config_fallback(report_out, "report", "out", report_args.out);
      run_report(report_args);
    }
  } catch (const pls::config_error& e) {
    std::cerr << "pls: error [config]: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "pls: error [config]: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "pls: error [config]: " << e.what() << '\n';
    return 2;
  } catch (const pls::io_error& e) {
    std::cerr << "pls: error [io]: " << e.what() << '\n';
    return 3;
  } catch (const pls::parse_error& e) {
    std::cerr << "pls: error [parse]: " << e.what() << '\n';
    return 4;
  } catch (const pls::resource_error& e) {
    std::cerr << "pls: error [resource]: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "pls: error [internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
