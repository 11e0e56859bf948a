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

namespace pls {

struct AdamParams {
  double step = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

struct TrainConfig {
  double lambda = 0.0;
  KnowledgeLevel level = KnowledgeLevel::None;
  int epochs = 1000;
  int batch_size = 50000;
  AdamParams adam;
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 2;
  std::vector<int> hidden = {512, 512, 512};
  // Kept at 1 for every paper regime; the mask-only sanity checks set it to 0.
  double crossentropy_weight = 1.0;
  int gradient_chunk = 256;
};

// The regime presets: AGN is lambda 0 with no propagator, ROWS is
// lambda 0.01 with row knowledge, FULL is lambda 1 with rows and columns.
TrainConfig regime_config(const std::string& regime);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_crossentropy = 0.0;
  double mean_sbr = 0.0;
};

template <class T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::int64_t step_count = 0;
};

// One bias-corrected Adam update from batch-mean gradients.
template <class T>
void adam_step(Mlp<T>& model, const Gradients<T>& grads, AdamState<T>& state,
               const AdamParams& params);

// Full training loop: init, per-epoch shuffle, mini-batches (the trailing
// partial batch included), one Adam step per batch. Per-example propagator
// masks are precomputed once. Bitwise deterministic for a fixed config.
Mlp<float> train(const Dataset& train_set, const TrainConfig& config,
                 std::vector<EpochStats>* stats = nullptr,
                 std::ostream* progress = nullptr);

// Per-epoch loss log: '#' metadata preamble then epoch,loss,crossentropy,sbr.
void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochStats>& stats,
                        const std::map<std::string, std::string>& metadata);

}  // namespace pls
