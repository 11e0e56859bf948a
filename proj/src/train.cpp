#include "pls/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "pls/errors.hpp"
#include "pls/kernels.hpp"
#include "pls/rng.hpp"

namespace pls {

TrainConfig regime_config(const std::string& regime) {
  TrainConfig config;
  if (regime == "agn") {
    config.lambda = 0.0;
    config.level = KnowledgeLevel::None;
  } else if (regime == "rows") {
    config.lambda = 0.01;
    config.level = KnowledgeLevel::Rows;
  } else if (regime == "full") {
    config.lambda = 1.0;
    config.level = KnowledgeLevel::RowsCols;
  } else {
    throw config_error("unknown regime: " + regime + " (expected agn, rows or full)");
  }
  return config;
}

template <class T>
void adam_step(Mlp<T>& model, const Gradients<T>& grads, AdamState<T>& state,
               const AdamParams& params) {
  const std::size_t count = model.parameter_count();
  if (state.first_moment.empty()) {
    state.first_moment.assign(count, T(0));
    state.second_moment.assign(count, T(0));
  }
  if (state.first_moment.size() != count) {
    throw std::invalid_argument("optimizer state does not match the model");
  }
  ++state.step_count;
  const T beta1 = static_cast<T>(params.beta1);
  const T beta2 = static_cast<T>(params.beta2);
  const T eps = static_cast<T>(params.epsilon);
  const T correction1 =
      static_cast<T>(1.0 / (1.0 - std::pow(params.beta1, static_cast<double>(state.step_count))));
  const T correction2 =
      static_cast<T>(1.0 / (1.0 - std::pow(params.beta2, static_cast<double>(state.step_count))));
  const T step = static_cast<T>(params.step);

  std::size_t offset = 0;
  auto update = [&](T* params_ptr, const T* grad_ptr, std::size_t size) {
    T* m = state.first_moment.data() + offset;
    T* v = state.second_moment.data() + offset;
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(size); ++i) {
      const T g = grad_ptr[i];
      m[i] = beta1 * m[i] + (T(1) - beta1) * g;
      v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
      const T mhat = m[i] * correction1;
      const T vhat = v[i] * correction2;
      params_ptr[i] -= step * mhat / (std::sqrt(vhat) + eps);
    }
    offset += size;
  };
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    update(model.layers()[l].w.data(), grads.layers[l].w.data(), grads.layers[l].w.size());
    update(model.layers()[l].b.data(), grads.layers[l].b.data(), grads.layers[l].b.size());
  }
}

Mlp<float> train(const Dataset& train_set, const TrainConfig& config,
                 std::vector<EpochStats>* stats, std::ostream* progress) {
  if (train_set.count() == 0) {
    throw std::invalid_argument("training requires a non-empty dataset");
  }
  if (config.epochs < 1 || config.batch_size < 1) {
    throw std::invalid_argument("epochs and batch size must be positive");
  }
  const int m = train_set.shape().m();
  Mlp<float> model = Mlp<float>::he_uniform_init(m, config.hidden, m, config.init_seed);

  // Masks depend only on (x, level); compute them once.
  std::optional<batch::MaskTable> masks;
  if (config.lambda != 0.0 && config.level != KnowledgeLevel::None) {
    masks = batch::MaskTable::build(train_set, config.level);
  }

  AdamState<float> state;
  Gradients<float> grads = Gradients<float>::zeros_like(model);
  std::vector<std::uint32_t> ids(train_set.count());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(i);

  const auto count = train_set.count();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng::Stream shuffle_stream(
        rng::derive(config.shuffle_seed, "epoch", static_cast<std::uint64_t>(epoch)));
    shuffle_stream.shuffle(ids.begin(), ids.end());

    double epoch_ce = 0.0;
    double epoch_sbr = 0.0;
    for (std::size_t start = 0; start < count; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t size = std::min<std::size_t>(config.batch_size, count - start);
      grads.reset();
      const LossTerms sums = batch::accumulate_gradient(
          model, train_set, {ids.data() + start, size},
          masks ? &*masks : nullptr, static_cast<float>(config.lambda),
          static_cast<float>(config.crossentropy_weight), grads, config.gradient_chunk);
      adam_step(model, grads, state, config.adam);
      epoch_ce += sums.crossentropy;
      epoch_sbr += sums.sbr;
    }

    EpochStats entry;
    entry.epoch = epoch;
    entry.mean_crossentropy = epoch_ce / static_cast<double>(count);
    entry.mean_sbr = epoch_sbr / static_cast<double>(count);
    entry.mean_loss = config.crossentropy_weight * entry.mean_crossentropy +
                      config.lambda * entry.mean_sbr;
    if (stats != nullptr) stats->push_back(entry);
    if (progress != nullptr) {
      *progress << "epoch " << epoch << " loss " << entry.mean_loss
                << " ce " << entry.mean_crossentropy << " sbr " << entry.mean_sbr
                << std::endl;
    }
  }
  return model;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochStats>& stats,
                        const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  for (const auto& [key, value] : metadata) {
    out << "# " << key << "=" << value << '\n';
  }
  out << "epoch,loss,crossentropy,sbr\n";
  char line[160];
  for (const EpochStats& entry : stats) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", entry.epoch,
                  entry.mean_loss, entry.mean_crossentropy, entry.mean_sbr);
    out << line;
  }
  if (!out.flush()) throw io_error("failed writing " + path.string());
}

template void adam_step(Mlp<float>&, const Gradients<float>&, AdamState<float>&,
                        const AdamParams&);
template void adam_step(Mlp<double>&, const Gradients<double>&, AdamState<double>&,
                        const AdamParams&);

}  // namespace pls
