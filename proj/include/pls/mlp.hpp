#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pls/grid.hpp"
#include "pls/propagate.hpp"

namespace pls {

// Floor applied inside every log of the crossentropy term.
inline constexpr double kLogFloor = 1e-12;

template <class T>
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<T> w;  // row-major [in][out]
  std::vector<T> b;  // [out]
};

// Dense feed-forward network: affine+ReLU hidden layers, affine+sigmoid
// output, so outputs always lie in (0, 1).
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input_dim, std::vector<Layer<T>> layers);

  // ReLU-scaled uniform init (limit sqrt(6/fan_in)) for hidden layers and a
  // small symmetric uniform init for the output layer; zero biases.
  static Mlp he_uniform_init(int input_dim, std::span<const int> hidden,
                             int output_dim, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  std::size_t parameter_count() const;

 private:
  int input_dim_ = 0;
  std::vector<Layer<T>> layers_;
};

template <class T>
std::vector<T> forward(const Mlp<T>& model, std::span<const T> x);

template <class T>
std::vector<T> forward(const Mlp<T>& model, const PartialAssignment& x);

using ScoreVector = std::vector<float>;

// Sum of the scores, the normalization constant of the crossentropy term.
template <class T>
double partition_sum(std::span<const T> scores);

// scores / partition_sum; sums to 1 whenever the partition sum is positive.
template <class T>
std::vector<double> normalized(std::span<const T> scores);

struct LossTerms {
  double crossentropy = 0.0;  // H(f/Z, y)
  double sbr = 0.0;           // sum_j (C_j - f_j)^2

  double total(double lambda) const { return crossentropy + lambda * sbr; }
};

// Mask bits may come from a FeasibilityMask or any equal-length 0/1 vector.
template <class T>
double sbr_loss(std::span<const T> scores, std::span<const std::uint8_t> mask_bits);

template <class T>
double sbr_loss(std::span<const T> scores, const FeasibilityMask& mask) {
  return sbr_loss(scores, std::span<const std::uint8_t>(mask.bits()));
}

template <class T>
LossTerms loss_terms(std::span<const T> scores, std::int32_t y,
                     std::span<const std::uint8_t> mask_bits);

template <class T>
LossTerms loss_terms(std::span<const T> scores, std::int32_t y,
                     const FeasibilityMask& mask) {
  return loss_terms(scores, y, std::span<const std::uint8_t>(mask.bits()));
}

template <class T>
double total_loss(std::span<const T> scores, std::int32_t y,
                  std::span<const std::uint8_t> mask_bits, double lambda);

template <class T>
double total_loss(std::span<const T> scores, std::int32_t y,
                  const FeasibilityMask& mask, double lambda) {
  return total_loss(scores, y, std::span<const std::uint8_t>(mask.bits()), lambda);
}

template <class T>
struct Gradients {
  std::vector<Layer<T>> layers;  // same shapes as the model

  static Gradients zeros_like(const Mlp<T>& model);
  void reset();
};

// Reference single-example loss and gradient: the plain per-example path the
// OpenMP batch kernels are checked against. Accumulates the unscaled
// gradient of ce_weight*H + lambda*L_sbr into `accum` and returns the raw
// loss terms. Empty mask_words means an all-ones mask.
template <class T>
LossTerms example_gradient(const Mlp<T>& model,
                           std::span<const std::int32_t> x_indices,
                           std::int32_t y,
                           std::span<const std::uint64_t> mask_words,
                           T lambda, T ce_weight, Gradients<T>& accum);

// PLSW model format, little-endian: magic "PLSW", version byte 0x01, layer
// count as u8, per layer rows and cols as u32 then row-major f32 weights and
// f32 biases, then a provenance trailer: n as u16, lambda as f32, knowledge
// level as u8, epochs as u32, init and shuffle seeds as u64.
struct ModelTrailer {
  int n = 0;
  float lambda = 0.0f;
  KnowledgeLevel level = KnowledgeLevel::None;
  std::uint32_t epochs = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
};

void write_model(std::ostream& out, const Mlp<float>& model, const ModelTrailer& trailer);
std::pair<Mlp<float>, ModelTrailer> read_model(std::istream& in);
void write_model_file(const std::filesystem::path& path, const Mlp<float>& model,
                      const ModelTrailer& trailer);
std::pair<Mlp<float>, ModelTrailer> read_model_file(const std::filesystem::path& path);

}  // namespace pls
