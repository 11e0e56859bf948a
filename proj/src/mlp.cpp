#include "pls/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "pls/errors.hpp"
#include "pls/rng.hpp"

namespace pls {

namespace {

template <class T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

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

void put_f32(std::ostream& out, float value) {
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(value));
  std::memcpy(&bits, &value, sizeof(bits));
  put_le(out, bits);
}

float get_f32(std::istream& in, const char* what) {
  const std::uint32_t bits = get_le<std::uint32_t>(in, what);
  float value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

template <class T>
bool mask_bit(std::span<const std::uint64_t> words, int j) {
  return words.empty() || ((words[static_cast<std::size_t>(j >> 6)] >> (j & 63)) & 1u);
}

}  // namespace

template <class T>
Mlp<T>::Mlp(int input_dim, std::vector<Layer<T>> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  int width = input_dim;
  for (const Layer<T>& layer : layers_) {
    if (layer.in != width ||
        layer.w.size() != static_cast<std::size_t>(layer.in) * layer.out ||
        layer.b.size() != static_cast<std::size_t>(layer.out)) {
      throw std::invalid_argument("layer dimensions do not chain");
    }
    width = layer.out;
  }
}

template <class T>
Mlp<T> Mlp<T>::he_uniform_init(int input_dim, std::span<const int> hidden,
                               int output_dim, std::uint64_t seed) {
  if (input_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("network needs positive input and output widths");
  }
  std::vector<Layer<T>> layers;
  int width = input_dim;
  const std::size_t layer_count = hidden.size() + 1;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const bool output_layer = l == hidden.size();
    const int out = output_layer ? output_dim : hidden[l];
    if (out < 1) throw std::invalid_argument("layer widths must be positive");
    Layer<T> layer;
    layer.in = width;
    layer.out = out;
    layer.w.resize(static_cast<std::size_t>(width) * out);
    layer.b.assign(static_cast<std::size_t>(out), T(0));
    const double limit =
        output_layer ? 0.01 : std::sqrt(6.0 / static_cast<double>(width));
    rng::Stream stream(rng::derive(seed, "init", static_cast<std::uint64_t>(l)));
    for (T& w : layer.w) {
      w = static_cast<T>((2.0 * stream.next_unit() - 1.0) * limit);
    }
    layers.push_back(std::move(layer));
    width = out;
  }
  return Mlp<T>(input_dim, std::move(layers));
}

template <class T>
std::size_t Mlp<T>::parameter_count() const {
  std::size_t count = 0;
  for (const Layer<T>& layer : layers_) count += layer.w.size() + layer.b.size();
  return count;
}

template <class T>
std::vector<T> forward(const Mlp<T>& model, std::span<const T> x) {
  if (x.size() != static_cast<std::size_t>(model.input_dim())) {
    throw std::invalid_argument("input width does not match the model");
  }
  std::vector<T> current(x.begin(), x.end());
  std::vector<T> next;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer<T>& layer = layers[l];
    next.assign(layer.b.begin(), layer.b.end());
    for (int i = 0; i < layer.in; ++i) {
      const T a = current[static_cast<std::size_t>(i)];
      if (a == T(0)) continue;
      const T* row = layer.w.data() + static_cast<std::size_t>(i) * layer.out;
      for (int j = 0; j < layer.out; ++j) next[static_cast<std::size_t>(j)] += a * row[j];
    }
    if (l + 1 == layers.size()) {
      for (T& z : next) z = sigmoid(z);
    } else {
      for (T& z : next) z = z > T(0) ? z : T(0);
    }
    current.swap(next);
  }
  return current;
}

template <class T>
std::vector<T> forward(const Mlp<T>& model, const PartialAssignment& x) {
  std::vector<T> dense(x.bits().size());
  for (std::size_t j = 0; j < dense.size(); ++j) dense[j] = static_cast<T>(x.bits()[j]);
  return forward(model, std::span<const T>(dense));
}

template <class T>
double partition_sum(std::span<const T> scores) {
  double z = 0.0;
  for (const T s : scores) z += static_cast<double>(s);
  return z;
}

template <class T>
std::vector<double> normalized(std::span<const T> scores) {
  const double z = partition_sum(scores);
  std::vector<double> p(scores.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = z > 0.0 ? static_cast<double>(scores[j]) / z : 0.0;
  }
  return p;
}

template <class T>
double sbr_loss(std::span<const T> scores, std::span<const std::uint8_t> mask_bits) {
  if (scores.size() != mask_bits.size()) {
    throw std::invalid_argument("score and mask lengths differ");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const double diff = static_cast<double>(mask_bits[j]) - static_cast<double>(scores[j]);
    sum += diff * diff;
  }
  return sum;
}

template <class T>
LossTerms loss_terms(std::span<const T> scores, std::int32_t y,
                     std::span<const std::uint8_t> mask_bits) {
  if (y < 0 || static_cast<std::size_t>(y) >= scores.size()) {
    throw std::out_of_range("target index out of range");
  }
  LossTerms terms;
  const double z = partition_sum(scores);
  terms.crossentropy = -std::log(std::max(static_cast<double>(scores[static_cast<std::size_t>(y)]), kLogFloor)) +
                       std::log(std::max(z, kLogFloor));
  terms.sbr = sbr_loss(scores, mask_bits);
  return terms;
}

template <class T>
double total_loss(std::span<const T> scores, std::int32_t y,
                  std::span<const std::uint8_t> mask_bits, double lambda) {
  return loss_terms(scores, y, mask_bits).total(lambda);
}

template <class T>
Gradients<T> Gradients<T>::zeros_like(const Mlp<T>& model) {
  Gradients g;
  for (const Layer<T>& layer : model.layers()) {
    Layer<T> zero;
    zero.in = layer.in;
    zero.out = layer.out;
    zero.w.assign(layer.w.size(), T(0));
    zero.b.assign(layer.b.size(), T(0));
    g.layers.push_back(std::move(zero));
  }
  return g;
}

template <class T>
void Gradients<T>::reset() {
  for (Layer<T>& layer : layers) {
    std::fill(layer.w.begin(), layer.w.end(), T(0));
    std::fill(layer.b.begin(), layer.b.end(), T(0));
  }
}

template <class T>
LossTerms example_gradient(const Mlp<T>& model,
                           std::span<const std::int32_t> x_indices,
                           std::int32_t y,
                           std::span<const std::uint64_t> mask_words,
                           T lambda, T ce_weight, Gradients<T>& accum) {
  const auto& layers = model.layers();
  const std::size_t depth = layers.size();
  if (depth == 0) throw std::invalid_argument("model has no layers");
  if (accum.layers.size() != depth) {
    throw std::invalid_argument("gradient holder does not match the model");
  }

  // Forward, keeping every post-activation plane. acts[l] is the output of
  // layer l; the sparse input is never densified.
  std::vector<std::vector<T>> acts(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer<T>& layer = layers[l];
    std::vector<T>& out = acts[l];
    out.assign(layer.b.begin(), layer.b.end());
    if (l == 0) {
      for (const std::int32_t idx : x_indices) {
        const T* row = layer.w.data() + static_cast<std::size_t>(idx) * layer.out;
        for (int j = 0; j < layer.out; ++j) out[static_cast<std::size_t>(j)] += row[j];
      }
    } else {
      const std::vector<T>& in = acts[l - 1];
      for (int i = 0; i < layer.in; ++i) {
        const T a = in[static_cast<std::size_t>(i)];
        if (a == T(0)) continue;
        const T* row = layer.w.data() + static_cast<std::size_t>(i) * layer.out;
        for (int j = 0; j < layer.out; ++j) out[static_cast<std::size_t>(j)] += a * row[j];
      }
    }
    if (l + 1 == depth) {
      for (T& z : out) z = sigmoid(z);
    } else {
      for (T& z : out) z = z > T(0) ? z : T(0);
    }
  }

  const std::vector<T>& f = acts[depth - 1];
  const int m = layers[depth - 1].out;
  if (y < 0 || y >= m) throw std::out_of_range("target index out of range");

  LossTerms terms;
  double z_sum = 0.0;
  for (const T fj : f) z_sum += static_cast<double>(fj);
  const T fy = f[static_cast<std::size_t>(y)];
  terms.crossentropy = -std::log(std::max(static_cast<double>(fy), kLogFloor)) +
                       std::log(std::max(z_sum, kLogFloor));

  const T inv_z = z_sum > kLogFloor ? static_cast<T>(1.0 / z_sum) : T(0);
  const T inv_fy = static_cast<double>(fy) > kLogFloor ? T(1) / fy : T(0);

  // Output delta through the sigmoid; the crossentropy couples every output
  // through the partition sum.
  std::vector<T> delta(static_cast<std::size_t>(m));
  double sbr = 0.0;
  for (int j = 0; j < m; ++j) {
    const T fj = f[static_cast<std::size_t>(j)];
    const T cj = mask_bit<T>(mask_words, j) ? T(1) : T(0);
    const double diff = static_cast<double>(cj) - static_cast<double>(fj);
    sbr += diff * diff;
    T g = ce_weight * inv_z + T(2) * lambda * (fj - cj);
    if (j == y) g -= ce_weight * inv_fy;
    delta[static_cast<std::size_t>(j)] = g * fj * (T(1) - fj);
  }
  terms.sbr = sbr;

  // Backward pass.
  std::vector<T> next_delta;
  for (std::size_t l = depth; l-- > 0;) {
    const Layer<T>& layer = layers[l];
    Layer<T>& grad = accum.layers[l];
    for (int j = 0; j < layer.out; ++j) {
      grad.b[static_cast<std::size_t>(j)] += delta[static_cast<std::size_t>(j)];
    }
    if (l == 0) {
      for (const std::int32_t idx : x_indices) {
        T* row = grad.w.data() + static_cast<std::size_t>(idx) * layer.out;
        for (int j = 0; j < layer.out; ++j) row[j] += delta[static_cast<std::size_t>(j)];
      }
      break;
    }
    const std::vector<T>& in = acts[l - 1];
    next_delta.assign(static_cast<std::size_t>(layer.in), T(0));
    for (int i = 0; i < layer.in; ++i) {
      const T a = in[static_cast<std::size_t>(i)];
      const T* wrow = layer.w.data() + static_cast<std::size_t>(i) * layer.out;
      T* grow = grad.w.data() + static_cast<std::size_t>(i) * layer.out;
      T back = T(0);
      for (int j = 0; j < layer.out; ++j) {
        const T d = delta[static_cast<std::size_t>(j)];
        grow[j] += a * d;
        back += wrow[j] * d;
      }
      // ReLU derivative: 1 where the activation is positive.
      next_delta[static_cast<std::size_t>(i)] = a > T(0) ? back : T(0);
    }
    delta.swap(next_delta);
  }
  return terms;
}

void write_model(std::ostream& out, const Mlp<float>& model, const ModelTrailer& trailer) {
  out.write("PLSW", 4);
  put_le<std::uint8_t>(out, 0x01);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(model.layers().size()));
  for (const Layer<float>& layer : model.layers()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(layer.in));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(layer.out));
    for (const float w : layer.w) put_f32(out, w);
    for (const float b : layer.b) put_f32(out, b);
  }
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(trailer.n));
  put_f32(out, trailer.lambda);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(trailer.level));
  put_le<std::uint32_t>(out, trailer.epochs);
  put_le<std::uint64_t>(out, trailer.init_seed);
  put_le<std::uint64_t>(out, trailer.shuffle_seed);
}

std::pair<Mlp<float>, ModelTrailer> read_model(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "PLSW") {
    throw parse_error("not a PLSW model file");
  }
  if (get_le<std::uint8_t>(in, "version") != 0x01) {
    throw parse_error("unsupported PLSW version");
  }
  const int layer_count = get_le<std::uint8_t>(in, "layer count");
  std::vector<Layer<float>> layers;
  for (int l = 0; l < layer_count; ++l) {
    Layer<float> layer;
    layer.in = static_cast<int>(get_le<std::uint32_t>(in, "layer rows"));
    layer.out = static_cast<int>(get_le<std::uint32_t>(in, "layer cols"));
    if (layer.in < 1 || layer.out < 1) throw parse_error("bad layer dimensions");
    layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
    for (float& w : layer.w) w = get_f32(in, "weight");
    layer.b.resize(static_cast<std::size_t>(layer.out));
    for (float& b : layer.b) b = get_f32(in, "bias");
    layers.push_back(std::move(layer));
  }
  if (layers.empty()) throw parse_error("model has no layers");
  ModelTrailer trailer;
  trailer.n = get_le<std::uint16_t>(in, "trailer n");
  trailer.lambda = get_f32(in, "trailer lambda");
  const auto level = get_le<std::uint8_t>(in, "trailer level");
  if (level > 2) throw parse_error("bad knowledge level in trailer");
  trailer.level = static_cast<KnowledgeLevel>(level);
  trailer.epochs = get_le<std::uint32_t>(in, "trailer epochs");
  trailer.init_seed = get_le<std::uint64_t>(in, "trailer init seed");
  trailer.shuffle_seed = get_le<std::uint64_t>(in, "trailer shuffle seed");
  const int input_dim = layers.front().in;
  try {
    return {Mlp<float>(input_dim, std::move(layers)), trailer};
  } catch (const std::invalid_argument& e) {
    throw parse_error(e.what());
  }
}

void write_model_file(const std::filesystem::path& path, const Mlp<float>& model,
                      const ModelTrailer& trailer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  write_model(out, model, trailer);
  if (!out.flush()) throw io_error("failed writing " + path.string());
}

std::pair<Mlp<float>, ModelTrailer> read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  return read_model(in);
}

template class Mlp<float>;
template class Mlp<double>;
template struct Gradients<float>;
template struct Gradients<double>;
template std::vector<float> forward(const Mlp<float>&, std::span<const float>);
template std::vector<double> forward(const Mlp<double>&, std::span<const double>);
template std::vector<float> forward(const Mlp<float>&, const PartialAssignment&);
template std::vector<double> forward(const Mlp<double>&, const PartialAssignment&);
template double partition_sum(std::span<const float>);
template double partition_sum(std::span<const double>);
template std::vector<double> normalized(std::span<const float>);
template std::vector<double> normalized(std::span<const double>);
template double sbr_loss(std::span<const float>, std::span<const std::uint8_t>);
template double sbr_loss(std::span<const double>, std::span<const std::uint8_t>);
template LossTerms loss_terms(std::span<const float>, std::int32_t, std::span<const std::uint8_t>);
template LossTerms loss_terms(std::span<const double>, std::int32_t, std::span<const std::uint8_t>);
template double total_loss(std::span<const float>, std::int32_t, std::span<const std::uint8_t>, double);
template double total_loss(std::span<const double>, std::int32_t, std::span<const std::uint8_t>, double);
template LossTerms example_gradient(const Mlp<float>&, std::span<const std::int32_t>,
                                    std::int32_t, std::span<const std::uint64_t>, float,
                                    float, Gradients<float>&);
template LossTerms example_gradient(const Mlp<double>&, std::span<const std::int32_t>,
                                    std::int32_t, std::span<const std::uint64_t>, double,
                                    double, Gradients<double>&);

}  // namespace pls
