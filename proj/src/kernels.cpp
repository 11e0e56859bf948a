#include "pls/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pls::batch {

MaskTable MaskTable::build(const Dataset& data, KnowledgeLevel level) {
  MaskTable table;
  table.words_per_example_ = mask_words_per_example(data.shape());
  table.words_.resize(static_cast<std::size_t>(table.words_per_example_) * data.count());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.count()); ++i) {
    forward_check_packed(
        data.shape(), data.x_indices(static_cast<std::size_t>(i)), level,
        {table.words_.data() + static_cast<std::size_t>(i) * table.words_per_example_,
         static_cast<std::size_t>(table.words_per_example_)});
  }
  return table;
}

template <class T>
void gemm_accum(int m, int n, int k, const T* a, int lda, const T* b, int ldb,
                T* c, int ldc) {
  constexpr int kRowBlock = 4;
  constexpr int kDepthBlock = 256;
#pragma omp parallel for schedule(static)
  for (int i0 = 0; i0 < m; i0 += kRowBlock) {
    const int ilim = std::min(m, i0 + kRowBlock);
    for (int k0 = 0; k0 < k; k0 += kDepthBlock) {
      const int klim = std::min(k, k0 + kDepthBlock);
      for (int kk = k0; kk < klim; ++kk) {
        const T* brow = b + static_cast<std::size_t>(kk) * ldb;
        for (int i = i0; i < ilim; ++i) {
          const T aik = a[static_cast<std::size_t>(i) * lda + kk];
          if (aik == T(0)) continue;  // ReLU planes are mostly zeros
          T* crow = c + static_cast<std::size_t>(i) * ldc;
#pragma omp simd
          for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
      }
    }
  }
}

template <class T>
void gemm_at_b_accum(int k, int n, int m, const T* a, int lda, const T* d,
                     int ldd, T* c, int ldc) {
  constexpr int kExampleBlock = 64;
  // Example blocks stay sequential so every C element sees ascending
  // example order; threads split the rows of C.
  for (int m0 = 0; m0 < m; m0 += kExampleBlock) {
    const int mlim = std::min(m, m0 + kExampleBlock);
#pragma omp parallel for schedule(static)
    for (int kk = 0; kk < k; ++kk) {
      T* crow = c + static_cast<std::size_t>(kk) * ldc;
      for (int mm = m0; mm < mlim; ++mm) {
        const T amk = a[static_cast<std::size_t>(mm) * lda + kk];
        if (amk == T(0)) continue;
        const T* drow = d + static_cast<std::size_t>(mm) * ldd;
#pragma omp simd
        for (int j = 0; j < n; ++j) crow[j] += amk * drow[j];
      }
    }
  }
}

template <class T>
void transpose(int rows, int cols, const T* a, int lda, T* out, int ldo) {
  constexpr int kTile = 32;
#pragma omp parallel for collapse(2) schedule(static)
  for (int r0 = 0; r0 < rows; r0 += kTile) {
    for (int c0 = 0; c0 < cols; c0 += kTile) {
      const int rlim = std::min(rows, r0 + kTile);
      const int clim = std::min(cols, c0 + kTile);
      for (int r = r0; r < rlim; ++r) {
        for (int c = c0; c < clim; ++c) {
          out[static_cast<std::size_t>(c) * ldo + r] = a[static_cast<std::size_t>(r) * lda + c];
        }
      }
    }
  }
}

namespace {

// Per-chunk planes; sized for the largest chunk once and reused.
template <class T>
struct ChunkBuffers {
  std::vector<std::vector<T>> acts;    // one plane per layer
  std::vector<std::vector<T>> deltas;  // one plane per layer
  std::vector<std::vector<T>> wt;      // transposed weights, layers 1..L-1
  std::vector<double> ce_terms;
  std::vector<double> sbr_terms;
  std::vector<int> csr_counts;
  std::vector<int> csr_offsets;
  std::vector<int> csr_rows;
};

}  // namespace

template <class T>
LossTerms accumulate_gradient(const Mlp<T>& model, const Dataset& data,
                              std::span<const std::uint32_t> ids,
                              const MaskTable* masks, T lambda, T ce_weight,
                              Gradients<T>& out, int chunk_size) {
  const auto& layers = model.layers();
  const std::size_t depth = layers.size();
  if (depth < 2) throw std::invalid_argument("batch path expects at least two layers");
  if (model.input_dim() != data.shape().m() || model.output_dim() != data.shape().m()) {
    throw std::invalid_argument("model width does not match the dataset");
  }
  if (out.layers.size() != depth) {
    throw std::invalid_argument("gradient holder does not match the model");
  }
  if (chunk_size < 1) throw std::invalid_argument("chunk size must be positive");

  const int m_out = layers[depth - 1].out;
  const T scale = T(1) / static_cast<T>(ids.size());

  ChunkBuffers<T> buf;
  buf.acts.resize(depth);
  buf.deltas.resize(depth);
  buf.wt.resize(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    buf.acts[l].resize(static_cast<std::size_t>(chunk_size) * layers[l].out);
    buf.deltas[l].resize(static_cast<std::size_t>(chunk_size) * layers[l].out);
    if (l > 0) {
      buf.wt[l].resize(layers[l].w.size());
      transpose(layers[l].in, layers[l].out, layers[l].w.data(), layers[l].out,
                buf.wt[l].data(), layers[l].in);
    }
  }
  buf.ce_terms.resize(static_cast<std::size_t>(chunk_size));
  buf.sbr_terms.resize(static_cast<std::size_t>(chunk_size));
  buf.csr_counts.resize(static_cast<std::size_t>(model.input_dim()));
  buf.csr_offsets.resize(static_cast<std::size_t>(model.input_dim()) + 1);

  LossTerms sums;
  for (std::size_t start = 0; start < ids.size(); start += static_cast<std::size_t>(chunk_size)) {
    const int rows = static_cast<int>(
        std::min<std::size_t>(chunk_size, ids.size() - start));
    const std::uint32_t* chunk_ids = ids.data() + start;

    // Layer 0: sparse input, gather rows of W then bias and ReLU.
    {
      const Layer<T>& layer = layers[0];
      T* plane = buf.acts[0].data();
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        T* zrow = plane + static_cast<std::size_t>(r) * layer.out;
        std::copy(layer.b.begin(), layer.b.end(), zrow);
        for (const std::int32_t idx : data.x_indices(chunk_ids[r])) {
          const T* wrow = layer.w.data() + static_cast<std::size_t>(idx) * layer.out;
#pragma omp simd
          for (int j = 0; j < layer.out; ++j) zrow[j] += wrow[j];
        }
        for (int j = 0; j < layer.out; ++j) zrow[j] = zrow[j] > T(0) ? zrow[j] : T(0);
      }
    }

    // Hidden and output layers.
    for (std::size_t l = 1; l < depth; ++l) {
      const Layer<T>& layer = layers[l];
      T* plane = buf.acts[l].data();
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        std::copy(layer.b.begin(), layer.b.end(),
                  plane + static_cast<std::size_t>(r) * layer.out);
      }
      gemm_accum(rows, layer.out, layer.in, buf.acts[l - 1].data(), layers[l - 1].out,
                 layer.w.data(), layer.out, plane, layer.out);
      if (l + 1 == depth) {
        sigmoid_inplace(plane, static_cast<std::size_t>(rows) * layer.out);
      } else {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
          T* zrow = plane + static_cast<std::size_t>(r) * layer.out;
#pragma omp simd
          for (int j = 0; j < layer.out; ++j) zrow[j] = zrow[j] > T(0) ? zrow[j] : T(0);
        }
      }
    }

    // Loss terms and the scaled output delta.
    {
      const T* f_plane = buf.acts[depth - 1].data();
      T* d_plane = buf.deltas[depth - 1].data();
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        const std::uint32_t id = chunk_ids[r];
        const T* frow = f_plane + static_cast<std::size_t>(r) * m_out;
        T* drow = d_plane + static_cast<std::size_t>(r) * m_out;
        const std::uint64_t* mask_words =
            masks != nullptr ? masks->mask(id).data() : nullptr;
        const std::int32_t y = data.target(id);

        double z_sum = 0.0;
        for (int j = 0; j < m_out; ++j) z_sum += static_cast<double>(frow[j]);
        const T fy = frow[y];
        const T inv_z = z_sum > kLogFloor ? static_cast<T>(1.0 / z_sum) : T(0);
        const T inv_fy = static_cast<double>(fy) > kLogFloor ? T(1) / fy : T(0);

        double sbr = 0.0;
        for (int j = 0; j < m_out; ++j) {
          const T fj = frow[j];
          const T cj = mask_words == nullptr
                           ? T(1)
                           : T((mask_words[j >> 6] >> (j & 63)) & 1u);
          const double diff = static_cast<double>(cj) - static_cast<double>(fj);
          sbr += diff * diff;
          T g = ce_weight * inv_z + T(2) * lambda * (fj - cj);
          if (j == y) g -= ce_weight * inv_fy;
          drow[j] = scale * g * fj * (T(1) - fj);
        }
        buf.sbr_terms[static_cast<std::size_t>(r)] = sbr;
        buf.ce_terms[static_cast<std::size_t>(r)] =
            -std::log(std::max(static_cast<double>(fy), kLogFloor)) +
            std::log(std::max(z_sum, kLogFloor));
      }
      for (int r = 0; r < rows; ++r) {
        sums.crossentropy += buf.ce_terms[static_cast<std::size_t>(r)];
        sums.sbr += buf.sbr_terms[static_cast<std::size_t>(r)];
      }
    }

    // Backward pass: weight and bias gradients, then the previous delta.
    for (std::size_t l = depth; l-- > 1;) {
      const Layer<T>& layer = layers[l];
      Layer<T>& grad = out.layers[l];
      const T* d_plane = buf.deltas[l].data();
      gemm_at_b_accum(layer.in, layer.out, rows, buf.acts[l - 1].data(), layer.in,
                      d_plane, layer.out, grad.w.data(), layer.out);
      for (int r = 0; r < rows; ++r) {
        const T* drow = d_plane + static_cast<std::size_t>(r) * layer.out;
#pragma omp simd
        for (int j = 0; j < layer.out; ++j) grad.b[static_cast<std::size_t>(j)] += drow[j];
      }
      // delta[l-1] = delta[l] * W^T, masked by ReLU support.
      T* prev_plane = buf.deltas[l - 1].data();
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        std::fill_n(prev_plane + static_cast<std::size_t>(r) * layer.in, layer.in, T(0));
      }
      gemm_accum(rows, layer.in, layer.out, d_plane, layer.out, buf.wt[l].data(),
                 layer.in, prev_plane, layer.in);
      const T* a_plane = buf.acts[l - 1].data();
#pragma omp parallel for schedule(static)
      for (int r = 0; r < rows; ++r) {
        const T* arow = a_plane + static_cast<std::size_t>(r) * layer.in;
        T* drow = prev_plane + static_cast<std::size_t>(r) * layer.in;
#pragma omp simd
        for (int j = 0; j < layer.in; ++j) {
          drow[j] = arow[j] > T(0) ? drow[j] : T(0);
        }
      }
    }

    // Layer 0: scatter delta rows into the touched weight rows. The rows
    // hitting one weight row are visited in ascending chunk order.
    {
      const Layer<T>& layer = layers[0];
      Layer<T>& grad = out.layers[0];
      const T* d_plane = buf.deltas[0].data();
      const int width = model.input_dim();
      std::fill(buf.csr_counts.begin(), buf.csr_counts.end(), 0);
      for (int r = 0; r < rows; ++r) {
        for (const std::int32_t idx : data.x_indices(chunk_ids[r])) {
          ++buf.csr_counts[static_cast<std::size_t>(idx)];
        }
      }
      buf.csr_offsets[0] = 0;
      for (int j = 0; j < width; ++j) {
        buf.csr_offsets[static_cast<std::size_t>(j) + 1] =
            buf.csr_offsets[static_cast<std::size_t>(j)] + buf.csr_counts[static_cast<std::size_t>(j)];
      }
      buf.csr_rows.resize(static_cast<std::size_t>(buf.csr_offsets[static_cast<std::size_t>(width)]));
      std::vector<int> cursor(buf.csr_offsets.begin(), buf.csr_offsets.end() - 1);
      for (int r = 0; r < rows; ++r) {
        for (const std::int32_t idx : data.x_indices(chunk_ids[r])) {
          buf.csr_rows[static_cast<std::size_t>(cursor[static_cast<std::size_t>(idx)]++)] = r;
        }
      }
#pragma omp parallel for schedule(static)
      for (int j = 0; j < width; ++j) {
        T* grow = grad.w.data() + static_cast<std::size_t>(j) * layer.out;
        for (int p = buf.csr_offsets[static_cast<std::size_t>(j)];
             p < buf.csr_offsets[static_cast<std::size_t>(j) + 1]; ++p) {
          const T* drow = d_plane + static_cast<std::size_t>(buf.csr_rows[static_cast<std::size_t>(p)]) * layer.out;
#pragma omp simd
          for (int q = 0; q < layer.out; ++q) grow[q] += drow[q];
        }
      }
      for (int r = 0; r < rows; ++r) {
        const T* drow = d_plane + static_cast<std::size_t>(r) * layer.out;
#pragma omp simd
        for (int j = 0; j < layer.out; ++j) grad.b[static_cast<std::size_t>(j)] += drow[j];
      }
    }
  }
  return sums;
}

template void gemm_accum(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_accum(int, int, int, const double*, int, const double*, int, double*, int);
template void gemm_at_b_accum(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_at_b_accum(int, int, int, const double*, int, const double*, int, double*, int);
template void transpose(int, int, const float*, int, float*, int);
template void transpose(int, int, const double*, int, double*, int);
template LossTerms accumulate_gradient(const Mlp<float>&, const Dataset&,
                                       std::span<const std::uint32_t>, const MaskTable*,
                                       float, float, Gradients<float>&, int);
template LossTerms accumulate_gradient(const Mlp<double>&, const Dataset&,
                                       std::span<const std::uint32_t>, const MaskTable*,
                                       double, double, Gradients<double>&, int);

}  // namespace pls::batch
