#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pls/datagen.hpp"
#include "pls/mlp.hpp"
#include "pls/propagate.hpp"

// OpenMP batch kernels used by the training loop. Every kernel is bitwise
// deterministic and independent of the number of threads: each output
// element is always accumulated in the same order, and parallelism only
// splits work across output elements or examples.
namespace pls::batch {

// Packed propagator masks for a whole dataset at one knowledge level,
// computed once and reused across epochs.
class MaskTable {
 public:
  static MaskTable build(const Dataset& data, KnowledgeLevel level);

  std::span<const std::uint64_t> mask(std::size_t example) const {
    return {words_.data() + example * static_cast<std::size_t>(words_per_example_),
            static_cast<std::size_t>(words_per_example_)};
  }
  int words_per_example() const { return words_per_example_; }

 private:
  int words_per_example_ = 0;
  std::vector<std::uint64_t> words_;
};

// C[MxN] += A[MxK] * B[KxN], all row-major.
template <class T>
void gemm_accum(int m, int n, int k, const T* a, int lda, const T* b, int ldb,
                T* c, int ldc);

// C[KxN] += A^T * D where A is [MxK] and D is [MxN], all row-major.
template <class T>
void gemm_at_b_accum(int k, int n, int m, const T* a, int lda, const T* d,
                     int ldd, T* c, int ldc);

template <class T>
void transpose(int rows, int cols, const T* a, int lda, T* out, int ldo);

// Elementwise logistic sigmoid; lives in its own translation unit so the
// exp calls vectorize.
void sigmoid_inplace(float* values, std::size_t count);
void sigmoid_inplace(double* values, std::size_t count);

// Batch gradient of ce_weight*H + lambda*L_sbr, averaged over `ids` and
// accumulated into `out`. Returns the summed (not averaged) loss terms.
// A null mask table means an all-ones mask for every example.
template <class T>
LossTerms accumulate_gradient(const Mlp<T>& model, const Dataset& data,
                              std::span<const std::uint32_t> ids,
                              const MaskTable* masks, T lambda, T ce_weight,
                              Gradients<T>& out, int chunk_size = 256);

}  // namespace pls::batch
