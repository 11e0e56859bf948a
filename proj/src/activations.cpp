// Compiled with fast-math in CMake so the exp calls vectorize; the sigmoid
// is elementwise, so reassociation cannot change any result here.
#include <cmath>
#include <cstddef>

namespace pls::batch {

void sigmoid_inplace(float* values, std::size_t count) {
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    values[i] = 1.0f / (1.0f + std::exp(-values[i]));
  }
}

void sigmoid_inplace(double* values, std::size_t count) {
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    values[i] = 1.0 / (1.0 + std::exp(-values[i]));
  }
}

}  // namespace pls::batch
