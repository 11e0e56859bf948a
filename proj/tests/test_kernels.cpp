#include <omp.h>

#include <cmath>
#include <vector>

#include "doctest.h"
#include "pls/datagen.hpp"
#include "pls/kernels.hpp"
#include "pls/mlp.hpp"
#include "pls/rng.hpp"
#include "pls/solver.hpp"

using namespace pls;

namespace {

Dataset small_dataset(int n, int solutions, std::uint64_t seed) {
  SolutionPool pool{GridShape(n), {}};
  for (int i = 0; i < solutions; ++i) {
    pool.solutions.push_back(generate_solution(
        GridShape(n), SearchConfig{rng::derive(seed, "sol", static_cast<std::uint64_t>(i)), 0}));
  }
  return build_dataset(pool, 2, seed, nullptr);
}

template <class T>
void fill_random(std::vector<T>& values, rng::Stream& stream, double scale) {
  for (T& v : values) v = static_cast<T>((2.0 * stream.next_unit() - 1.0) * scale);
}

}  // namespace

TEST_CASE("gemm kernels match plain triple loops") {
  rng::Stream stream(4);
  const int M = 37, N = 29, K = 23;
  std::vector<double> a(static_cast<std::size_t>(M) * K);
  std::vector<double> b(static_cast<std::size_t>(K) * N);
  fill_random(a, stream, 1.0);
  fill_random(b, stream, 1.0);
  // Some exact zeros to exercise the skip path.
  for (std::size_t i = 0; i < a.size(); i += 3) a[i] = 0.0;

  std::vector<double> c(static_cast<std::size_t>(M) * N, 0.5);
  std::vector<double> expected = c;
  batch::gemm_accum(M, N, K, a.data(), K, b.data(), N, c.data(), N);
  for (int i = 0; i < M; ++i) {
    for (int kk = 0; kk < K; ++kk) {
      for (int j = 0; j < N; ++j) {
        expected[static_cast<std::size_t>(i) * N + j] +=
            a[static_cast<std::size_t>(i) * K + kk] * b[static_cast<std::size_t>(kk) * N + j];
      }
    }
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }

  std::vector<double> ct(static_cast<std::size_t>(K) * N, -0.25);
  std::vector<double> expected_t = ct;
  batch::gemm_at_b_accum(K, N, M, a.data(), K, b.data(), N, ct.data(), N);
  // here: C[k][j] += sum_m A[m][k] * D[m][j], with D := b reinterpreted [M x N]
  std::vector<double> d(static_cast<std::size_t>(M) * N);
  fill_random(d, stream, 1.0);
  std::fill(ct.begin(), ct.end(), -0.25);
  expected_t.assign(ct.begin(), ct.end());
  batch::gemm_at_b_accum(K, N, M, a.data(), K, d.data(), N, ct.data(), N);
  for (int kk = 0; kk < K; ++kk) {
    for (int mm = 0; mm < M; ++mm) {
      for (int j = 0; j < N; ++j) {
        expected_t[static_cast<std::size_t>(kk) * N + j] +=
            a[static_cast<std::size_t>(mm) * K + kk] * d[static_cast<std::size_t>(mm) * N + j];
      }
    }
  }
  for (std::size_t i = 0; i < ct.size(); ++i) {
    CHECK(ct[i] == doctest::Approx(expected_t[i]).epsilon(1e-12));
  }
}

TEST_CASE("transpose round trips") {
  rng::Stream stream(9);
  const int R = 45, C = 70;
  std::vector<float> a(static_cast<std::size_t>(R) * C);
  fill_random(a, stream, 2.0);
  std::vector<float> t(a.size());
  std::vector<float> back(a.size());
  batch::transpose(R, C, a.data(), C, t.data(), R);
  batch::transpose(C, R, t.data(), R, back.data(), C);
  CHECK(a == back);
}

TEST_CASE("batch gradient matches the serial reference") {
  const Dataset data = small_dataset(3, 4, 21);
  REQUIRE(data.count() > 20);
  const int m = data.shape().m();

  for (const double lambda : {0.0, 1.0}) {
    const Mlp<double> model =
        Mlp<double>::he_uniform_init(m, std::vector<int>{16, 12}, m, 77);
    const batch::MaskTable masks = batch::MaskTable::build(data, KnowledgeLevel::RowsCols);

    std::vector<std::uint32_t> ids;
    for (std::uint32_t i = 0; i < data.count(); ++i) ids.push_back(i);

    Gradients<double> from_batch = Gradients<double>::zeros_like(model);
    const LossTerms batch_terms = batch::accumulate_gradient<double>(
        model, data, ids, &masks, lambda, 1.0, from_batch, 7);

    Gradients<double> reference = Gradients<double>::zeros_like(model);
    LossTerms reference_terms;
    for (const std::uint32_t id : ids) {
      const LossTerms t = example_gradient<double>(
          model, data.x_indices(id), data.target(id), masks.mask(id), lambda, 1.0,
          reference);
      reference_terms.crossentropy += t.crossentropy;
      reference_terms.sbr += t.sbr;
    }

    CHECK(batch_terms.crossentropy ==
          doctest::Approx(reference_terms.crossentropy).epsilon(1e-10));
    CHECK(batch_terms.sbr == doctest::Approx(reference_terms.sbr).epsilon(1e-10));

    const double scale = 1.0 / static_cast<double>(ids.size());
    for (std::size_t l = 0; l < reference.layers.size(); ++l) {
      for (std::size_t i = 0; i < reference.layers[l].w.size(); ++i) {
        CHECK(from_batch.layers[l].w[i] ==
              doctest::Approx(reference.layers[l].w[i] * scale).epsilon(1e-9));
      }
      for (std::size_t i = 0; i < reference.layers[l].b.size(); ++i) {
        CHECK(from_batch.layers[l].b[i] ==
              doctest::Approx(reference.layers[l].b[i] * scale).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("batch gradient is bitwise thread-count invariant") {
  const Dataset data = small_dataset(4, 3, 33);
  const int m = data.shape().m();
  const Mlp<float> model = Mlp<float>::he_uniform_init(m, std::vector<int>{24, 24}, m, 5);
  const batch::MaskTable masks = batch::MaskTable::build(data, KnowledgeLevel::Rows);
  std::vector<std::uint32_t> ids;
  for (std::uint32_t i = 0; i < data.count(); ++i) ids.push_back(i);

  auto run_with_threads = [&](int threads) {
    Gradients<float> grads = Gradients<float>::zeros_like(model);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(threads);
    batch::accumulate_gradient<float>(model, data, ids, &masks, 0.01f, 1.0f, grads, 16);
    omp_set_num_threads(saved);
    return grads;
  };

  const Gradients<float> one = run_with_threads(1);
  const Gradients<float> two = run_with_threads(2);
  for (std::size_t l = 0; l < one.layers.size(); ++l) {
    CHECK(one.layers[l].w == two.layers[l].w);  // exact equality
    CHECK(one.layers[l].b == two.layers[l].b);
  }
}

TEST_CASE("sigmoid kernel matches the scalar definition") {
  rng::Stream stream(3);
  std::vector<float> values(4097);
  fill_random(values, stream, 8.0);
  std::vector<float> expected = values;
  batch::sigmoid_inplace(values.data(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double want = 1.0 / (1.0 + std::exp(-static_cast<double>(expected[i])));
    CHECK(static_cast<double>(values[i]) == doctest::Approx(want).epsilon(1e-5));
  }
}
