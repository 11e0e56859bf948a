#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "pls/datagen.hpp"
#include "pls/mlp.hpp"
#include "pls/propagate.hpp"
#include "pls/rng.hpp"
#include "pls/solver.hpp"

using namespace pls;

namespace {

std::vector<std::uint64_t> packed(const FeasibilityMask& mask) {
  std::vector<std::uint64_t> words(static_cast<std::size_t>(mask_words_per_example(mask.shape())), 0);
  for (int j = 0; j < mask.shape().m(); ++j) {
    if (mask.test(j)) words[static_cast<std::size_t>(j >> 6)] |= 1ull << (j & 63);
  }
  return words;
}

// Central-difference gradient of ce_weight*H + lambda*L_sbr; the
// independent oracle the analytic backward pass is checked against.
Gradients<double> numeric_gradient(Mlp<double> model,
                                   const PartialAssignment& x, std::int32_t y,
                                   const FeasibilityMask& mask, double lambda,
                                   double ce_weight, double h) {
  Gradients<double> grads = Gradients<double>::zeros_like(model);
  auto loss_at = [&]() {
    const std::vector<double> f = forward(model, x);
    const LossTerms terms = loss_terms(std::span<const double>(f), y, mask);
    return ce_weight * terms.crossentropy + lambda * terms.sbr;
  };
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    auto probe = [&](std::vector<double>& params, std::vector<double>& out) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double plus = loss_at();
        params[i] = saved - h;
        const double minus = loss_at();
        params[i] = saved;
        out[i] = (plus - minus) / (2.0 * h);
      }
    };
    probe(model.layers()[l].w, grads.layers[l].w);
    probe(model.layers()[l].b, grads.layers[l].b);
  }
  return grads;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

}  // namespace

TEST_CASE("all-zero weights give sigmoid(0) everywhere") {
  const GridShape shape(2);
  std::vector<Layer<float>> layers;
  Layer<float> hidden{8, 4, std::vector<float>(32, 0.0f), std::vector<float>(4, 0.0f)};
  Layer<float> out{4, 8, std::vector<float>(32, 0.0f), std::vector<float>(8, 0.0f)};
  layers.push_back(hidden);
  layers.push_back(out);
  const Mlp<float> model(8, layers);
  PartialAssignment x(shape);
  x.set(3);
  const std::vector<float> f = forward(model, x);
  REQUIRE(f.size() == 8);
  for (const float v : f) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("forward is deterministic and open in (0,1)") {
  const GridShape shape(2);
  const std::vector<int> hidden{5};
  const Mlp<float> model = Mlp<float>::he_uniform_init(8, hidden, 8, 99);
  PartialAssignment x(shape);
  x.set(0);
  x.set(7);
  const std::vector<float> a = forward(model, x);
  const std::vector<float> b = forward(model, x);
  CHECK(a == b);
  for (const float v : a) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("forward rejects width mismatches") {
  const std::vector<int> hidden{4};
  const Mlp<float> model = Mlp<float>::he_uniform_init(8, hidden, 8, 1);
  const std::vector<float> wrong(9, 0.0f);
  CHECK_THROWS_AS(forward(model, std::span<const float>(wrong)), std::invalid_argument);
}

TEST_CASE("sbr loss arithmetic") {
  SUBCASE("zero when scores equal the mask") {
    const std::vector<double> f{1.0, 0.0, 1.0};
    const std::vector<std::uint8_t> mask{1, 0, 1};
    CHECK(sbr_loss(std::span<const double>(f), std::span<const std::uint8_t>(mask)) ==
          doctest::Approx(0.0));
  }
  SUBCASE("all half against all ones, m=4") {
    const std::vector<double> f(4, 0.5);
    const std::vector<std::uint8_t> mask(4, 1);
    CHECK(sbr_loss(std::span<const double>(f), std::span<const std::uint8_t>(mask)) ==
          doctest::Approx(1.0));
  }
  SUBCASE("mixed mask, m=2") {
    const std::vector<double> f{0.9, 0.2};
    const std::vector<std::uint8_t> mask{1, 0};
    CHECK(sbr_loss(std::span<const double>(f), std::span<const std::uint8_t>(mask)) ==
          doctest::Approx(0.05));
  }
  SUBCASE("length mismatch is rejected") {
    const std::vector<double> f{0.5};
    const std::vector<std::uint8_t> mask{1, 0};
    CHECK_THROWS_AS(sbr_loss(std::span<const double>(f), std::span<const std::uint8_t>(mask)),
                    std::invalid_argument);
  }
}

TEST_CASE("total loss arithmetic") {
  SUBCASE("uniform scores give ln m") {
    const std::vector<float> f(8, 0.37f);
    const std::vector<std::uint8_t> mask(8, 1);
    const LossTerms terms =
        loss_terms(std::span<const float>(f), 3, std::span<const std::uint8_t>(mask));
    CHECK(terms.crossentropy == doctest::Approx(std::log(8.0)).epsilon(1e-5));
    CHECK(terms.total(0.0) == doctest::Approx(std::log(8.0)).epsilon(1e-5));
  }
  SUBCASE("two outputs, lambda off") {
    const std::vector<double> f{0.8, 0.2};
    const std::vector<std::uint8_t> ones(2, 1);
    CHECK(total_loss(std::span<const double>(f), 0, std::span<const std::uint8_t>(ones), 0.0) ==
          doctest::Approx(-std::log(0.8)).epsilon(1e-9));
  }
  SUBCASE("two outputs, lambda one, mask (1,0)") {
    const std::vector<double> f{0.8, 0.2};
    const std::vector<std::uint8_t> mask{1, 0};
    // -ln(0.8) + (0.04 + 0.04) = 0.3031...
    CHECK(total_loss(std::span<const double>(f), 0, std::span<const std::uint8_t>(mask), 1.0) ==
          doctest::Approx(-std::log(0.8) + 0.08).epsilon(1e-9));
    CHECK(total_loss(std::span<const double>(f), 0, std::span<const std::uint8_t>(mask), 1.0) ==
          doctest::Approx(0.30314).epsilon(1e-4));
  }
}

TEST_CASE("loss decomposition: total(lambda) - total(0) = lambda * sbr") {
  const GridShape two(2);
  const Mlp<double> model = Mlp<double>::he_uniform_init(8, std::vector<int>{5}, 8, 7);
  PartialAssignment x(two);
  x.set(1);
  const std::vector<double> f = forward(model, x);
  FeasibilityMask mask = forward_check(x, KnowledgeLevel::RowsCols);
  const LossTerms terms = loss_terms(std::span<const double>(f), 0, mask);
  for (const double lambda : {0.01, 1.0, 3.5}) {
    CHECK(terms.total(lambda) - terms.total(0.0) == doctest::Approx(lambda * terms.sbr).epsilon(1e-12));
    CHECK(total_loss(std::span<const double>(f), 0, mask, lambda) ==
          doctest::Approx(terms.total(lambda)));
  }
}

TEST_CASE("analytic gradients match central differences") {
  // Small models over the n=2 pair space (m=8), every parameter, for all
  // paper lambdas; relative error under 1e-4 as in the corpus convention.
  const GridShape two(2);
  Grid solution{two};
  solution.set(0, 0, 1);
  solution.set(0, 1, 2);
  solution.set(1, 0, 2);
  solution.set(1, 1, 1);
  const auto examples = deconstruct(solution, 5);

  int checked = 0;
  for (const std::vector<int>& hidden :
       {std::vector<int>{5}, std::vector<int>{8, 8}}) {
    for (const double lambda : {0.0, 0.01, 1.0}) {
      const Mlp<double> model = Mlp<double>::he_uniform_init(
          8, hidden, 8, 31 + static_cast<std::uint64_t>(checked));
      const Example& example = examples[1 + static_cast<std::size_t>(checked) % 2];
      const PartialAssignment x =
          PartialAssignment::from_indices(two, example.x_indices);
      const FeasibilityMask mask = forward_check(x, KnowledgeLevel::RowsCols);

      Gradients<double> analytic = Gradients<double>::zeros_like(model);
      example_gradient<double>(model, example.x_indices, example.target,
                               packed(mask), lambda, 1.0, analytic);
      const Gradients<double> numeric =
          numeric_gradient(model, x, example.target, mask, lambda, 1.0, 1e-5);

      for (std::size_t l = 0; l < analytic.layers.size(); ++l) {
        for (std::size_t i = 0; i < analytic.layers[l].w.size(); ++i) {
          CHECK(relative_error(analytic.layers[l].w[i], numeric.layers[l].w[i]) < 1e-4);
        }
        for (std::size_t i = 0; i < analytic.layers[l].b.size(); ++i) {
          CHECK(relative_error(analytic.layers[l].b[i], numeric.layers[l].b[i]) < 1e-4);
        }
      }
      ++checked;
    }
  }
  CHECK(checked == 6);
}

TEST_CASE("gradient is additive in lambda") {
  const GridShape two(2);
  const Mlp<double> model = Mlp<double>::he_uniform_init(8, std::vector<int>{6}, 8, 3);
  const std::vector<std::int32_t> x_indices{0, 7};
  const PartialAssignment x = PartialAssignment::from_indices(two, x_indices);
  const FeasibilityMask mask = forward_check(x, KnowledgeLevel::Rows);
  const auto words = packed(mask);

  Gradients<double> ce_only = Gradients<double>::zeros_like(model);
  example_gradient<double>(model, x_indices, 3, words, 0.0, 1.0, ce_only);
  Gradients<double> sbr_only = Gradients<double>::zeros_like(model);
  example_gradient<double>(model, x_indices, 3, words, 1.0, 0.0, sbr_only);
  Gradients<double> both = Gradients<double>::zeros_like(model);
  const double lambda = 0.01;
  example_gradient<double>(model, x_indices, 3, words, lambda, 1.0, both);

  for (std::size_t l = 0; l < both.layers.size(); ++l) {
    for (std::size_t i = 0; i < both.layers[l].w.size(); ++i) {
      CHECK(both.layers[l].w[i] ==
            doctest::Approx(ce_only.layers[l].w[i] + lambda * sbr_only.layers[l].w[i])
                .epsilon(1e-9));
    }
  }
}

TEST_CASE("near-saturated one-hot agreement has a near-zero gradient") {
  // Craft a 1-layer model whose output saturates toward the mask with the
  // target as the dominant pair: both loss terms sit близко their minima.
  const GridShape two(2);
  Layer<double> out;
  out.in = 8;
  out.out = 8;
  out.w.assign(64, 0.0);
  out.b.assign(8, -40.0);
  out.b[2] = 40.0;  // f ~ one-hot at pair 2
  const Mlp<double> model(8, {out});
  const std::vector<std::int32_t> empty_x{};
  std::vector<std::uint8_t> bits(8, 0);
  bits[2] = 1;
  const FeasibilityMask mask(two, bits);
  Gradients<double> grads = Gradients<double>::zeros_like(model);
  example_gradient<double>(model, empty_x, 2, packed(mask), 1.0, 1.0, grads);
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    for (const double g : grads.layers[l].w) CHECK(std::fabs(g) < 1e-6);
    for (const double g : grads.layers[l].b) CHECK(std::fabs(g) < 1e-6);
  }
}

TEST_CASE("model file round trip preserves weights and trailer") {
  const Mlp<float> model = Mlp<float>::he_uniform_init(27, std::vector<int>{10, 10}, 27, 8);
  ModelTrailer trailer;
  trailer.n = 3;
  trailer.lambda = 0.01f;
  trailer.level = KnowledgeLevel::Rows;
  trailer.epochs = 42;
  trailer.init_seed = 111;
  trailer.shuffle_seed = 222;

  std::stringstream buffer;
  write_model(buffer, model, trailer);
  const std::string bytes = buffer.str();
  CHECK(bytes.substr(0, 4) == "PLSW");

  std::stringstream reread(bytes);
  const auto [loaded, loaded_trailer] = read_model(reread);
  REQUIRE(loaded.layers().size() == model.layers().size());
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    CHECK(loaded.layers()[l].w == model.layers()[l].w);
    CHECK(loaded.layers()[l].b == model.layers()[l].b);
  }
  CHECK(loaded_trailer.n == trailer.n);
  CHECK(loaded_trailer.lambda == trailer.lambda);
  CHECK(loaded_trailer.level == trailer.level);
  CHECK(loaded_trailer.epochs == trailer.epochs);
  CHECK(loaded_trailer.init_seed == trailer.init_seed);
  CHECK(loaded_trailer.shuffle_seed == trailer.shuffle_seed);

  std::stringstream bad("PLSX");
  CHECK_THROWS_AS(read_model(bad), parse_error);
}
