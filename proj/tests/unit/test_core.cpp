// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "support/oracles.hpp"
#include "wmd/core/distributions.hpp"
#include "wmd/core/errors.hpp"
#include "wmd/core/gradcheck.hpp"
#include "wmd/core/nn.hpp"
#include "wmd/core/optim.hpp"
#include "wmd/core/parameters.hpp"
#include "wmd/core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace wmd;

namespace {

DiagonalGaussian gauss(std::initializer_list<double> mean, std::initializer_list<double> std_) {
  Vector m(static_cast<Eigen::Index>(mean.size())), s(static_cast<Eigen::Index>(std_.size()));
  Eigen::Index i = 0;
  for (double v : mean) m[i++] = v;
  i = 0;
  for (double v : std_) s[i++] = v;
  return {m, s};
}

DiagonalGaussian random_gaussian(Rng& rng, Eigen::Index d) {
  Vector m(d), s(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    m[i] = rng.uniform(-2, 2);
    s[i] = rng.uniform(0.3, 2.0);
  }
  return {m, s};
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  return rng.normal_matrix(r, c) * scale;
}

}  // namespace

TEST_CASE("kl_diag_gaussian closed-form values") {
  CHECK(kl_diag_gaussian(gauss({0}, {1}), gauss({0}, {1})) == 0.0);
  CHECK(kl_diag_gaussian(gauss({0}, {1}), gauss({1}, {1})) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(kl_diag_gaussian(gauss({0}, {2}), gauss({0}, {1})) ==
        doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-14));
}

TEST_CASE("kl_diag_gaussian agrees with Monte Carlo on the worked examples") {
  Rng rng(7);
  for (auto [p, q] : {std::pair{gauss({0}, {1}), gauss({1}, {1})}, std::pair{gauss({0}, {2}), gauss({0}, {1})}}) {
    const auto est = oracle::monte_carlo_kl(p, q, 100000, rng);
    CHECK(std::abs(est.mean - kl_diag_gaussian(p, q)) < 3.0 * est.standard_error);
  }
}

TEST_CASE("kl_diag_gaussian rejects bad input") {
  CHECK_THROWS_AS(kl_diag_gaussian(gauss({0, 1}, {1, 1}), gauss({0}, {1})), ShapeError);
  CHECK_THROWS_AS(DiagonalGaussian(Vector::Zero(1), Vector::Zero(1)), ShapeError);
  DiagonalGaussian bad = gauss({0}, {1});
  bad.std[0] = -1.0;
  CHECK_THROWS_AS(kl_diag_gaussian(bad, gauss({0}, {1})), ShapeError);
}

TEST_CASE("kl_categorical direct-summation values") {
  const Matrix uniform = Matrix::Zero(3, 4);
  CHECK(kl_categorical(CategoricalLatent(uniform), CategoricalLatent(uniform)) == 0.0);

  Matrix p(1, 2), q(1, 2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  Matrix deterministic(1, 2);
  deterministic << 0.0, -1e6;
  CHECK(kl_categorical(CategoricalLatent(deterministic), CategoricalLatent(Matrix::Zero(1, 2))) ==
        doctest::Approx(oracle::summed_kl(p, q)).epsilon(1e-12));
  CHECK(oracle::summed_kl(p, q) == doctest::Approx(std::log(2.0)));

  Matrix p2(1, 2);
  p2 << 0.9, 0.1;
  const double expected = oracle::summed_kl(p2, q);  // 0.9 ln 1.8 + 0.1 ln 0.2
  CHECK(expected == doctest::Approx(0.368064207168497).epsilon(1e-12));
  CHECK(kl_categorical(CategoricalLatent(p2.array().log().matrix()), CategoricalLatent(Matrix::Zero(1, 2))) ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(kl_categorical(CategoricalLatent(Matrix::Zero(2, 2)), CategoricalLatent(Matrix::Zero(1, 2))),
                  ShapeError);
}

TEST_CASE("KL nonnegativity and zero-iff-equal, fuzzed") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(5));
    const auto p = random_gaussian(rng, d);
    const auto q = random_gaussian(rng, d);
    REQUIRE(kl_diag_gaussian(p, q) > 0.0);
    REQUIRE(kl_diag_gaussian(p, p) == 0.0);

    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.index(3));
    const Eigen::Index c = 2 + static_cast<Eigen::Index>(rng.index(4));
    const CategoricalLatent a(random_matrix(rng, k, c));
    const CategoricalLatent b(random_matrix(rng, k, c));
    REQUIRE(kl_categorical(a, b) > 0.0);
    REQUIRE(kl_categorical(a, a) == 0.0);
  }
}

TEST_CASE("Monte Carlo KL agrees within three standard errors on random instances") {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto p = random_gaussian(rng, 3);
    const auto q = random_gaussian(rng, 3);
    const auto est = oracle::monte_carlo_kl(p, q, 100000, rng);
    CHECK(std::abs(est.mean - kl_diag_gaussian(p, q)) < 3.0 * est.standard_error);

    const CategoricalLatent a(random_matrix(rng, 2, 4));
    const CategoricalLatent b(random_matrix(rng, 2, 4));
    const auto cat = oracle::monte_carlo_kl_categorical(a.probabilities(), b.probabilities(), 100000, rng);
    CHECK(std::abs(cat.mean - kl_categorical(a, b)) < 3.0 * cat.standard_error);
  }
}

TEST_CASE("geometric_mean_gaussian") {
  const std::vector<DiagonalGaussian> same{gauss({0.3, -1}, {0.5, 2}), gauss({0.3, -1}, {0.5, 2})};
  const std::vector<double> half{0.5, 0.5};
  const auto g0 = geometric_mean_gaussian(same, half);
  CHECK(g0.mean.isApprox(same[0].mean, 1e-15));
  CHECK(g0.std.isApprox(same[0].std, 1e-15));

  const std::vector<DiagonalGaussian> shifted{gauss({0}, {1}), gauss({2}, {1})};
  const auto g1 = geometric_mean_gaussian(shifted, half);
  CHECK(g1.mean[0] == doctest::Approx(1.0));
  CHECK(g1.std[0] == doctest::Approx(1.0));

  const std::vector<DiagonalGaussian> scaled{gauss({0}, {1}), gauss({0}, {2})};
  const auto g2 = geometric_mean_gaussian(scaled, half);
  CHECK(g2.mean[0] == 0.0);
  CHECK(g2.std[0] == doctest::Approx(std::sqrt(2.0 / (1.0 + 0.25))).epsilon(1e-14));
  CHECK(g2.std[0] == doctest::Approx(1.26491).epsilon(1e-5));

  CHECK_THROWS_AS(geometric_mean_gaussian(std::vector<DiagonalGaussian>{}, std::vector<double>{}), ShapeError);
  CHECK_THROWS_AS(geometric_mean_gaussian(shifted, std::vector<double>{0.5, 0.6}), ShapeError);
  const std::vector<DiagonalGaussian> mixed{gauss({0}, {1}), gauss({0, 1}, {1, 1})};
  CHECK_THROWS_AS(geometric_mean_gaussian(mixed, half), ShapeError);
}

TEST_CASE("geometric mean is permutation invariant under uniform weights") {
  Rng rng(5);
  std::vector<DiagonalGaussian> members;
  for (int i = 0; i < 5; ++i) members.push_back(random_gaussian(rng, 4));
  const std::vector<double> w(5, 0.2);
  const auto g = geometric_mean_gaussian(members, w);
  std::vector<DiagonalGaussian> permuted{members[3], members[0], members[4], members[1], members[2]};
  const auto gp = geometric_mean_gaussian(permuted, w);
  CHECK((g.mean - gp.mean).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((g.std - gp.std).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("gjs_uncertainty values and invariances") {
  const std::vector<DiagonalGaussian> identical(5, gauss({0.2, 1.0}, {0.4, 0.9}));
  CHECK(gjs_uncertainty(identical) == 0.0);

  const std::vector<DiagonalGaussian> pair{gauss({0}, {1}), gauss({2}, {1})};
  CHECK(gjs_uncertainty(pair) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(oracle::quadrature_gjs(pair) == doctest::Approx(0.5).epsilon(1e-8));

  double previous = -1.0;
  for (int i = 0; i <= 40; ++i) {
    const double sep = 0.1 * i;
    const std::vector<DiagonalGaussian> drift{gauss({0}, {1}), gauss({sep}, {1})};
    const double u = gjs_uncertainty(drift);
    // Oracle for equal unit scales: each member is sep/2 from G = N(sep/2, 1).
    CHECK(u == doctest::Approx(0.125 * sep * sep).epsilon(1e-12));
    CHECK(u > previous);
    previous = u;
  }

  Rng rng(9);
  std::vector<DiagonalGaussian> members;
  for (int i = 0; i < 5; ++i) members.push_back(random_gaussian(rng, 3));
  const double u = gjs_uncertainty(members);
  CHECK(u == doctest::Approx(oracle::quadrature_gjs(members)).epsilon(1e-7));
  std::vector<DiagonalGaussian> permuted{members[2], members[4], members[0], members[3], members[1]};
  CHECK(gjs_uncertainty(permuted) == doctest::Approx(u).epsilon(1e-12));
  Vector shift(3);
  shift << 3.0, -7.5, 0.25;
  for (auto& m : members) m.mean += shift;
  CHECK(gjs_uncertainty(members) == doctest::Approx(u).epsilon(1e-10));

  CHECK_THROWS_AS(gjs_uncertainty(std::vector<DiagonalGaussian>{gauss({0}, {1})}), ShapeError);
}

TEST_CASE("variance_of_means") {
  const std::vector<DiagonalGaussian> pair{gauss({0}, {1}), gauss({2}, {1})};
  CHECK(variance_of_means(pair) == doctest::Approx(1.0));
}

TEST_CASE("sample_gaussian") {
  Vector mean(3);
  mean << 1.0, -2.0, 0.5;
  const DiagonalGaussian tight(mean, Vector::Constant(3, 1e-12));
  Rng rng(1);
  CHECK((sample_gaussian(tight, rng) - mean).cwiseAbs().maxCoeff() < 1e-10);

  Rng a(42), b(42);
  const DiagonalGaussian unit(Vector::Zero(4), Vector::Ones(4));
  CHECK(sample_gaussian(unit, a) == sample_gaussian(unit, b));

  Rng big(17);
  const DiagonalGaussian scalar(Vector::Zero(1), Vector::Ones(1));
  double sum = 0.0, sum_sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = sample_gaussian(scalar, big)[0];
    sum += x;
    sum_sq += x * x;
  }
  const double m = sum / n;
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(std::sqrt(sum_sq / n - m * m) - 1.0) < 0.02);
}

TEST_CASE("sample_categorical") {
  Matrix logits = Matrix::Zero(3, 5);
  logits(0, 2) = 1e6;
  logits(1, 0) = 1e6;
  logits(2, 4) = 1e6;
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Matrix s = sample_categorical(CategoricalLatent(logits), rng);
    CHECK(s(0, 2) == 1.0);
    CHECK(s(1, 0) == 1.0);
    CHECK(s(2, 4) == 1.0);
  }
  for (int i = 0; i < 200; ++i) {
    const Matrix s = sample_categorical(CategoricalLatent(random_matrix(rng, 4, 6, 3.0)), rng);
    for (Eigen::Index r = 0; r < 4; ++r) {
      REQUIRE(s.row(r).sum() == 1.0);
      REQUIRE(s.row(r).maxCoeff() == 1.0);
    }
  }
  std::vector<int> counts(4, 0);
  const CategoricalLatent uniform(Matrix::Zero(1, 4));
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    sample_categorical(uniform, rng).row(0).maxCoeff(&k);
    ++counts[static_cast<std::size_t>(k)];
  }
  for (int c : counts) CHECK(std::abs(c / double(n) - 0.25) < 0.01);
}

TEST_CASE("grad of x^2 at 3 is 6") {
  ad::Tape tape;
  Matrix x0 = Matrix::Constant(1, 1, 3.0);
  ad::Var x = tape.parameter(x0);
  ad::Var y = ad::sum(ad::square(x));
  tape.backward(y);
  CHECK(tape.gradient(x)(0, 0) == 6.0);
  // A second backward pass reproduces identical gradients.
  tape.backward(y);
  CHECK(tape.gradient(x)(0, 0) == 6.0);
}

TEST_CASE("backward on a non-scalar output is rejected") {
  ad::Tape tape;
  Matrix x0 = Matrix::Ones(2, 2);
  ad::Var x = tape.parameter(x0);
  CHECK_THROWS_AS(tape.backward(ad::square(x)), ShapeError);
}

TEST_CASE("gradient of kl_diag_gaussian wrt p.mean matches central differences") {
  Rng rng(21);
  ParameterSet params;
  params.add("mp", rng.normal_matrix(1, 4));
  params.add("sp", (rng.normal_matrix(1, 4) * 0.2).array().exp().matrix());
  params.add("mq", rng.normal_matrix(1, 4));
  params.add("sq", (rng.normal_matrix(1, 4) * 0.2).array().exp().matrix());
  auto value = [](const ParameterSet& p) {
    return kl_diag_gaussian(DiagonalGaussian(row_of(p.at("mp"), 0), row_of(p.at("sp"), 0)),
                            DiagonalGaussian(row_of(p.at("mq"), 0), row_of(p.at("sq"), 0)));
  };
  ad::Tape tape;
  BoundParameters bound(tape, params, true);
  ad::Var kl = ad::sum(ad::kl_diag_gaussian(bound["mp"], bound["sp"], bound["mq"], bound["sq"]));
  CHECK(kl.scalar() == doctest::Approx(value(params)).epsilon(1e-13));
  const ParameterSet analytic = grad(tape, kl, bound);
  const ParameterSet numeric = finite_difference_gradient(params, value);
  CHECK(max_relative_error(analytic.extract("m"), numeric.extract("m")) < 1e-6);
  CHECK(max_relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("every tape op matches central differences") {
  Rng rng(33);
  ParameterSet params;
  params.add("a", rng.normal_matrix(3, 4));
  params.add("b", rng.normal_matrix(3, 4));
  params.add("w", rng.normal_matrix(4, 6) * 0.5);
  params.add("row", rng.normal_matrix(1, 6));
  params.add("pos", (rng.normal_matrix(3, 4) * 0.3).array().exp().matrix());

  auto build = [](const BoundParameters& p) {
    using namespace ad;
    Var a = p["a"], b = p["b"];
    Var h = add_row(matmul(a, p["w"]), p["row"]);
    Var ln = mul_row(layer_norm(h), p["row"]);
    Var acts = add(add(elu(h), tanh(ln)), add(sigmoid(h), softplus(h)));
    Var sm = softmax_groups(acts, 2);
    Var lsm = log_softmax_groups(h, 3);
    Var mix = add(mul(a, b), div(a, p["pos"]));
    Var tail = add(log(p["pos"]), exp(scale(b, 0.3)));
    Var cat = concat_cols(std::vector<Var>{mix, tail});
    Var stacked = concat_rows(std::vector<Var>{slice_cols(cat, 1, 5), slice_cols(slice_rows(cat, 0, 2), 0, 5)});
    Var kl = kl_categorical(h, ln, 3);
    Var r = row_sums(add(sm, lsm));
    return add(add(sum(square(stacked)), mean(add(r, kl))),
               add(sum(sub(relu(add_scalar(a, 0.1)), neg(b))), sum(gaussian_nll(a, b, p["pos"]))));
  };
  auto value = [&](const ParameterSet& p) {
    ad::Tape t;
    BoundParameters bound(t, p, false);
    return build(bound).scalar();
  };
  ad::Tape tape;
  BoundParameters bound(tape, params, true);
  const ParameterSet analytic = grad(tape, build(bound), bound);
  const ParameterSet numeric = finite_difference_gradient(params, value);
  CHECK(max_relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("straight_through forwards the sample and routes gradient to the probabilities") {
  Rng rng(8);
  ParameterSet params;
  params.add("logits", rng.normal_matrix(2, 6));
  params.add("readout", rng.normal_matrix(6, 1));
  ad::Tape tape;
  BoundParameters bound(tape, params, true);
  ad::Var probs = ad::softmax_groups(bound["logits"], 2);
  const Matrix sample = sample_one_hot(probs.value().reshaped<Eigen::RowMajor>(4, 3), rng)
                            .reshaped<Eigen::RowMajor>(2, 6);
  ad::Var z = ad::straight_through(probs, sample);
  CHECK(z.value() == sample);
  ad::Var out = ad::sum(ad::matmul(z, bound["readout"]));
  const ParameterSet analytic = grad(tape, out, bound);

  // Surrogate: same readout applied to the probabilities themselves.
  auto surrogate = [](const ParameterSet& p) {
    ad::Tape t;
    BoundParameters b(t, p, false);
    return ad::sum(ad::matmul(ad::softmax_groups(b["logits"], 2), b["readout"])).scalar();
  };
  const ParameterSet numeric = finite_difference_gradient(params, surrogate);
  CHECK(max_relative_error(analytic.extract("logits"), numeric.extract("logits")) < 1e-6);
}

TEST_CASE("mlp with layer norm gradchecks") {
  Rng rng(4);
  ParameterSet params;
  const nn::MlpShape shape{3, 5, 2, 4, true};
  nn::add_mlp(params, "net", shape, rng);
  for (auto& [name, m] : params) m += rng.normal_matrix(m.rows(), m.cols()) * 0.1;
  const Matrix input = rng.normal_matrix(6, 3);
  auto build = [&](const BoundParameters& p) {
    ad::Var x = p.tape().constant(input);
    return ad::sum(ad::square(nn::mlp(p, "net", shape, nn::Activation::elu, x)));
  };
  auto value = [&](const ParameterSet& p) {
    ad::Tape t;
    BoundParameters b(t, p, false);
    return build(b).scalar();
  };
  ad::Tape tape;
  BoundParameters bound(tape, params, true);
  CHECK(max_relative_error(grad(tape, build(bound), bound), finite_difference_gradient(params, value)) < 1e-6);
  CHECK(nn::positive(0.0) == doctest::Approx(std::log(2.0) + 1e-5).epsilon(1e-15));
}

TEST_CASE("adam and clipping") {
  ParameterSet p;
  p.add("x", Matrix::Constant(1, 2, 1.0));
  ParameterSet g = p.zeros_like();
  g.at("x") << 300.0, 400.0;
  const double before = clip_global_norm(g, 100.0);
  CHECK(before == doctest::Approx(500.0));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(100.0));
  AdamState state = AdamState::for_parameters(p);
  adam_update(p, g, state, AdamConfig{});
  // First Adam step moves each coordinate by lr * sign(g).
  CHECK(p.at("x")(0, 0) == doctest::Approx(1.0 - 6e-4).epsilon(1e-9));
  CHECK(p.at("x")(0, 1) == doctest::Approx(1.0 - 6e-4).epsilon(1e-9));
}

TEST_CASE("parameter set checksum and equality") {
  Rng rng(1);
  ParameterSet a;
  nn::add_linear(a, "l", 3, 2, rng);
  ParameterSet b = a;
  CHECK(a == b);
  CHECK(a.checksum() == b.checksum());
  b.at("l.w")(0, 0) += 1e-12;
  CHECK_FALSE(a == b);
  CHECK(a.checksum() != b.checksum());
  CHECK_THROWS_AS(a.add("l.w", Matrix::Zero(1, 1)), ShapeError);
}
