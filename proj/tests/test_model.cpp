#include <doctest.h>

#include <cmath>

#include "cssim/errors.hpp"
#include "cssim/model.hpp"
#include "test_support.hpp"

using namespace cssim;
using namespace cssim::testing;

TEST_CASE("init: identity transform, seeded mapper, rank bounds") {
  const auto p = init_params(6, 2, 1.0, 17);
  CHECK(p.W == Matrix::Identity(6, 6));
  CHECK(p.b.isZero(0));
  CHECK(p.M.rows() == 12);
  CHECK(p.M.cols() == 6);
  CHECK(p.m0.size() == 12);
  CHECK(init_params(6, 2, 1.0, 17) == p);
  CHECK_FALSE(init_params(6, 2, 1.0, 18) == p);
  CHECK(default_init_scale(16) == doctest::Approx(2.5e-3));
  CHECK_THROWS_AS(init_params(4, 5, 1.0, 0), ValidationError);
  CHECK_THROWS_AS(init_params(4, 0, 1.0, 0), ValidationError);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = random_vector(rng, 6);
    CHECK((cit_forward(p, x) - x / x.norm()).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("validate rejects inconsistent parameter sets") {
  auto p = init_params(4, 2, 1.0, 0);
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.tau = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.W(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.M.resize(3, 4);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = p;
  bad.mapper_bias = false;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.m0.setZero();
  CHECK_NOTHROW(bad.validate());
  auto ci = init_cit_params(4, 1.0);
  CHECK_NOTHROW(ci.validate());
  ci.r = 1;
  CHECK_THROWS_AS(ci.validate(), ValidationError);
}

TEST_CASE("zero mapper gives uniform probabilities") {
  std::mt19937_64 rng(3);
  const auto p = init_params(8, 3, 1.0, 0, 0.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto probs = triplet_probs(p, random_vector(rng, 8), random_vector(rng, 8), random_vector(rng, 8),
                                     random_vector(rng, 8));
    for (double v : probs.probs) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("cit_forward: fixed case, scale invariance, reference expression") {
  auto p = init_params(2, 1, 1.0, 0);
  Vector x(2);
  x << 3, 4;
  const Vector y = cit_forward(p, x);
  CHECK(y(0) == doctest::Approx(0.6));
  CHECK(y(1) == doctest::Approx(0.8));
  p.W *= 2;
  CHECK((cit_forward(p, x) - y).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(cit_forward(p, Vector::Zero(2)), DegenerateError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> alpha(0.01, 100);
  for (int trial = 0; trial < 500; ++trial) {
    auto q = random_params(rng, 7, 2, 1.0);
    const Vector v = random_vector(rng, 7);
    const Vector out = cit_forward(q, v);
    const auto ref = reference_cit(q, v);
    CHECK(std::abs(out.norm() - 1.0) <= kTolerances.unit_norm);
    for (int i = 0; i < 7; ++i) CHECK(std::abs(out(i) - ref[static_cast<std::size_t>(i)]) <= 1e-12);
    const double a = alpha(rng);
    q.W *= a;
    q.b *= a;
    CHECK((cit_forward(q, v) - out).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("context_matrix: constant mapper and naive loop oracle") {
  const int d = 5, r = 3;
  auto p = init_params(d, r, 1.0, 0, 0.0);
  for (int a = 0; a < r; ++a) p.m0(a * d + a) = 1.0;
  std::mt19937_64 rng(5);
  RowMatrix expected = RowMatrix::Zero(r, d);
  expected.leftCols(r).setIdentity();
  for (int trial = 0; trial < 20; ++trial) CHECK(context_matrix(p, random_vector(rng, d)) == expected);

  for (int trial = 0; trial < 300; ++trial) {
    const auto q = random_params(rng, 6, 1 + trial % 6, 1.0);
    const Vector xc = random_vector(rng, 6);
    const RowMatrix B = context_matrix(q, xc);
    const Matrix ref = reference_context_matrix(q, xc);
    REQUIRE(B.rows() == ref.rows());
    CHECK((B - ref).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(context_matrix(p, Vector::Ones(4)), ValidationError);
}

TEST_CASE("context input modes") {
  std::mt19937_64 rng(6);
  auto p = random_params(rng, 5, 2, 1.0);
  const Vector xc = random_vector(rng, 5);
  p.context_input = ContextInput::kNormalized;
  CHECK((context_features(p, xc) - xc / xc.norm()).cwiseAbs().maxCoeff() <= 1e-15);
  p.context_input = ContextInput::kRaw;
  CHECK(context_features(p, xc) == xc);
  p.context_input = ContextInput::kCit;
  CHECK((context_features(p, xc) - cit_forward(p, xc)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("identity kernel reduces similarity to a dot product") {
  const int d = 4;
  auto p = init_params(d, d, 1.0, 0, 0.0);
  for (int a = 0; a < d; ++a) p.m0(a * d + a) = 1.0;
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector xi = l2_normalize(random_vector(rng, d));
    const Vector xj = l2_normalize(random_vector(rng, d));
    const RowMatrix B = context_matrix(p, random_vector(rng, d));
    CHECK(similarity(B, xi, xj) == doctest::Approx(xi.dot(xj)).epsilon(1e-14));
  }
}

TEST_CASE("similarity: PSD diagonal, symmetry, explicit kernel") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + trial % 32;
    const int r = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(d));
    const RowMatrix B = random_matrix(rng, r, d);
    const Vector u = random_vector(rng, d), v = random_vector(rng, d);
    CHECK(similarity(B, u, u) >= 0.0);
    CHECK(std::abs(similarity(B, u, v) - similarity(B, v, u)) <= kTolerances.symmetry);
    const double explicit_value = explicit_similarity(B, u, v);
    CHECK(std::abs(similarity(B, u, v) - explicit_value) <=
          kTolerances.factored_similarity * std::max(1.0, std::abs(explicit_value)));
  }
}

TEST_CASE("softmax over pairs") {
  const auto equal = softmax_pairs({0.7, 0.7, 0.7}, 2.0);
  for (double v : equal.probs) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto hot = softmax_pairs({1e4, -1e4, 0.0}, 1.0);
  CHECK(hot.probs[0] == 1.0);
  CHECK(std::isfinite(hot.probs[1]));

  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::array<double, 3> s{n(rng), n(rng), n(rng)};
    const double tau = trial % 2 ? 1.0 : 7.5;
    const auto probs = softmax_pairs(s, tau).probs;
    const auto ref = extended_softmax(s, tau);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(probs[k] - static_cast<double>(ref[k])) <= 1e-14);
    CHECK(std::abs(probs[0] + probs[1] + probs[2] - 1.0) <= kTolerances.prob_sum);
    const auto flat = softmax_pairs(s, 1e9).probs;
    for (double v : flat) CHECK(std::abs(v - 1.0 / 3.0) <= 1e-6);
  }
}

TEST_CASE("triplet probabilities follow the pair-slot convention") {
  std::mt19937_64 rng(10);
  const auto p = random_params(rng, 6, 3, 1.5);
  const Vector xp = random_vector(rng, 6), xq = random_vector(rng, 6), xr = random_vector(rng, 6),
               xc = random_vector(rng, 6);
  const auto out = triplet_probs(p, xp, xq, xr, xc);
  const RowMatrix B = context_matrix(p, xc);
  const Vector tp = cit_forward(p, xp), tq = cit_forward(p, xq), tr = cit_forward(p, xr);
  CHECK(out.pair_similarities[0] == doctest::Approx(similarity(B, tq, tr)).epsilon(1e-14));
  CHECK(out.pair_similarities[1] == doctest::Approx(similarity(B, tp, tr)).epsilon(1e-14));
  CHECK(out.pair_similarities[2] == doctest::Approx(similarity(B, tp, tq)).epsilon(1e-14));
}

TEST_CASE("permutation equivariance") {
  std::mt19937_64 rng(11);
  const auto store = random_store(rng, 40, 6);
  const std::array<std::array<int, 3>, 6> orders{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_params(rng, 6, 3, 1.0, 0.5);
    const auto t = random_triplets(rng, 40, 1).front();
    const auto base = triplet_probs(p, store, t).probs;
    for (const auto& order : orders) {
      const auto permuted = triplet_probs(p, store, permute_triplet(t, order)).probs;
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(std::abs(permuted[k] - base[static_cast<std::size_t>(order[k])]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("argmax with lowest-index ties, invariant under monotone maps") {
  CHECK(predict_oddball(std::array<double, 3>{0.2, 0.5, 0.3}) == 1);
  CHECK(predict_oddball(std::array<double, 3>{0.4, 0.4, 0.2}) == 0);
  CHECK(predict_oddball(std::array<double, 3>{0.1, 0.45, 0.45}) == 1);
  CHECK(predict_oddball(std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3}) == 0);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, 3> p{u(rng), u(rng), u(rng)};
    if (trial % 5 == 0) p[2] = p[0];
    const int base = predict_oddball(p);
    const double a = 0.1 + u(rng), c = u(rng);
    auto mapped = p;
    for (auto& v : mapped) v = std::exp(a * v) + c;
    CHECK(predict_oddball(mapped) == base);
    for (auto& v : mapped) v = std::log1p(v);
    CHECK(predict_oddball(mapped) == base);
  }
}

TEST_CASE("baselines") {
  RowMatrix v(4, 2);
  v << 1, 0, 1, 0, 0, 1, 0.3, 0.7;
  const EmbeddingStore store(2, {1, 2, 3, 4}, v);
  ContextTriplet t;
  t.image_ids = {1, 2, 3};
  t.context_id = 4;
  CHECK(baseline_predict(store, t, BaselineMode::kFmCosine) == 2);
  t.context_id = 3;
  t.image_ids = {1, 4, 2};
  const int with_c3 = baseline_predict(store, t, BaselineMode::kFmCosine);
  t.context_id = 99;
  CHECK(baseline_predict(store, t, BaselineMode::kFmCosine) == with_c3);
  t.image_ids = {1, 2, 99};
  CHECK_THROWS_AS(baseline_predict(store, t, BaselineMode::kFmCosine), LookupError);

  std::mt19937_64 rng(13);
  const auto big = random_store(rng, 50, 5);
  const auto identity = init_cit_params(5, 1.0);
  for (const auto& trip : random_triplets(rng, 50, 500)) {
    CHECK(baseline_predict(big, trip, BaselineMode::kCitOnly, &identity) ==
          baseline_predict(big, trip, BaselineMode::kFmCosine));
  }
}
