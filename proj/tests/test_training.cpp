#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "cssim/errors.hpp"
#include "cssim/synthetic.hpp"
#include "cssim/training.hpp"
#include "gradient_check.hpp"
#include "test_support.hpp"

using namespace cssim;
using namespace cssim::testing;

namespace {

struct Instance {
  EmbeddingStore store;
  std::vector<ContextTriplet> batch;
};

Instance random_instance(std::mt19937_64& rng, int d, int n_images, int batch) {
  auto store = random_store(rng, n_images, d);
  return {std::move(store), random_triplets(rng, n_images, batch)};
}

SyntheticData small_synthetic(std::uint64_t seed, int n_trials) {
  SyntheticSpec spec;
  spec.d = 8;
  spec.r_true = 2;
  spec.n_images = 60;
  spec.n_clusters = 6;
  spec.n_trials = n_trials;
  spec.n_participants = 5;
  spec.seed = seed;
  return sample_dataset(spec, gen_ground_truth(spec));
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 40; ++trial) {
    auto inst = random_instance(rng, 8, 12, 4);
    const double tau = trial % 2 ? 1.0 : 5.0;
    const auto params = random_params(rng, 8, 3, tau);
    const LossOptions options{.lambda1 = (trial / 2) % 2 ? 1e-3 : 0.0, .lambda2 = (trial / 4) % 2 ? 1e-3 : 0.0};
    const auto result = check_gradients(params, inst.batch, inst.store, options);
    INFO("trial " << trial << " worst block " << result.worst_block << "[" << result.worst_index << "]");
    CHECK(result.worst_rel_error <= kTolerances.grad_rel_error);
  }
}

TEST_CASE("gradients for every model variant") {
  std::mt19937_64 rng(101);
  const LossOptions options{.lambda1 = 1e-2, .lambda2 = 1e-2};
  for (int trial = 0; trial < 8; ++trial) {
    auto inst = random_instance(rng, 6, 10, 5);
    auto params = random_params(rng, 6, 2, 2.0);
    SUBCASE("cit context input") { params.context_input = ContextInput::kCit; }
    SUBCASE("raw context input") { params.context_input = ContextInput::kRaw; }
    SUBCASE("no mapper bias") {
      params.mapper_bias = false;
      params.m0.setZero();
    }
    SUBCASE("context-insensitive") {
      const Matrix W = params.W;
      const Vector b = params.b;
      params = init_cit_params(6, 2.0);
      params.W = W;
      params.b = b;
    }
    SUBCASE("regularizers only") {
      const auto result = check_gradients(params, inst.batch, inst.store,
                                          LossOptions{.lambda1 = 0.5, .lambda2 = 0.5, .nll_weight = 0.0});
      CHECK(result.worst_rel_error <= kTolerances.grad_rel_error);
    }
    const auto result = check_gradients(params, inst.batch, inst.store, options);
    INFO("worst block " << result.worst_block << "[" << result.worst_index << "]");
    CHECK(result.worst_rel_error <= kTolerances.grad_rel_error);
  }
}

TEST_CASE("loss terms at the zero-mapper saddle") {
  std::mt19937_64 rng(102);
  auto inst = random_instance(rng, 8, 20, 16);
  const auto params = init_params(8, 3, 1.0, 0, 0.0);
  const auto terms = batch_loss(params, inst.batch, inst.store, 0.3, 0.2);
  CHECK(terms.nll == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(terms.reg_w == 0.0);
  // A_c = 0, so ‖A_c - I‖_F² = d for every triplet.
  CHECK(terms.reg_a == doctest::Approx(0.2 * 8).epsilon(1e-14));
  CHECK(terms.total == doctest::Approx(terms.nll + terms.reg_w + terms.reg_a));

  const auto grads = batch_gradients(params, inst.batch, inst.store, 0.0, 0.0);
  CHECK(grads.dM.isZero(0));
}

TEST_CASE("nll is nonnegative; empty batch and unknown ids are errors") {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 5, 10, 6);
    CHECK(batch_loss(random_params(rng, 5, 2, 0.5, 1.0), inst.batch, inst.store, 0, 0).nll >= 0.0);
  }
  auto inst = random_instance(rng, 5, 10, 2);
  const auto params = random_params(rng, 5, 2, 1.0);
  CHECK_THROWS_AS(batch_loss(params, std::span<const ContextTriplet>{}, inst.store, 0, 0), ValidationError);
  inst.batch[1].context_id = 999;
  CHECK_THROWS_AS(batch_loss(params, inst.batch, inst.store, 0, 0), LookupError);
}

TEST_CASE("factored kernel penalty equals the explicit form") {
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 300; ++trial) {
    const int d = 1 + trial % 32;
    const int r = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(d));
    const RowMatrix B = random_matrix(rng, r, d);
    const double explicit_value = explicit_identity_penalty(B);
    CHECK(std::abs(kernel_identity_penalty(B) - explicit_value) <=
          kTolerances.factored_regularizer * std::max(1.0, explicit_value));
  }
}

TEST_CASE("batch order does not change loss or gradients") {
  std::mt19937_64 rng(105);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 6, 15, 9);
    const auto params = random_params(rng, 6, 2, 1.0);
    const auto a = batch_loss(params, inst.batch, inst.store, 1e-3, 1e-3);
    const auto ga = batch_gradients(params, inst.batch, inst.store, 1e-3, 1e-3);
    std::shuffle(inst.batch.begin(), inst.batch.end(), rng);
    const auto b = batch_loss(params, inst.batch, inst.store, 1e-3, 1e-3);
    const auto gb = batch_gradients(params, inst.batch, inst.store, 1e-3, 1e-3);
    CHECK(std::abs(a.total - b.total) <= 1e-12);
    CHECK((ga.dW - gb.dW).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((ga.dM - gb.dM).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((ga.dm0 - gb.dm0).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("thread count does not change any bit of the result") {
  std::mt19937_64 rng(106);
  auto inst = random_instance(rng, 8, 30, 257);
  const auto params = random_params(rng, 8, 3, 1.0);
  GradientSet g1, g4;
  const auto t1 = evaluate_objective(params, inst.batch, inst.store, {.lambda1 = 1e-3, .lambda2 = 1e-3, .threads = 1}, &g1);
  const auto t4 = evaluate_objective(params, inst.batch, inst.store, {.lambda1 = 1e-3, .lambda2 = 1e-3, .threads = 4}, &g4);
  CHECK(t1.total == t4.total);
  CHECK(g1.dW == g4.dW);
  CHECK(g1.db == g4.db);
  CHECK(g1.dM == g4.dM);
  CHECK(g1.dm0 == g4.dm0);
}

TEST_CASE("regularizer-only descent reaches orthonormal rows") {
  std::mt19937_64 rng(107);
  auto inst = random_instance(rng, 8, 10, 1);
  auto params = random_params(rng, 8, 3, 1.0);
  const LossOptions options{.lambda2 = 1.0, .nll_weight = 0.0};
  GradientSet g;
  for (int step = 0; step < 5000; ++step) {
    evaluate_objective(params, inst.batch, inst.store, options, &g);
    params = sgd_step(params, g, 0.02);
  }
  const auto& t = inst.batch.front();
  const RowMatrix B = context_matrix(params, inst.store.vector(t.context_id));
  const Matrix gram = B * B.transpose();
  CHECK((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("transform penalty alone pulls W back to the identity, monotonically") {
  std::mt19937_64 rng(108);
  auto inst = random_instance(rng, 6, 10, 3);
  auto params = random_params(rng, 6, 2, 1.0);
  const LossOptions options{.lambda1 = 1.0, .nll_weight = 0.0};
  GradientSet g;
  double previous = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 200; ++step) {
    const double loss = evaluate_objective(params, inst.batch, inst.store, options, &g).total;
    CHECK(loss <= previous);
    previous = loss;
    params = sgd_step(params, g, 0.1);
  }
  CHECK((params.W - Matrix::Identity(6, 6)).norm() < 1e-6);
}

TEST_CASE("sgd_step") {
  std::mt19937_64 rng(109);
  auto inst = random_instance(rng, 5, 10, 4);
  const auto params = random_params(rng, 5, 2, 1.0);
  const auto g = batch_gradients(params, inst.batch, inst.store, 0, 0);
  CHECK(sgd_step(params, g, 0.0) == params);
  const auto next = sgd_step(params, g, 0.1);
  CHECK(sgd_step(params, g, 0.1) == next);
  CHECK((next.W - (params.W - 0.1 * g.dW)).cwiseAbs().maxCoeff() == 0.0);

  auto bad = g;
  bad.dM(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    sgd_step(params, bad, 0.1);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    REQUIRE(e.last_finite());
    CHECK(*e.last_finite() == params);
    CHECK(e.kind() == ErrorKind::kDivergence);
  }
}

TEST_CASE("training diverges cleanly at an absurd learning rate") {
  const auto data = small_synthetic(1, 600);
  TrainConfig config;
  config.epochs = 5;
  config.r = 2;
  config.learning_rate = 1e200;
  config.init_scale = 1.0;
  const auto train_set = select_split(data.triplets, Split::kTrain);
  try {
    train(config, train_set, {}, data.store);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    REQUIRE(e.last_finite());
    CHECK(e.last_finite()->W.allFinite());
    CHECK(e.last_finite()->M.allFinite());
  }
}

TEST_CASE("train: history shape, determinism, best epoch, descent") {
  const auto data = small_synthetic(2, 3000);
  const auto train_set = select_split(data.triplets, Split::kTrain);
  const auto val_set = select_split(data.triplets, Split::kVal);
  TrainConfig config;
  config.epochs = 4;
  config.r = 2;
  config.batch_size = 100;

  const auto a = train(config, train_set, val_set, data.store);
  REQUIRE(a.history.epochs.size() == 4);
  CHECK(a.history.initial.epoch == 0);
  CHECK(a.history.epochs.back().epoch == 4);
  CHECK(a.history.epochs.front().loss < a.history.initial.loss);

  const auto b = train(config, train_set, val_set, data.store);
  CHECK(format_history_csv(a.history) == format_history_csv(b.history));
  CHECK(a.params == b.params);
  config.threads = 3;
  CHECK(train(config, train_set, val_set, data.store).final_params == a.final_params);

  double best = a.history.initial.val_acc;
  int best_epoch = 0;
  for (const auto& e : a.history.epochs) {
    if (e.val_acc > best) {
      best = e.val_acc;
      best_epoch = e.epoch;
    }
  }
  CHECK(a.history.best_epoch == best_epoch);
  CHECK(prediction_accuracy(a.params, val_set, data.store) == best);

  const auto no_val = train(config, train_set, {}, data.store);
  CHECK(no_val.history.best_epoch == 4);
  CHECK(no_val.params == no_val.final_params);
  CHECK(std::isnan(no_val.history.epochs.back().val_acc));

  const auto csv = format_history_csv(a.history);
  CHECK(csv.rfind("epoch,loss,nll,reg_w,reg_a,val_acc\n0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("trailing partial batch is processed") {
  const auto data = small_synthetic(3, 400);
  auto train_set = select_split(data.triplets, Split::kTrain);
  train_set.resize(257);
  TrainConfig config;
  config.epochs = 1;
  config.r = 2;
  config.batch_size = 128;
  config.shuffle = false;
  config.learning_rate = 0.1;
  const auto result = train(config, train_set, {}, data.store);

  auto params = initial_params(config, data.store.dim());
  const std::span<const ContextTriplet> all(train_set);
  for (std::size_t start = 0; start < all.size(); start += 128) {
    const auto batch = all.subspan(start, std::min<std::size_t>(128, all.size() - start));
    params = sgd_step(params, batch_gradients(params, batch, data.store, config.lambda1, config.lambda2), 0.1);
  }
  CHECK(result.final_params == params);
}

TEST_CASE("no signal in labels means chance accuracy") {
  auto data = small_synthetic(4, 6000);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> odd(0, 2);
  for (auto& t : data.triplets) t.oddball_index = odd(rng);
  TrainConfig config;
  config.epochs = 5;
  config.r = 2;
  config.learning_rate = 0.5;
  config.init_scale = 0.25;
  const auto result = train(config, select_split(data.triplets, Split::kTrain),
                            select_split(data.triplets, Split::kVal), data.store);
  const auto test = select_split(data.triplets, Split::kTest);
  const double acc = prediction_accuracy(result.params, test, data.store);
  const double sigma = std::sqrt(2.0 / 9.0 / static_cast<double>(test.size()));
  CHECK(std::abs(acc - 1.0 / 3.0) <= 3 * sigma);
}

TEST_CASE("training beats the untrained transform on context-dependent data") {
  const auto data = small_synthetic(6, 6000);
  TrainConfig config;
  config.epochs = 20;
  config.r = 2;
  config.learning_rate = 0.5;
  config.init_scale = 0.25;
  config.lambda1 = 0;
  config.lambda2 = 0;
  const auto val = select_split(data.triplets, Split::kVal);
  const auto result = train(config, select_split(data.triplets, Split::kTrain), val, data.store);
  const auto cit = init_cit_params(data.store.dim(), 1.0);
  std::size_t baseline_correct = 0;
  for (const auto& t : val) baseline_correct += baseline_predict(data.store, t, BaselineMode::kCitOnly, &cit) == t.oddball_index;
  CHECK(prediction_accuracy(result.params, val, data.store) >
        static_cast<double>(baseline_correct) / static_cast<double>(val.size()));
}

TEST_CASE("grid expansion") {
  const HyperGrid grid;
  TrainConfig base;
  const auto cs = grid.expand(base);
  CHECK(cs.size() == 36);
  CHECK(cs[0].r == 16);
  CHECK(cs[0].tau == 1.0);
  CHECK(cs[1].tau == 5.0);
  CHECK(cs[3].lambda2 == 1e-4);
  CHECK(cs[18].r == 32);
  base.kind = ModelKind::kContextInsensitive;
  const auto ci = grid.expand(base);
  CHECK(ci.size() == 6);
  for (const auto& c : ci) {
    CHECK(c.r == 0);
    CHECK(c.lambda2 == 0.0);
  }
}

TEST_CASE("grid search: singleton equals train, selection is the table argmax, failures recorded") {
  const auto data = small_synthetic(7, 2000);
  const auto train_set = select_split(data.triplets, Split::kTrain);
  const auto val_set = select_split(data.triplets, Split::kVal);
  TrainConfig config;
  config.epochs = 3;
  config.r = 2;
  config.learning_rate = 0.3;
  config.init_scale = 0.2;

  const auto single = grid_search(config, HyperGrid::singleton(config), train_set, val_set, data.store);
  const auto plain = train(config, train_set, val_set, data.store);
  REQUIRE(single.runs.size() == 1);
  CHECK(single.best.params == plain.params);
  CHECK(format_history_csv(single.best.history) == format_history_csv(plain.history));

  HyperGrid grid{{2, 99}, {0.0}, {0.0, 1e-3}, {0.5, 2.0}};
  const auto result = grid_search(config, grid, train_set, val_set, data.store);
  REQUIRE(result.runs.size() == 8);
  std::size_t failed = 0;
  for (const auto& run : result.runs) failed += !run.ok;
  CHECK(failed == 4);

  std::istringstream table(format_grid_csv(result));
  std::string line;
  std::getline(table, line);
  CHECK(line == "r,lambda1,lambda2,tau,val_acc,status");
  double best = -1;
  std::size_t best_row = 0, row = 0;
  while (std::getline(table, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    REQUIRE(cells.size() == 6);
    if (cells[5] == "ok" && std::stod(cells[4]) > best) {
      best = std::stod(cells[4]);
      best_row = row;
    }
    ++row;
  }
  CHECK(result.best_index == best_row);
  CHECK(prediction_accuracy(result.best.params, val_set, data.store) == doctest::Approx(best).epsilon(1e-9));

  CHECK_THROWS_AS(grid_search(config, HyperGrid{{99}, {0.0}, {0.0}, {1.0}}, train_set, val_set, data.store),
                  ValidationError);
  CHECK_THROWS_AS(grid_search(config, HyperGrid{{}, {0.0}, {0.0}, {1.0}}, train_set, val_set, data.store),
                  ValidationError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.lambda2 = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}
