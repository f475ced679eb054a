#include "cssim/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "cssim/random.hpp"
#include "parallel.hpp"

namespace cssim {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw ValidationError("lambda1 and lambda2 must be >= 0");
  if (!(tau > 0)) throw ValidationError("tau must be > 0");
  if (kind == ModelKind::kContextSensitive && r < 1) throw ValidationError("rank r must be >= 1");
  if (threads < 1) throw ValidationError("threads must be >= 1");
}

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  return {Matrix::Zero(p.W.rows(), p.W.cols()), Vector::Zero(p.b.size()),
          Matrix::Zero(p.M.rows(), p.M.cols()), Vector::Zero(p.m0.size())};
}

bool GradientSet::all_finite() const {
  return dW.allFinite() && db.allFinite() && dM.allFinite() && dm0.allFinite();
}

double kernel_identity_penalty(const Eigen::Ref<const RowMatrix>& B) {
  // ‖BᵀB‖_F² = ‖BBᵀ‖_F² and tr(BᵀB) = ‖B‖_F², so only the r x r Gram is formed.
  const Matrix gram = B * B.transpose();
  return gram.squaredNorm() - 2.0 * B.squaredNorm() + static_cast<double>(B.cols());
}

namespace {

// Rows of `in` divided by their norms; norms returned in `norms`.
RowMatrix normalize_rows(const RowMatrix& in, Vector& norms) {
  RowMatrix out(in.rows(), in.cols());
  norms.resize(in.rows());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const double n = in.row(i).norm();
    if (!(n > kTolerances.degenerate_norm)) {
      throw DegenerateError("degenerate norm " + std::to_string(n) + " in normalization");
    }
    norms(i) = n;
    out.row(i) = in.row(i) / n;
  }
  return out;
}

// Backprop through u = z/‖z‖ row-wise: dz = (I - u uᵀ) du / ‖z‖.
RowMatrix normalization_backward(const RowMatrix& u, const Vector& norms, const RowMatrix& du) {
  RowMatrix dz(du.rows(), du.cols());
  for (Eigen::Index i = 0; i < du.rows(); ++i) {
    dz.row(i) = (du.row(i) - u.row(i) * u.row(i).dot(du.row(i))) / norms(i);
  }
  return dz;
}

RowMatrix affine_rows(const RowMatrix& X, const ModelParams& p) {
  RowMatrix Z = X * p.W.transpose();
  Z.rowwise() += p.b.transpose();
  return Z;
}

}  // namespace

// Objective per triplet s with images (0, 1, 2), oddball k*, context c:
//
//   z_i = W x_i + b,  x̃_i = z_i/‖z_i‖,  B = reshape(M v_c + m0),  y_i = B x̃_i
//   S_k = y_i · y_j for {i, j} = {0,1,2} \ {k},   ℓ_k = S_k / τ
//   nll_s = logsumexp(ℓ) - ℓ_{k*}
//
// Backward, with everything scaled by 1/n:
//   (a) ∂nll/∂S_k = (p_k - [k = k*]) / τ =: g_k             (sums to 0 over k)
//   (b) ∂S_k/∂B = B(x̃_i x̃_jᵀ + x̃_j x̃_iᵀ), accumulated as Σ_i dy_i x̃_iᵀ
//       with dy_i = Σ_{k≠i} g_k y_{other(i,k)}
//   (c) ∂/∂x̃_i = Bᵀ dy_i            (context-insensitive: Σ_{k≠i} g_k x̃_other)
//   (d) ∂x̃/∂z = (I - x̃x̃ᵀ)/‖z‖, then dW = Σ dz xᵀ, db = Σ dz
//   (e) ∂/∂B ‖BᵀB - I‖_F² = 4(BBᵀB - B), weighted by λ2/n
//   (f) dM = Σ_s vec(dB_s) v_sᵀ, dm0 = Σ_s vec(dB_s); with the CIT context
//       input, dv = Mᵀ vec(dB) is pushed back through (d) into W and b
//   plus 2λ1(W - I) for the transform penalty.
//
// Per-triplet quantities land in disjoint rows and every sum runs in triplet
// order, so the result does not depend on the thread count.
LossTerms evaluate_objective(const ModelParams& params, std::span<const ContextTriplet> batch,
                             const EmbeddingStore& store, const LossOptions& options, GradientSet* grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw ValidationError("empty batch");
  const int d = params.d;
  if (store.dim() != d) {
    throw ValidationError("embedding dim " + std::to_string(store.dim()) + " does not match model dim " +
                          std::to_string(d));
  }
  const bool cs = params.context_sensitive();
  const Eigen::Index rows = static_cast<Eigen::Index>(3 * n);
  const Eigen::Index r = params.r;
  const Eigen::Index rd = r * d;
  const double inv_n = 1.0 / static_cast<double>(n);

  RowMatrix X(rows, d);
  RowMatrix Xc(cs ? static_cast<Eigen::Index>(n) : 0, d);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& t = batch[s];
    if (t.oddball_index < 0 || t.oddball_index > 2) throw ValidationError("oddball_index out of range");
    for (std::size_t i = 0; i < 3; ++i) {
      X.row(static_cast<Eigen::Index>(3 * s + i)) = store.vector(t.image_ids[i]).transpose();
    }
    if (cs) Xc.row(static_cast<Eigen::Index>(s)) = store.vector(t.context_id).transpose();
  }

  Vector znorm;
  const RowMatrix Xt = normalize_rows(affine_rows(X, params), znorm);

  RowMatrix V, Beta;
  Vector vnorm;
  if (cs) {
    switch (params.context_input) {
      case ContextInput::kNormalized: V = normalize_rows(Xc, vnorm); break;
      case ContextInput::kCit: V = normalize_rows(affine_rows(Xc, params), vnorm); break;
      case ContextInput::kRaw: V = Xc; break;
    }
    Beta = V * params.M.transpose();
    Beta.rowwise() += params.m0.transpose();
  }

  const bool want_grad = grads != nullptr;
  std::vector<double> nll(n), penalty(n, 0.0);
  RowMatrix dXt, dBeta;
  if (want_grad) {
    dXt = RowMatrix::Zero(rows, d);
    if (cs) dBeta.resize(static_cast<Eigen::Index>(n), rd);
  }
  const double tau = params.tau;
  const double w_nll = options.nll_weight;
  const double lambda2 = options.lambda2;

  detail::parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
    Matrix Y(r, 3), dY(r, 3);
    for (std::size_t s = begin; s < end; ++s) {
      const Eigen::Index base = static_cast<Eigen::Index>(3 * s);
      const int target = batch[s].oddball_index;
      std::array<double, 3> S{};
      ConstRowMatrixMap B(cs ? Beta.row(static_cast<Eigen::Index>(s)).data() : nullptr, r, d);
      if (cs) {
        Y.noalias() = B * Xt.middleRows(base, 3).transpose();
        S = {Y.col(1).dot(Y.col(2)), Y.col(0).dot(Y.col(2)), Y.col(0).dot(Y.col(1))};
        penalty[s] = kernel_identity_penalty(B);
      } else {
        S = {Xt.row(base + 1).dot(Xt.row(base + 2)), Xt.row(base).dot(Xt.row(base + 2)),
             Xt.row(base).dot(Xt.row(base + 1))};
      }
      const auto probs = softmax_pairs(S, tau);
      const double top = std::max({S[0], S[1], S[2]}) / tau;
      double lse = 0.0;
      for (double v : S) lse += std::exp(v / tau - top);
      nll[s] = top + std::log(lse) - S[static_cast<std::size_t>(target)] / tau;

      if (!want_grad) continue;
      std::array<double, 3> g{};
      for (int k = 0; k < 3; ++k) {
        g[static_cast<std::size_t>(k)] =
            w_nll * (probs.probs[static_cast<std::size_t>(k)] - (k == target ? 1.0 : 0.0)) / tau * inv_n;
      }
      if (cs) {
        dY.col(0) = g[1] * Y.col(2) + g[2] * Y.col(1);
        dY.col(1) = g[0] * Y.col(2) + g[2] * Y.col(0);
        dY.col(2) = g[0] * Y.col(1) + g[1] * Y.col(0);
        Eigen::Map<RowMatrix> dB(dBeta.row(static_cast<Eigen::Index>(s)).data(), r, d);
        dB.noalias() = dY * Xt.middleRows(base, 3);
        if (lambda2 != 0.0) {
          const Matrix gram = B * B.transpose();
          dB.noalias() += (4.0 * lambda2 * inv_n) * (gram * B - B);
        }
        dXt.middleRows(base, 3).noalias() = (B.transpose() * dY).transpose();
      } else {
        dXt.row(base) = g[1] * Xt.row(base + 2) + g[2] * Xt.row(base + 1);
        dXt.row(base + 1) = g[0] * Xt.row(base + 2) + g[2] * Xt.row(base);
        dXt.row(base + 2) = g[0] * Xt.row(base + 1) + g[1] * Xt.row(base);
      }
    }
  });

  LossTerms terms;
  for (std::size_t s = 0; s < n; ++s) terms.nll += nll[s];
  terms.nll *= inv_n;
  const Matrix w_offset = params.W - Matrix::Identity(d, d);
  terms.reg_w = options.lambda1 * w_offset.squaredNorm();
  if (cs) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) sum += penalty[s];
    terms.reg_a = lambda2 * sum * inv_n;
  }
  terms.total = w_nll * terms.nll + terms.reg_w + terms.reg_a;

  if (want_grad) {
    GradientSet& out = *grads;
    const RowMatrix dZ = normalization_backward(Xt, znorm, dXt);
    out.dW = dZ.transpose() * X;
    out.db = dZ.colwise().sum().transpose();
    if (cs) {
      out.dM = dBeta.transpose() * V;
      out.dm0 = params.mapper_bias ? Vector(dBeta.colwise().sum().transpose()) : Vector::Zero(rd);
      if (params.context_input == ContextInput::kCit) {
        const RowMatrix dV = dBeta * params.M;
        const RowMatrix dZc = normalization_backward(V, vnorm, dV);
        out.dW += dZc.transpose() * Xc;
        out.db += dZc.colwise().sum().transpose();
      }
    } else {
      out.dM.resize(0, 0);
      out.dm0.resize(0);
    }
    out.dW += 2.0 * options.lambda1 * w_offset;
  }
  return terms;
}

LossTerms batch_loss(const ModelParams& params, std::span<const ContextTriplet> batch,
                     const EmbeddingStore& store, double lambda1, double lambda2) {
  return evaluate_objective(params, batch, store, {.lambda1 = lambda1, .lambda2 = lambda2}, nullptr);
}

GradientSet batch_gradients(const ModelParams& params, std::span<const ContextTriplet> batch,
                            const EmbeddingStore& store, double lambda1, double lambda2) {
  GradientSet g;
  evaluate_objective(params, batch, store, {.lambda1 = lambda1, .lambda2 = lambda2}, &g);
  return g;
}

namespace {

void check_shapes(const ModelParams& p, const GradientSet& g) {
  if (g.dW.rows() != p.W.rows() || g.dW.cols() != p.W.cols() || g.db.size() != p.b.size() ||
      g.dM.rows() != p.M.rows() || g.dM.cols() != p.M.cols() || g.dm0.size() != p.m0.size()) {
    throw ValidationError("gradient shapes do not match parameters");
  }
}

void apply_sgd(ModelParams& p, const GradientSet& g, double lr) {
  p.W -= lr * g.dW;
  p.b -= lr * g.db;
  p.M -= lr * g.dM;
  if (p.mapper_bias) p.m0 -= lr * g.dm0;
}

}  // namespace

ModelParams sgd_step(const ModelParams& params, const GradientSet& grads, double learning_rate) {
  check_shapes(params, grads);
  if (!grads.all_finite()) {
    throw DivergenceError("non-finite gradient", std::make_shared<const ModelParams>(params));
  }
  ModelParams next = params;
  apply_sgd(next, grads, learning_rate);
  return next;
}

ModelParams initial_params(const TrainConfig& config, int d) {
  if (config.kind == ModelKind::kContextInsensitive) return init_cit_params(d, config.tau);
  ModelParams p = init_params(d, config.r, config.tau, config.seed, config.init_scale);
  p.context_input = config.context_input;
  p.mapper_bias = config.mapper_bias;
  if (!p.mapper_bias) p.m0.setZero();
  return p;
}

double prediction_accuracy(const ModelParams& params, std::span<const ContextTriplet> triplets,
                           const EmbeddingStore& store) {
  if (triplets.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  for (const auto& t : triplets) {
    if (predict_oddball(triplet_probs(params, store, t)) == t.oddball_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(triplets.size());
}

namespace {

struct Accumulator {
  double loss = 0, nll = 0, reg_w = 0, reg_a = 0;
  std::size_t count = 0;

  void add(const LossTerms& t, std::size_t n) {
    const double w = static_cast<double>(n);
    loss += w * t.total;
    nll += w * t.nll;
    reg_w += w * t.reg_w;
    reg_a += w * t.reg_a;
    count += n;
  }

  EpochStats stats(int epoch, double val_acc) const {
    const double c = static_cast<double>(count);
    return {epoch, loss / c, nll / c, reg_w / c, reg_a / c, val_acc};
  }
};

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const ContextTriplet> train_set,
                  std::span<const ContextTriplet> val_set, const EmbeddingStore& store) {
  config.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");

  ModelParams params = initial_params(config, store.dim());
  const LossOptions options{.lambda1 = config.lambda1, .lambda2 = config.lambda2, .threads = config.threads};
  const std::size_t n = train_set.size();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  TrainResult result;
  {
    Accumulator acc;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const auto len = std::min(batch_size, n - start);
      acc.add(evaluate_objective(params, train_set.subspan(start, len), store, options, nullptr), len);
    }
    result.history.initial = acc.stats(0, prediction_accuracy(params, val_set, store));
  }
  ModelParams best = params;
  double best_acc = result.history.initial.val_acc;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(config.seed, 1);
  std::vector<ContextTriplet> batch;
  batch.reserve(batch_size);
  GradientSet grads;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    Accumulator acc;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const auto len = std::min(batch_size, n - start);
      batch.clear();
      for (std::size_t i = start; i < start + len; ++i) batch.push_back(train_set[order[i]]);
      const auto terms = evaluate_objective(params, batch, store, options, &grads);
      if (!std::isfinite(terms.total) || !grads.all_finite()) {
        throw DivergenceError(fmt::format("non-finite {} at epoch {}, batch starting at {}",
                                          std::isfinite(terms.total) ? "gradient" : "loss", epoch, start),
                              std::make_shared<const ModelParams>(params));
      }
      apply_sgd(params, grads, config.learning_rate);
      acc.add(terms, len);
    }
    const double val_acc = prediction_accuracy(params, val_set, store);
    result.history.epochs.push_back(acc.stats(epoch, val_acc));
    if (val_set.empty() || val_acc > best_acc) {
      best = params;
      best_acc = val_acc;
      result.history.best_epoch = epoch;
    }
  }
  result.params = std::move(best);
  result.final_params = std::move(params);
  return result;
}

std::string format_history_csv(const TrainHistory& history) {
  std::string out = "epoch,loss,nll,reg_w,reg_a,val_acc\n";
  auto row = [&](const EpochStats& e) {
    out += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", e.epoch, e.loss, e.nll, e.reg_w,
                       e.reg_a, e.val_acc);
  };
  row(history.initial);
  for (const auto& e : history.epochs) row(e);
  return out;
}

HyperGrid HyperGrid::singleton(const TrainConfig& c) { return {{c.r}, {c.lambda1}, {c.lambda2}, {c.tau}}; }

std::vector<TrainConfig> HyperGrid::expand(const TrainConfig& base) const {
  const bool cs = base.kind == ModelKind::kContextSensitive;
  const std::vector<int> rs = cs ? r : std::vector<int>{0};
  const std::vector<double> l2s = cs ? lambda2 : std::vector<double>{0.0};
  std::vector<TrainConfig> out;
  for (int rv : rs)
    for (double l1 : lambda1)
      for (double l2 : l2s)
        for (double t : tau) {
          TrainConfig c = base;
          c.r = rv;
          c.lambda1 = l1;
          c.lambda2 = l2;
          c.tau = t;
          out.push_back(c);
        }
  return out;
}

GridSearchResult grid_search(const TrainConfig& base, const HyperGrid& grid,
                             std::span<const ContextTriplet> train_set, std::span<const ContextTriplet> val_set,
                             const EmbeddingStore& store) {
  if (grid.r.empty() || grid.lambda1.empty() || grid.lambda2.empty() || grid.tau.empty()) {
    throw ValidationError("every hyperparameter grid must be nonempty");
  }
  GridSearchResult result;
  std::optional<std::size_t> best;
  for (const auto& config : grid.expand(base)) {
    GridRun run{config, std::numeric_limits<double>::quiet_NaN(), false, ""};
    try {
      TrainResult trained = train(config, train_set, val_set, store);
      const auto& h = trained.history;
      run.val_acc = h.best_epoch == 0 ? h.initial.val_acc
                                      : h.epochs[static_cast<std::size_t>(h.best_epoch - 1)].val_acc;
      run.ok = true;
      run.status = "ok";
      const bool better = !best || run.val_acc > result.runs[*best].val_acc ||
                          (std::isnan(result.runs[*best].val_acc) && !std::isnan(run.val_acc));
      if (better) {
        best = result.runs.size();
        result.best = std::move(trained);
      }
    } catch (const Error& e) {
      run.status = std::string("failed: ") + e.what();
    }
    result.runs.push_back(std::move(run));
  }
  if (!best) throw ValidationError("every grid configuration failed");
  result.best_index = *best;
  return result;
}

std::string format_grid_csv(const GridSearchResult& result) {
  std::string out = "r,lambda1,lambda2,tau,val_acc,status\n";
  for (const auto& run : result.runs) {
    std::string status = run.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out += fmt::format("{},{:g},{:g},{:g},{:.10g},{}\n", run.config.r, run.config.lambda1, run.config.lambda2,
                       run.config.tau, run.val_acc, status);
  }
  return out;
}

}  // namespace cssim
