#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cssim/dataset.hpp"
#include "cssim/embedding_store.hpp"
#include "cssim/errors.hpp"
#include "cssim/model.hpp"

namespace cssim {

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  int batch_size = 128;
  double lambda1 = 1e-4;
  double lambda2 = 1e-5;
  int r = 16;
  double tau = 1.0;
  std::uint64_t seed = 0;
  bool shuffle = true;

  ModelKind kind = ModelKind::kContextSensitive;
  ContextInput context_input = ContextInput::kNormalized;
  bool mapper_bias = true;
  std::optional<double> init_scale;  // defaults to default_init_scale(d)
  int threads = 1;

  void validate() const;
};

/// Same shapes as ModelParams.
struct GradientSet {
  Matrix dW;
  Vector db;
  Matrix dM;
  Vector dm0;

  static GradientSet zeros_like(const ModelParams& params);
  bool all_finite() const;
};

/// The three terms of the objective over a batch of n triplets:
///   nll   = -(1/n) Σ log Pr(k*_s)
///   reg_w = λ1 ‖W - I‖_F²
///   reg_a = (λ2/n) Σ ‖A_{c_s} - I‖_F²
struct LossTerms {
  double total = 0.0;
  double nll = 0.0;
  double reg_w = 0.0;
  double reg_a = 0.0;
};

struct LossOptions {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  // Multiplies the NLL term in `total` and in the gradient; 0 isolates the
  // regularizers.
  double nll_weight = 1.0;
  int threads = 1;
};

/// ‖BᵀB - I_d‖_F² in factored form: ‖BBᵀ‖_F² - 2‖B‖_F² + d.
double kernel_identity_penalty(const Eigen::Ref<const RowMatrix>& B);

/// Loss and, when `grads` is non-null, its exact gradient. Per-triplet work
/// may run on `threads` workers; all reductions happen in triplet order, so
/// results are bit-identical for any thread count.
LossTerms evaluate_objective(const ModelParams& params, std::span<const ContextTriplet> batch,
                             const EmbeddingStore& store, const LossOptions& options,
                             GradientSet* grads);

LossTerms batch_loss(const ModelParams& params, std::span<const ContextTriplet> batch,
                     const EmbeddingStore& store, double lambda1, double lambda2);

GradientSet batch_gradients(const ModelParams& params, std::span<const ContextTriplet> batch,
                            const EmbeddingStore& store, double lambda1, double lambda2);

/// Thrown when a loss or gradient entry is non-finite. Carries the last
/// parameters for which everything was finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::shared_ptr<const ModelParams> last_finite)
      : Error(ErrorKind::kDivergence, what), last_finite_(std::move(last_finite)) {}
  const std::shared_ptr<const ModelParams>& last_finite() const { return last_finite_; }

 private:
  std::shared_ptr<const ModelParams> last_finite_;
};

/// θ ← θ - lr ∇θ. Throws DivergenceError on non-finite gradients.
ModelParams sgd_step(const ModelParams& params, const GradientSet& grads, double learning_rate);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;  // batch-size weighted mean of minibatch objectives
  double nll = 0.0;
  double reg_w = 0.0;
  double reg_a = 0.0;
  double val_acc = 0.0;  // NaN without validation data
};

struct TrainHistory {
  EpochStats initial;               // epoch 0: full pass at initialization, no updates
  std::vector<EpochStats> epochs;   // one per completed epoch
  int best_epoch = 0;               // 0 means the initialization won
};

struct TrainResult {
  ModelParams params;  // from best_epoch
  ModelParams final_params;
  TrainHistory history;
};

/// Minibatch SGD over `train`, reshuffled each epoch by a generator seeded
/// from config.seed; the trailing partial batch is kept. Returns the
/// parameters of the epoch with the highest validation accuracy (earliest on
/// ties; the last epoch when `val` is empty).
TrainResult train(const TrainConfig& config, std::span<const ContextTriplet> train_set,
                  std::span<const ContextTriplet> val_set, const EmbeddingStore& store);

/// Parameters train() starts from.
ModelParams initial_params(const TrainConfig& config, int d);

double prediction_accuracy(const ModelParams& params, std::span<const ContextTriplet> triplets,
                           const EmbeddingStore& store);

std::string format_history_csv(const TrainHistory& history);

struct HyperGrid {
  std::vector<int> r{16, 32};
  std::vector<double> lambda1{1e-4, 1e-3};
  std::vector<double> lambda2{1e-5, 1e-4, 1e-3};
  std::vector<double> tau{1.0, 5.0, 7.5};

  static HyperGrid singleton(const TrainConfig& config);
  /// Configurations in r, lambda1, lambda2, tau nesting order. For
  /// context-insensitive models r and lambda2 are collapsed to {0}.
  std::vector<TrainConfig> expand(const TrainConfig& base) const;
};

struct GridRun {
  TrainConfig config;
  double val_acc = 0.0;
  bool ok = false;
  std::string status;
};

struct GridSearchResult {
  std::vector<GridRun> runs;
  std::size_t best_index = 0;
  TrainResult best;
};

/// One train() per configuration; failed runs are recorded and skipped.
/// Throws ValidationError when the grid is empty or every run failed.
GridSearchResult grid_search(const TrainConfig& base, const HyperGrid& grid,
                             std::span<const ContextTriplet> train_set,
                             std::span<const ContextTriplet> val_set, const EmbeddingStore& store);

std::string format_grid_csv(const GridSearchResult& result);

}  // namespace cssim
