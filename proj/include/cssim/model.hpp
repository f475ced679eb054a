#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "cssim/config.hpp"
#include "cssim/dataset.hpp"
#include "cssim/embedding_store.hpp"
#include "cssim/linalg.hpp"

namespace cssim {

enum class ModelKind {
  kContextSensitive,    // CIT + context-conditioned bilinear kernel
  kContextInsensitive,  // CIT + dot product; no mapper
};

/// What the context mapper consumes.
enum class ContextInput {
  kNormalized,  // x_c / ‖x_c‖ (default)
  kCit,         // the context's own CIT output
  kRaw,         // x_c as stored
};

/// Trainable state.
///
/// The context mapper is one linear layer: vec(B_c) = M v_c + m0, where v_c is
/// the context feature selected by `context_input` and vec() flattens the
/// r x d matrix B_c row-major. The kernel is A_c = B_cᵀ B_c, so
/// s(i, j | c) = (B_c x̃_i) · (B_c x̃_j).
///
/// Context-insensitive models carry r = 0 and empty M, m0.
struct ModelParams {
  int d = 0;
  int r = 0;
  double tau = 1.0;
  ModelKind kind = ModelKind::kContextSensitive;
  ContextInput context_input = ContextInput::kNormalized;
  bool mapper_bias = true;

  Matrix W;   // d x d
  Vector b;   // d
  Matrix M;   // (r*d) x d
  Vector m0;  // r*d; held at zero when !mapper_bias

  bool context_sensitive() const { return kind == ModelKind::kContextSensitive; }

  /// Throws ValidationError on shape mismatch, r > d, tau <= 0 or non-finite
  /// entries.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&);
};

/// Default standard deviation of the mapper initialization, 1e-2 / sqrt(d).
double default_init_scale(int d);

/// W = I, b = 0; M and m0 i.i.d. N(0, init_scale²), deterministic in seed.
/// Throws ValidationError unless 0 < r <= d.
ModelParams init_params(int d, int r, double tau, std::uint64_t seed,
                        std::optional<double> init_scale = std::nullopt);

/// Context-insensitive model: W = I, b = 0, no mapper.
ModelParams init_cit_params(int d, double tau);

/// x̃ = (W x + b) / ‖W x + b‖.
Vector cit_forward(const ModelParams& params, const VectorRef& x,
                   double eps = kTolerances.degenerate_norm);

/// The mapper input v_c for a raw context embedding.
Vector context_features(const ModelParams& params, const VectorRef& x_c);

/// B_c as an r x d matrix.
RowMatrix context_matrix(const ModelParams& params, const VectorRef& x_c);

/// (B x̃_i) · (B x̃_j). A_c is never formed.
double similarity(const RowMatrix& B, const VectorRef& xt_i, const VectorRef& xt_j);

struct TripletProbabilities {
  // probs[k] is the probability that image k is the oddball;
  // pair_similarities[k] is the similarity of the other two images,
  // i.e. (s_qr, s_pr, s_pq).
  std::array<double, 3> probs{};
  std::array<double, 3> pair_similarities{};
};

/// Softmax over pair_similarities / tau with max subtraction.
TripletProbabilities softmax_pairs(const std::array<double, 3>& pair_similarities, double tau);

TripletProbabilities triplet_probs(const ModelParams& params, const VectorRef& x_p,
                                   const VectorRef& x_q, const VectorRef& x_r,
                                   const VectorRef& x_c);

TripletProbabilities triplet_probs(const ModelParams& params, const EmbeddingStore& store,
                                   const ContextTriplet& triplet);

/// argmax, lowest index on ties.
int predict_oddball(const TripletProbabilities& probs);
int predict_oddball(const std::array<double, 3>& scores);

enum class BaselineMode {
  kFmCosine,  // cosine of raw embeddings
  kCitOnly,   // dot product of CIT outputs
};

/// Oddball = image outside the most similar pair. kFmCosine ignores `params`
/// and the context image.
int baseline_predict(const EmbeddingStore& store, const ContextTriplet& triplet, BaselineMode mode,
                     const ModelParams* params = nullptr);

}  // namespace cssim
