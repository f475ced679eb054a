#include "cssim/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cssim/errors.hpp"
#include "cssim/random.hpp"

namespace cssim {

namespace {

bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_bits(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

void ModelParams::validate() const {
  if (d < 1) throw ValidationError("model dim must be positive");
  if (!(tau > 0) || !std::isfinite(tau)) throw ValidationError("temperature must be positive and finite");
  if (W.rows() != d || W.cols() != d || b.size() != d) {
    throw ValidationError("context-insensitive transform has wrong shape for d=" + std::to_string(d));
  }
  if (context_sensitive()) {
    if (r < 1 || r > d) {
      throw ValidationError("rank r=" + std::to_string(r) + " must satisfy 0 < r <= d=" + std::to_string(d));
    }
    const Eigen::Index rd = Eigen::Index{r} * d;
    if (M.rows() != rd || M.cols() != d || m0.size() != rd) {
      throw ValidationError("context mapper has wrong shape for r=" + std::to_string(r) +
                            ", d=" + std::to_string(d));
    }
  } else if (r != 0 || M.size() != 0 || m0.size() != 0) {
    throw ValidationError("context-insensitive model must not carry a mapper");
  }
  if (!all_finite(W) || !b.allFinite() || !all_finite(M) || !m0.allFinite()) {
    throw ValidationError("model parameters contain non-finite values");
  }
  if (!mapper_bias && m0.size() != 0 && !m0.isZero(0.0)) {
    throw ValidationError("bias-free mapper has nonzero m0");
  }
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.d == b.d && a.r == b.r && a.tau == b.tau && a.kind == b.kind &&
         a.context_input == b.context_input && a.mapper_bias == b.mapper_bias &&
         same_bits(a.W, b.W) && same_bits(a.b, b.b) && same_bits(a.M, b.M) && same_bits(a.m0, b.m0);
}

double default_init_scale(int d) { return 1e-2 / std::sqrt(static_cast<double>(d)); }

ModelParams init_params(int d, int r, double tau, std::uint64_t seed, std::optional<double> init_scale) {
  if (d < 1) throw ValidationError("model dim must be positive");
  if (r < 1 || r > d) {
    throw ValidationError("rank r=" + std::to_string(r) + " must satisfy 0 < r <= d=" + std::to_string(d));
  }
  const double sigma = init_scale.value_or(default_init_scale(d));
  if (!(sigma >= 0)) throw ValidationError("init scale must be nonnegative");

  ModelParams p;
  p.d = d;
  p.r = r;
  p.tau = tau;
  p.W = Matrix::Identity(d, d);
  p.b = Vector::Zero(d);
  const Eigen::Index rd = Eigen::Index{r} * d;
  p.M = Matrix::Zero(rd, d);
  p.m0 = Vector::Zero(rd);
  if (sigma > 0) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    // Row-major fill order so the draw sequence does not depend on Eigen's storage order.
    for (Eigen::Index i = 0; i < rd; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) p.M(i, k) = normal(rng);
    }
    for (Eigen::Index i = 0; i < rd; ++i) p.m0(i) = normal(rng);
  }
  p.validate();
  return p;
}

ModelParams init_cit_params(int d, double tau) {
  ModelParams p;
  p.d = d;
  p.r = 0;
  p.tau = tau;
  p.kind = ModelKind::kContextInsensitive;
  p.W = Matrix::Identity(d, d);
  p.b = Vector::Zero(d);
  p.M = Matrix(0, d);
  p.validate();
  return p;
}

Vector cit_forward(const ModelParams& params, const VectorRef& x, double eps) {
  if (x.size() != params.d) throw ValidationError("embedding has dim " + std::to_string(x.size()) +
                                                  ", model expects " + std::to_string(params.d));
  Vector z = params.W * x + params.b;
  return l2_normalize(z, eps);
}

Vector context_features(const ModelParams& params, const VectorRef& x_c) {
  if (x_c.size() != params.d) throw ValidationError("context embedding has dim " + std::to_string(x_c.size()) +
                                                    ", model expects " + std::to_string(params.d));
  switch (params.context_input) {
    case ContextInput::kNormalized: return l2_normalize(x_c);
    case ContextInput::kCit: return cit_forward(params, x_c);
    case ContextInput::kRaw: return x_c;
  }
  return x_c;
}

RowMatrix context_matrix(const ModelParams& params, const VectorRef& x_c) {
  if (!params.context_sensitive()) throw ValidationError("context-insensitive model has no context matrix");
  const Vector beta = params.M * context_features(params, x_c) + params.m0;
  return ConstRowMatrixMap(beta.data(), params.r, params.d);
}

double similarity(const RowMatrix& B, const VectorRef& xt_i, const VectorRef& xt_j) {
  const Vector yi = B * xt_i;
  const Vector yj = B * xt_j;
  return yi.dot(yj);
}

TripletProbabilities softmax_pairs(const std::array<double, 3>& pair_similarities, double tau) {
  TripletProbabilities out;
  out.pair_similarities = pair_similarities;
  std::array<double, 3> logits{};
  for (std::size_t k = 0; k < 3; ++k) logits[k] = pair_similarities[k] / tau;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    out.probs[k] = std::exp(logits[k] - top);
    total += out.probs[k];
  }
  for (auto& p : out.probs) p /= total;
  return out;
}

TripletProbabilities triplet_probs(const ModelParams& params, const VectorRef& x_p, const VectorRef& x_q,
                                   const VectorRef& x_r, const VectorRef& x_c) {
  const Vector tp = cit_forward(params, x_p);
  const Vector tq = cit_forward(params, x_q);
  const Vector tr = cit_forward(params, x_r);
  std::array<double, 3> sims{};
  if (params.context_sensitive()) {
    const RowMatrix B = context_matrix(params, x_c);
    const Vector yp = B * tp, yq = B * tq, yr = B * tr;
    sims = {yq.dot(yr), yp.dot(yr), yp.dot(yq)};
  } else {
    sims = {tq.dot(tr), tp.dot(tr), tp.dot(tq)};
  }
  return softmax_pairs(sims, params.tau);
}

TripletProbabilities triplet_probs(const ModelParams& params, const EmbeddingStore& store,
                                   const ContextTriplet& t) {
  return triplet_probs(params, store.vector(t.image_ids[0]), store.vector(t.image_ids[1]),
                       store.vector(t.image_ids[2]), store.vector(t.context_id));
}

int predict_oddball(const std::array<double, 3>& scores) {
  int best = 0;
  for (int k = 1; k < 3; ++k) {
    if (scores[static_cast<std::size_t>(k)] > scores[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

int predict_oddball(const TripletProbabilities& probs) { return predict_oddball(probs.probs); }

int baseline_predict(const EmbeddingStore& store, const ContextTriplet& t, BaselineMode mode,
                     const ModelParams* params) {
  std::array<Vector, 3> u;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto x = store.vector(t.image_ids[i]);
    if (mode == BaselineMode::kFmCosine) {
      u[i] = l2_normalize(x);
    } else {
      if (params == nullptr) throw ValidationError("cit_only baseline needs model parameters");
      u[i] = cit_forward(*params, x);
    }
  }
  // The oddball is the image excluded from the most similar pair.
  return predict_oddball(std::array<double, 3>{u[1].dot(u[2]), u[0].dot(u[2]), u[0].dot(u[1])});
}

}  // namespace cssim
