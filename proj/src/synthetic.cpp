#include "cssim/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cssim/errors.hpp"
#include "cssim/random.hpp"

namespace cssim {

namespace {

// Stream ids partition the seed's randomness between generation stages.
constexpr std::uint64_t kCentroidStream = 11;
constexpr std::uint64_t kTruthStream = 12;
constexpr std::uint64_t kImageStream = 13;
constexpr std::uint64_t kTrialStreamBase = 1ull << 32;

}  // namespace

void SyntheticSpec::validate() const {
  if (d < 1 || r_true < 1 || r_true > d) throw ValidationError("synthetic spec needs 0 < r_true <= d");
  if (n_images < 1 || n_clusters < 1 || n_trials < 1 || n_participants < 1) {
    throw ValidationError("synthetic spec counts must be positive");
  }
  if (n_clusters > n_images) throw ValidationError("n_clusters must not exceed n_images");
  if (n_clusters < 3) throw ValidationError("triplets need at least three clusters");
  if (n_images < 4) throw ValidationError("trials need at least four images");
  if (!(cluster_spread >= 0) || !(kernel_gain > 0) || !(transform_noise >= 0)) {
    throw ValidationError("synthetic spec scales must be nonnegative");
  }
}

RowMatrix cluster_centroids(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, kCentroidStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix c(spec.n_clusters, spec.d);
  for (Eigen::Index j = 0; j < c.rows(); ++j) {
    for (Eigen::Index k = 0; k < c.cols(); ++k) c(j, k) = normal(rng);
    c.row(j).normalize();
  }
  return c;
}

ModelParams gen_ground_truth(const SyntheticSpec& spec) {
  spec.validate();
  const int d = spec.d, r = spec.r_true;
  const Eigen::Index rd = Eigen::Index{r} * d;
  auto rng = make_rng(spec.seed, kTruthStream);
  std::normal_distribution<double> normal(0.0, 1.0);

  ModelParams p = init_params(d, r, 1.0, spec.seed, 0.0);
  const double w_sigma = spec.transform_noise / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index k = 0; k < d; ++k) p.W(i, k) += w_sigma * normal(rng);

  // Target B for each context prototype: gain * distinct axes.
  auto axis_subset = [&] {
    std::vector<int> axes(static_cast<std::size_t>(d));
    std::iota(axes.begin(), axes.end(), 0);
    std::shuffle(axes.begin(), axes.end(), rng);
    RowMatrix B = RowMatrix::Zero(r, d);
    for (int a = 0; a < r; ++a) B(a, axes[static_cast<std::size_t>(a)]) = spec.kernel_gain;
    return B;
  };

  if (spec.context_free) {
    const RowMatrix B = axis_subset();
    p.m0 = Eigen::Map<const Vector>(B.data(), rd);
    return p;
  }

  // Minimum-norm (M, m0) with M v_j + m0 = vec(B_j) for every centroid v_j.
  const RowMatrix centroids = cluster_centroids(spec);
  const Eigen::Index nc = centroids.rows();
  Matrix inputs(nc, d + 1);
  Matrix targets(nc, rd);
  for (Eigen::Index j = 0; j < nc; ++j) {
    inputs.row(j) << centroids.row(j), 1.0;
    const RowMatrix B = axis_subset();
    targets.row(j) = Eigen::Map<const Eigen::RowVectorXd>(B.data(), rd);
  }
  const Matrix theta = inputs.completeOrthogonalDecomposition().solve(targets);  // (d+1) x rd
  p.M = theta.topRows(d).transpose();
  p.m0 = theta.row(d).transpose();
  p.validate();
  return p;
}

SyntheticData sample_dataset(const SyntheticSpec& spec, const ModelParams& truth) {
  spec.validate();
  if (truth.d != spec.d) throw ValidationError("ground truth dim does not match synthetic spec");
  const RowMatrix centroids = cluster_centroids(spec);

  auto rng = make_rng(spec.seed, kImageStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = spec.cluster_spread / std::sqrt(static_cast<double>(spec.d));
  std::vector<ImageId> ids(static_cast<std::size_t>(spec.n_images));
  RowMatrix vectors(spec.n_images, spec.d);
  ClassMap classes;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(spec.n_clusters));
  for (int i = 0; i < spec.n_images; ++i) {
    const int cluster = i % spec.n_clusters;
    ids[static_cast<std::size_t>(i)] = static_cast<ImageId>(i + 1);
    classes.emplace(static_cast<ImageId>(i + 1), cluster);
    members[static_cast<std::size_t>(cluster)].push_back(static_cast<std::size_t>(i));
    for (int k = 0; k < spec.d; ++k) {
      vectors(i, k) = centroids(cluster, k) + (sigma > 0 ? sigma * normal(rng) : 0.0);
    }
  }
  SyntheticData data{EmbeddingStore(spec.d, ids, std::move(vectors)), {}, std::move(classes)};

  data.triplets.reserve(static_cast<std::size_t>(spec.n_trials));
  std::vector<TrialKey> keys;
  keys.reserve(static_cast<std::size_t>(spec.n_trials));
  std::vector<int> cluster_order(static_cast<std::size_t>(spec.n_clusters));
  for (int t = 0; t < spec.n_trials; ++t) {
    auto trng = make_rng(spec.seed, kTrialStreamBase + static_cast<std::uint64_t>(t));
    std::iota(cluster_order.begin(), cluster_order.end(), 0);
    std::shuffle(cluster_order.begin(), cluster_order.end(), trng);

    ContextTriplet trip;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& pool = members[static_cast<std::size_t>(cluster_order[i])];
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      trip.image_ids[i] = ids[pool[pick(trng)]];
    }
    std::uniform_int_distribution<std::size_t> any(0, ids.size() - 1);
    do {
      trip.context_id = ids[any(trng)];
    } while (std::find(trip.image_ids.begin(), trip.image_ids.end(), trip.context_id) != trip.image_ids.end());

    const auto probs = triplet_probs(truth, data.store, trip);
    std::discrete_distribution<int> choose(probs.probs.begin(), probs.probs.end());
    trip.oddball_index = choose(trng);
    trip.source_trial_id = static_cast<std::uint64_t>(t);
    trip.participant_id = static_cast<std::uint64_t>(t % spec.n_participants);
    keys.push_back({trip.source_trial_id, trip.participant_id});
    data.triplets.push_back(trip);
  }
  assign_splits(data.triplets, stratified_split(std::span<const TrialKey>(keys), spec.ratios, spec.seed));
  return data;
}

double bayes_accuracy(const ModelParams& truth, std::span<const ContextTriplet> triplets,
                      const EmbeddingStore& store) {
  if (triplets.empty()) throw ValidationError("bayes accuracy of an empty triplet list");
  double total = 0.0;
  for (const auto& t : triplets) {
    const auto p = triplet_probs(truth, store, t).probs;
    total += std::max({p[0], p[1], p[2]});
  }
  return total / static_cast<double>(triplets.size());
}

}  // namespace cssim
