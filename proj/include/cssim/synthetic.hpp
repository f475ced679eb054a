#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cssim/dataset.hpp"
#include "cssim/embedding_store.hpp"
#include "cssim/model.hpp"

namespace cssim {

struct SyntheticSpec {
  int d = 16;
  int r_true = 4;
  int n_images = 200;
  int n_clusters = 8;
  double cluster_spread = 0.5;  // expected norm of the per-image offset from its centroid
  int n_trials = 25000;
  int n_participants = 10;
  std::uint64_t seed = 0;

  bool context_free = false;     // constant B for negative controls
  double kernel_gain = 3.0;      // row scale of the ground-truth B_c
  double transform_noise = 0.5;  // std of the W - I perturbation, times 1/sqrt(d)
  SplitRatios ratios{};

  void validate() const;
};

/// Unit-norm cluster centroids, n_clusters x d, deterministic in seed.
RowMatrix cluster_centroids(const SyntheticSpec& spec);

/// Ground-truth context-sensitive model. Each cluster centroid, used as a
/// context, maps exactly to a B_c whose rows are kernel_gain times distinct
/// coordinate axes, with a different axis subset per cluster. With
/// context_free the mapper is constant.
ModelParams gen_ground_truth(const SyntheticSpec& spec);

struct SyntheticData {
  EmbeddingStore store;
  std::vector<ContextTriplet> triplets;  // split-tagged
  ClassMap classes;
};

/// Images are centroid + isotropic noise and take their cluster as class.
/// Each trial draws three images from three distinct clusters and a context
/// image outside the triplet; the oddball is sampled from `truth`.
/// Participants are assigned round-robin and splits are stratified by
/// participant.
SyntheticData sample_dataset(const SyntheticSpec& spec, const ModelParams& truth);

/// Mean over triplets of max_k Pr_truth(k): the expected accuracy of the
/// truth's own argmax predictor.
double bayes_accuracy(const ModelParams& truth, std::span<const ContextTriplet> triplets,
                      const EmbeddingStore& store);

}  // namespace cssim
