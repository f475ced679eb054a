#pragma once

#include <span>
#include <string>
#include <vector>

#include "cssim/embedding_store.hpp"
#include "cssim/model.hpp"

namespace cssim {

enum class RsmMode {
  kContextSensitive,  // s(i, j | c)
  kCitOnly,           // x̃_i · x̃_j
};

/// Representational similarity matrix over a fixed image set.
struct Rsm {
  std::vector<ImageId> image_ids;
  Matrix values;
};

Rsm compute_rsm(const ModelParams& params, ImageId context_id, std::span<const ImageId> reference_ids,
                const EmbeddingStore& store, RsmMode mode);

/// Vectors the PCA view is computed from: B_c x̃_i (context-sensitive) or x̃_i.
RowMatrix representation_vectors(const ModelParams& params, ImageId context_id,
                                 std::span<const ImageId> ids, const EmbeddingStore& store, RsmMode mode);

struct ProjectionCoords {
  std::vector<ImageId> image_ids;
  RowMatrix coords;                       // n x k scores
  std::vector<double> explained_variance; // ratio per component, nonincreasing
  RowMatrix components;                   // k x m principal directions
};

/// Principal component scores of the rows of `vectors`. Each component is
/// signed so that its largest-magnitude loading is positive.
/// Throws ValidationError when rows < k and DegenerateError on zero variance.
ProjectionCoords pca_project(const RowMatrix& vectors, int k = 2);

/// Header row of IDs, then one row of values per image.
std::string format_rsm_csv(const Rsm& rsm);
/// id,pc1,pc2,...
std::string format_coords_csv(const ProjectionCoords& coords);

}  // namespace cssim
