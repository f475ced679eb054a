#include "cssim/analysis.hpp"

#include <fmt/format.h>

#include "cssim/errors.hpp"

namespace cssim {

RowMatrix representation_vectors(const ModelParams& params, ImageId context_id, std::span<const ImageId> ids,
                                 const EmbeddingStore& store, RsmMode mode) {
  RowMatrix xt(static_cast<Eigen::Index>(ids.size()), params.d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    xt.row(static_cast<Eigen::Index>(i)) = cit_forward(params, store.vector(ids[i])).transpose();
  }
  if (mode == RsmMode::kCitOnly) return xt;
  const RowMatrix B = context_matrix(params, store.vector(context_id));
  return xt * B.transpose();
}

Rsm compute_rsm(const ModelParams& params, ImageId context_id, std::span<const ImageId> reference_ids,
                const EmbeddingStore& store, RsmMode mode) {
  Rsm rsm{{reference_ids.begin(), reference_ids.end()}, {}};
  const RowMatrix y = representation_vectors(params, context_id, reference_ids, store, mode);
  const auto n = y.rows();
  rsm.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      rsm.values(i, j) = rsm.values(j, i) = y.row(i).dot(y.row(j));
    }
  }
  return rsm;
}

ProjectionCoords pca_project(const RowMatrix& vectors, int k) {
  const auto n = vectors.rows();
  const auto m = vectors.cols();
  if (k < 1 || n < k || m < k) {
    throw ValidationError(fmt::format("pca needs at least k={} points and dimensions, got {}x{}", k, n, m));
  }
  const Eigen::RowVectorXd mean = vectors.colwise().mean();
  const RowMatrix centered = vectors.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw DegenerateError("eigendecomposition failed");
  // Ascending order from Eigen; flip.
  const Vector values = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Matrix vecs = eig.eigenvectors().rowwise().reverse();
  const double total = values.sum();
  if (!(total > kTolerances.degenerate_norm)) throw DegenerateError("pca input has zero variance");

  ProjectionCoords out;
  out.components.resize(k, m);
  for (int c = 0; c < k; ++c) {
    Vector dir = vecs.col(c);
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir(arg) < 0) dir = -dir;
    out.components.row(c) = dir.transpose();
    out.explained_variance.push_back(values(c) / total);
  }
  out.coords = centered * out.components.transpose();
  return out;
}

std::string format_rsm_csv(const Rsm& rsm) {
  std::string out;
  for (std::size_t i = 0; i < rsm.image_ids.size(); ++i) {
    out += fmt::format("{}{}", i ? "," : "", rsm.image_ids[i]);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < rsm.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < rsm.values.cols(); ++j) {
      out += fmt::format("{}{:.17g}", j ? "," : "", rsm.values(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string format_coords_csv(const ProjectionCoords& c) {
  std::string out = "id";
  for (Eigen::Index k = 0; k < c.coords.cols(); ++k) out += fmt::format(",pc{}", k + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < c.coords.rows(); ++i) {
    out += i < static_cast<Eigen::Index>(c.image_ids.size()) ? std::to_string(c.image_ids[static_cast<std::size_t>(i)])
                                                            : std::to_string(i);
    for (Eigen::Index k = 0; k < c.coords.cols(); ++k) out += fmt::format(",{:.17g}", c.coords(i, k));
    out += '\n';
  }
  return out;
}

}  // namespace cssim
