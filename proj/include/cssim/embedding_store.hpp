#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cssim/config.hpp"
#include "cssim/linalg.hpp"

namespace cssim {

/// Immutable table of fixed-width embeddings keyed by image ID.
///
/// Values are quantized to float32 on construction so that the in-memory
/// store and its on-disk encoding hold exactly the same numbers; arithmetic
/// on them is done in double.
class EmbeddingStore {
 public:
  /// Empty store of the given width.
  explicit EmbeddingStore(int dim = 1);

  /// Throws ValidationError on dim < 1, shape mismatch, duplicate IDs or
  /// non-finite components.
  EmbeddingStore(int dim, std::vector<ImageId> ids, RowMatrix vectors);

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<ImageId>& ids() const noexcept { return ids_; }
  const RowMatrix& vectors() const noexcept { return vectors_; }

  bool contains(ImageId id) const { return index_.count(id) != 0; }

  /// Row index of `id`; throws LookupError when absent.
  std::size_t index_of(ImageId id) const;

  ConstVectorMap row(std::size_t index) const {
    return ConstVectorMap(vectors_.row(static_cast<Eigen::Index>(index)).data(), dim_);
  }
  ConstVectorMap vector(ImageId id) const { return row(index_of(id)); }

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  int dim_;
  std::vector<ImageId> ids_;
  RowMatrix vectors_;
  std::unordered_map<ImageId, std::size_t> index_;
};

// Binary layout, little-endian, no padding:
//   "CSEM" | version u32 (=1) | count u32 | dim u32 |
//   count x id u64 | count x dim float32 (row-major)
inline constexpr char kEmbeddingMagic[4] = {'C', 'S', 'E', 'M'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderSize = 16;

EmbeddingStore load_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);

/// Optional sidecar: JSON object mapping ID strings to file names or labels.
/// Never consulted by any computation.
std::map<ImageId, std::string> load_embedding_labels(const std::filesystem::path& path);

/// v / ‖v‖. Throws DegenerateError when ‖v‖ <= eps.
Vector l2_normalize(const VectorRef& v, double eps = kTolerances.degenerate_norm);

}  // namespace cssim
