#include "cssim/embedding_store.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "cssim/errors.hpp"
#include "cssim/io.hpp"

namespace cssim {

EmbeddingStore::EmbeddingStore(int dim) : EmbeddingStore(dim, {}, RowMatrix(0, dim > 0 ? dim : 0)) {}

EmbeddingStore::EmbeddingStore(int dim, std::vector<ImageId> ids, RowMatrix vectors)
    : dim_(dim), ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (dim_ < 1) throw ValidationError("embedding dim must be positive, got " + std::to_string(dim_));
  if (vectors_.cols() != dim_ || vectors_.rows() != static_cast<Eigen::Index>(ids_.size())) {
    throw ValidationError("embedding matrix is " + std::to_string(vectors_.rows()) + "x" +
                          std::to_string(vectors_.cols()) + ", expected " +
                          std::to_string(ids_.size()) + "x" + std::to_string(dim_));
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw ValidationError("duplicate image id " + std::to_string(ids_[i]));
    }
  }
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
    for (Eigen::Index k = 0; k < dim_; ++k) {
      double& v = vectors_(i, k);
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite component in embedding of id " + std::to_string(ids_[i]));
      }
      v = static_cast<double>(static_cast<float>(v));
      if (!std::isfinite(v)) {
        throw ValidationError("component overflows float32 in embedding of id " +
                              std::to_string(ids_[i]));
      }
    }
  }
}

std::size_t EmbeddingStore::index_of(ImageId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("no embedding for image id " + std::to_string(id));
  return it->second;
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.dim_ != b.dim_ || a.ids_ != b.ids_) return false;
  // Bitwise, so that -0.0 and 0.0 are distinguished.
  return std::memcmp(a.vectors_.data(), b.vectors_.data(),
                     sizeof(double) * static_cast<std::size_t>(a.vectors_.size())) == 0;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    throw FormatError(path.string() + ": not an embedding file (bad magic)");
  }
  io::ByteReader in(bytes);
  in.take(4);
  const auto version = in.u32();
  if (version != kEmbeddingVersion) {
    throw FormatError(path.string() + ": unsupported embedding format version " +
                      std::to_string(version));
  }
  const auto count = in.u32();
  const auto dim = in.u32();
  if (dim == 0 || dim > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw ValidationError(path.string() + ": invalid embedding dim " + std::to_string(dim));
  }
  const std::uint64_t expected = std::uint64_t{count} * 8 + std::uint64_t{count} * dim * 4;
  if (in.remaining() < expected) {
    throw CorruptionError(path.string() + ": truncated payload, header declares " +
                          std::to_string(count) + " records of dim " + std::to_string(dim));
  }
  if (in.remaining() > expected) {
    throw CorruptionError(path.string() + ": " + std::to_string(in.remaining() - expected) +
                          " trailing bytes after payload");
  }
  std::vector<ImageId> ids(count);
  for (auto& id : ids) id = in.u64();
  RowMatrix vectors(count, dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t k = 0; k < dim; ++k) vectors(i, k) = in.f32();
  }
  return EmbeddingStore(static_cast<int>(dim), std::move(ids), std::move(vectors));
}

void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::string out;
  out.reserve(kEmbeddingHeaderSize + store.size() * (8 + 4 * static_cast<std::size_t>(store.dim())));
  out.append(kEmbeddingMagic, 4);
  io::put_u32(out, kEmbeddingVersion);
  io::put_u32(out, static_cast<std::uint32_t>(store.size()));
  io::put_u32(out, static_cast<std::uint32_t>(store.dim()));
  for (auto id : store.ids()) io::put_u64(out, id);
  const auto& v = store.vectors();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index k = 0; k < v.cols(); ++k) io::put_f32(out, static_cast<float>(v(i, k)));
  }
  io::write_file_atomic(path, out);
}

std::map<ImageId, std::string> load_embedding_labels(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError(path.string() + ": expected a JSON object");
  std::map<ImageId, std::string> labels;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw FormatError(path.string() + ": label for " + key + " is not a string");
    try {
      labels.emplace(std::stoull(key), value.get<std::string>());
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": key '" + key + "' is not an image id");
    }
  }
  return labels;
}

Vector l2_normalize(const VectorRef& v, double eps) {
  const double norm = v.norm();
  if (!(norm > eps)) throw DegenerateError("cannot normalize vector with norm " + std::to_string(norm));
  return v / norm;
}

}  // namespace cssim
