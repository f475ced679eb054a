#include <doctest.h>

#include <cmath>
#include <limits>

#include "cssim/embedding_store.hpp"
#include "cssim/errors.hpp"
#include "cssim/io.hpp"
#include "test_support.hpp"

using namespace cssim;
using cssim::testing::temp_dir;

namespace {

std::string header(const char* magic, std::uint32_t version, std::uint32_t count, std::uint32_t dim) {
  std::string out(magic, 4);
  io::put_u32(out, version);
  io::put_u32(out, count);
  io::put_u32(out, dim);
  return out;
}

}  // namespace

TEST_CASE("minimal two-record file loads") {
  std::string bytes = header("CSEM", 1, 2, 2);
  io::put_u64(bytes, 7);
  io::put_u64(bytes, 9);
  for (float v : {1.0f, 0.0f, 0.0f, 1.0f}) io::put_f32(bytes, v);
  const auto path = temp_dir("es_min") / "e.bin";
  io::write_file_atomic(path, bytes);

  const auto store = load_embeddings(path);
  CHECK(store.size() == 2);
  CHECK(store.dim() == 2);
  CHECK(store.vector(7)(0) == 1.0);
  CHECK(store.vector(9)(1) == 1.0);
  CHECK_THROWS_AS(store.index_of(8), LookupError);
}

TEST_CASE("truncated and malformed files are rejected by kind") {
  const auto dir = temp_dir("es_bad");
  std::string short_payload = header("CSEM", 1, 3, 2);
  for (int i = 0; i < 2; ++i) io::put_u64(short_payload, static_cast<std::uint64_t>(i + 1));
  io::write_file_atomic(dir / "short.bin", short_payload);
  CHECK_THROWS_AS(load_embeddings(dir / "short.bin"), CorruptionError);

  std::string trailing = header("CSEM", 1, 1, 1);
  io::put_u64(trailing, 1);
  io::put_f32(trailing, 1.0f);
  trailing.push_back('x');
  io::write_file_atomic(dir / "trail.bin", trailing);
  CHECK_THROWS_AS(load_embeddings(dir / "trail.bin"), CorruptionError);

  io::write_file_atomic(dir / "magic.bin", header("XXXX", 1, 0, 2));
  CHECK_THROWS_AS(load_embeddings(dir / "magic.bin"), FormatError);
  io::write_file_atomic(dir / "version.bin", header("CSEM", 2, 0, 2));
  CHECK_THROWS_AS(load_embeddings(dir / "version.bin"), FormatError);
  io::write_file_atomic(dir / "stub.bin", std::string("CSE"));
  CHECK_THROWS(load_embeddings(dir / "stub.bin"));

  std::string dup = header("CSEM", 1, 2, 1);
  io::put_u64(dup, 5);
  io::put_u64(dup, 5);
  io::put_f32(dup, 1.0f);
  io::put_f32(dup, 2.0f);
  io::write_file_atomic(dir / "dup.bin", dup);
  CHECK_THROWS_AS(load_embeddings(dir / "dup.bin"), ValidationError);

  std::string nan = header("CSEM", 1, 1, 1);
  io::put_u64(nan, 5);
  io::put_f32(nan, std::numeric_limits<float>::quiet_NaN());
  io::write_file_atomic(dir / "nan.bin", nan);
  CHECK_THROWS_AS(load_embeddings(dir / "nan.bin"), ValidationError);

  CHECK_THROWS_AS(load_embeddings(dir / "missing.bin"), IoError);
}

TEST_CASE("constructor validates shape, duplicates and finiteness") {
  RowMatrix v(2, 2);
  v << 1, 2, 3, 4;
  CHECK_THROWS_AS(EmbeddingStore(0, {}, RowMatrix(0, 0)), ValidationError);
  CHECK_THROWS_AS(EmbeddingStore(3, {1, 2}, v), ValidationError);
  CHECK_THROWS_AS(EmbeddingStore(2, {1, 1}, v), ValidationError);
  v(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(EmbeddingStore(2, {1, 2}, v), ValidationError);
}

TEST_CASE("write then load is the identity on random stores") {
  std::mt19937_64 rng(11);
  const auto dir = temp_dir("es_roundtrip");
  for (int trial = 0; trial < 25; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 20);
    const int n = static_cast<int>(rng() % 30);
    std::vector<ImageId> ids;
    for (int i = 0; i < n; ++i) ids.push_back(rng());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    const EmbeddingStore store(d, ids, cssim::testing::random_matrix(rng, static_cast<Eigen::Index>(ids.size()), d));
    write_embeddings(store, dir / "s.bin");
    CHECK(load_embeddings(dir / "s.bin") == store);
  }
}

TEST_CASE("empty store is header only; width field is stored verbatim") {
  const auto dir = temp_dir("es_header");
  write_embeddings(EmbeddingStore(8), dir / "empty.bin");
  CHECK(std::filesystem::file_size(dir / "empty.bin") == kEmbeddingHeaderSize);
  CHECK(load_embeddings(dir / "empty.bin").dim() == 8);

  std::mt19937_64 rng(3);
  write_embeddings(EmbeddingStore(768, {1}, cssim::testing::random_matrix(rng, 1, 768)), dir / "fm.bin");
  io::ByteReader reader(io::read_file(dir / "fm.bin"));
  reader.take(4);
  CHECK(reader.u32() == 1);
  CHECK(reader.u32() == 1);
  CHECK(reader.u32() == 768);
}

TEST_CASE("label sidecar") {
  const auto path = temp_dir("es_labels") / "labels.json";
  io::write_file_atomic(path, R"({"7": "n01440764_10026.JPEG", "9": "tench"})");
  const auto labels = load_embedding_labels(path);
  CHECK(labels.at(7) == "n01440764_10026.JPEG");
  CHECK(labels.at(9) == "tench");
}

TEST_CASE("l2_normalize fixed cases") {
  Vector v(2);
  v << 3, 4;
  const Vector u = l2_normalize(v);
  CHECK(u(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u(1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK((l2_normalize(u) - u).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(l2_normalize(Vector::Zero(2)), DegenerateError);
}

TEST_CASE("l2_normalize unit norm and positive scale invariance") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> log_scale(-6, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vector v = cssim::testing::random_vector(rng, 1 + static_cast<Eigen::Index>(rng() % 32));
    const Vector u = l2_normalize(v);
    CHECK(std::abs(u.norm() - 1.0) <= kTolerances.unit_norm);
    const double alpha = std::pow(10.0, log_scale(rng));
    CHECK((l2_normalize(alpha * v) - u).cwiseAbs().maxCoeff() <= kTolerances.unit_norm);
  }
}
