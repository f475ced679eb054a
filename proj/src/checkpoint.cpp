#include "cssim/checkpoint.hpp"

#include <cstring>

#include "cssim/errors.hpp"
#include "cssim/io.hpp"

namespace cssim {

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  p.validate();
  std::uint32_t flags = static_cast<std::uint32_t>(p.context_input) << checkpoint_flags::kContextInputShift;
  if (p.mapper_bias) flags |= checkpoint_flags::kMapperBias;
  if (!p.context_sensitive()) flags |= checkpoint_flags::kContextInsensitive;

  std::string out;
  out.append(kCheckpointMagic, 4);
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(p.d));
  io::put_u32(out, static_cast<std::uint32_t>(p.r));
  io::put_f64(out, p.tau);
  io::put_u32(out, flags);
  auto put_matrix = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) io::put_f64(out, m(i, k));
  };
  auto put_vector = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) io::put_f64(out, v(i));
  };
  put_matrix(p.W);
  put_vector(p.b);
  put_matrix(p.M);
  put_vector(p.m0);
  out += ckpt.metadata.dump();
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  io::ByteReader in(bytes);
  in.take(4);
  if (const auto version = in.u32(); version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto& p = ckpt.params;
  p.d = static_cast<int>(in.u32());
  p.r = static_cast<int>(in.u32());
  p.tau = in.f64();
  const auto flags = in.u32();
  if (flags & checkpoint_flags::kColumnMajorReshape) throw FormatError("column-major reshape is not supported");
  const auto ctx = (flags & checkpoint_flags::kContextInputMask) >> checkpoint_flags::kContextInputShift;
  if (ctx > 2) throw FormatError("unknown context input mode " + std::to_string(ctx));
  p.context_input = static_cast<ContextInput>(ctx);
  p.mapper_bias = (flags & checkpoint_flags::kMapperBias) != 0;
  p.kind = (flags & checkpoint_flags::kContextInsensitive) ? ModelKind::kContextInsensitive
                                                           : ModelKind::kContextSensitive;
  if (p.d < 1 || p.r < 0 || p.r > p.d) throw FormatError("invalid checkpoint shape");

  const Eigen::Index d = p.d, rd = Eigen::Index{p.r} * p.d;
  const std::uint64_t needed = 8ull * static_cast<std::uint64_t>(d * d + d + rd * d + rd);
  if (in.remaining() < needed) throw CorruptionError("truncated checkpoint payload");
  auto get_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = in.f64();
    return m;
  };
  auto get_vector = [&](Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = in.f64();
    return v;
  };
  p.W = get_matrix(d, d);
  p.b = get_vector(d);
  p.M = get_matrix(rd, d);
  p.m0 = get_vector(rd);

  const auto trailer = in.take(in.remaining());
  if (!trailer.empty()) {
    try {
      ckpt.metadata = nlohmann::json::parse(trailer);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorruptionError(std::string("checkpoint metadata: ") + e.what());
    }
  }
  try {
    p.validate();
  } catch (const ValidationError& e) {
    throw CorruptionError(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const CorruptionError& e) {
    throw CorruptionError(path.string() + ": " + e.what());
  }
}

}  // namespace cssim
