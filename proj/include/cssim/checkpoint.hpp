#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cssim/model.hpp"

namespace cssim {

// Binary layout, little-endian:
//   "CSCK" | version u32 (=1) | d u32 | r u32 | tau f64 | flags u32 |
//   W (d*d f64, row-major) | b (d f64) | M (r*d*d f64, row-major) | m0 (r*d f64) |
//   JSON trailer (UTF-8, to end of file)
inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace checkpoint_flags {
inline constexpr std::uint32_t kMapperBias = 1u << 0;
inline constexpr std::uint32_t kColumnMajorReshape = 1u << 1;  // never set; B_c is row-major
inline constexpr std::uint32_t kContextInputShift = 2;          // bits 2-3: ContextInput
inline constexpr std::uint32_t kContextInputMask = 3u << kContextInputShift;
inline constexpr std::uint32_t kContextInsensitive = 1u << 4;
}  // namespace checkpoint_flags

struct Checkpoint {
  ModelParams params;
  nlohmann::json metadata = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cssim
