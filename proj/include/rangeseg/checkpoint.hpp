#ifndef RANGESEG_CHECKPOINT_HPP
#define RANGESEG_CHECKPOINT_HPP

#include <filesystem>

#include "rangeseg/net_blocks.hpp"

namespace rangeseg {

// Checkpoint file: magic "MRSK", u32 format version, u64 seed, u32 section
// count, a table of (u32 name length, name, u64 float count) entries, then
// the flat little-endian float32 blocks in table order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const NetworkParams& params,
                     const std::filesystem::path& path);

// Rebuilds the architecture from cfg and fills it from the file. Unknown or
// missing sections and size mismatches are data errors.
NetworkParams load_checkpoint(const std::filesystem::path& path,
                              const NetConfig& cfg);

} // namespace rangeseg

#endif // RANGESEG_CHECKPOINT_HPP
