#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "bavit/net.hpp"
#include "bavit/train.hpp"

namespace bavit {

/// Raised for bad magic/version, checksum mismatches and truncated files.
class CheckpointError : public DataError {
public:
    using DataError::DataError;
};

struct Checkpoint {
    ModelConfig config;
    ModelParams<float> params;
    OptimState optim;
    LrSchedule schedule;
};

inline constexpr char kCheckpointMagic[4] = {'B', 'A', 'V', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "BAVT" | u32 version | u64 header length | JSON header | f32 payload
// The header holds the config, a tensor manifest (name, shape, dtype, byte
// offset into the payload), optimizer hyperparameters and counters, the
// learning-rate schedule, the payload size and its CRC32. The payload is the
// model tensors followed by the Adam moments ("adam.m.*", "adam.v.*").
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bavit
