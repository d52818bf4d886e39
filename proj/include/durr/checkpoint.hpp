#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "durr/optim.hpp"
#include "durr/tensor.hpp"

namespace durr {

// Checkpoint container format (little endian):
//   magic "DURRCKPT" | u32 version | u8 unit kind | arch string |
//   metadata (count + key/value strings) |
//   tensor records (name, rank, u64 dims, u64 byte length, f32 payload, crc32) |
//   optimizer state (method, step, moment records in the same record format)
// Every payload carries a CRC so a single corrupted byte fails the load.
// Arch validation happens before any tensor is materialized.

enum class UnitKind : std::uint8_t { Restorer = 0, Policy = 1 };

struct CheckpointError : DataError {
    explicit CheckpointError(const std::string& msg) : DataError(msg) {}
};
struct CkptBadMagic : CheckpointError {
    explicit CkptBadMagic(const std::string& msg) : CheckpointError(msg) {}
};
struct CkptVersionSkew : CheckpointError {
    explicit CkptVersionSkew(const std::string& msg) : CheckpointError(msg) {}
};
struct CkptTruncated : CheckpointError {
    explicit CkptTruncated(const std::string& msg) : CheckpointError(msg) {}
};
struct CkptIntegrity : CheckpointError {
    explicit CkptIntegrity(const std::string& msg) : CheckpointError(msg) {}
};
struct CkptArchMismatch : CheckpointError {
    explicit CkptArchMismatch(const std::string& msg) : CheckpointError(msg) {}
};

struct Checkpoint {
    UnitKind kind = UnitKind::Restorer;
    NetworkParams<float> params;  // arch descriptor travels in params.arch
    OptState<float> opt_state;
    std::map<std::string, std::string> metadata;
};

constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const Checkpoint& ckpt, const std::string& path);

// Loads and fully validates. When expect is set, a checkpoint of the other
// unit kind raises CkptArchMismatch.
Checkpoint checkpoint_load(const std::string& path,
                           std::optional<UnitKind> expect = std::nullopt);

}  // namespace durr
