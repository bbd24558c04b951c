#pragma once

// Versioned binary checkpoint.
//
//   magic      8 bytes  "NARALAB\0"
//   version    u32
//   seed       u64
//   config     u64 length + UTF-8 bytes (resolved config snapshot)
//   entries    u64 count, then per entry:
//                u64 name length + bytes, u64 ndim, ndim × u64 dims,
//                numel × f64 payload
//
// Integers and doubles are little-endian regardless of host order.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nara/adapter.hpp"
#include "nara/model.hpp"

namespace nara {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t seed = 0;
    std::string config;
    std::vector<CheckpointEntry> entries;

    const CheckpointEntry* find(const std::string& name) const;
    bool has_prefix(const std::string& prefix) const;

    std::string serialize() const;
    /// Throws CheckpointError on bad magic, unsupported version or truncation.
    static Checkpoint deserialize(const std::string& bytes);
    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

void add_entries(Checkpoint& ckpt, const std::vector<NamedParam>& tensors);
/// Copies every entry named like one of `tensors` into it; throws
/// CheckpointError on a missing entry or a shape mismatch.
void restore_entries(const Checkpoint& ckpt, const std::vector<NamedParam>& tensors);

}  // namespace nara
