#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "stoic/config.hpp"
#include "stoic/params.hpp"
#include "stoic/schedule.hpp"

namespace stoic {

struct CheckpointError : std::runtime_error {
    enum class Kind { io, bad_magic, unsupported_version, truncated, digest_mismatch, malformed };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

/// Basis of a linear schedule; enough to rebuild the NoiseSchedule exactly.
struct ScheduleSpec {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double sde_beta_min = 0.1;
    double sde_beta_max = 20.0;

    NoiseSchedule make() const {
        NoiseSchedule s = make_schedule(T, beta_start, beta_end);
        s.sde_beta_min = sde_beta_min;
        s.sde_beta_max = sde_beta_max;
        return s;
    }
};

/// Serializable training state. File layout (little-endian):
/// magic "STOI", u32 version, config block, schedule block, named tensor
/// records for the parameters, optimizer moment records (m then v),
/// the training RNG state (4 u64) and the step counter (u64).
/// Each tensor record is: u32 path length, path bytes, u8 dtype tag,
/// u32 rank, i64 dims, raw payload, u64 FNV-1a digest of the payload.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    uint32_t version = kVersion;
    StoicConfig config;
    ScheduleSpec schedule;
    ParamStore params;
    bool has_optimizer = false;
    ParamStore adam_m;
    ParamStore adam_v;
    std::array<uint64_t, 4> rng_state{};
    uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Validates magic, version and per-record digests; reports corrupt magic,
/// unsupported versions, truncation and digest mismatches distinctly.
Checkpoint load_checkpoint(const std::string& path);

/// Ensures every parameter record matches the shapes the checkpoint's own
/// configuration implies; throws CheckpointError(malformed) otherwise.
void validate_checkpoint_shapes(const Checkpoint& ckpt);

}  // namespace stoic
