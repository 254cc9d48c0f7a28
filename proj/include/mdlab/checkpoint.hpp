#pragma once

#include <string>

#include "mdlab/denoiser.hpp"

namespace mdlab {

// Self-describing checkpoint container:
//   magic "MDLMCKPT", u32 format version, u64 JSON header length, JSON header,
//   then the parameter arrays as raw little-endian IEEE-754 doubles in
//   DenoiserParams::for_each order (column-major within each matrix).
// The header records the config, vocabulary hash, parameter hash, training
// stage tag and the trainer rng state. Save/load round-trips bit-exactly.
struct Checkpoint {
    DenoiserParams params;
    uint64_t vocab_hash = 0;
    std::string stage_tag;  // None / RO / FS / FS+RO
    std::string rng_state;  // serialized trainer rng, empty if untrained

    uint64_t param_hash() const { return params.content_hash(); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mdlab
