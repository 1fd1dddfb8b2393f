#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "visage/adapters.hpp"
#include "visage/config.hpp"
#include "visage/model.hpp"
#include "visage/tensor.hpp"

namespace visage {

// Adam accumulators for one parameter.
struct AdamSlot {
    Tensor m, v;
};

struct OptimState {
    std::uint64_t t = 0;  // completed optimizer steps (bias-correction clock)
    std::map<std::string, AdamSlot> slots;
};

// Parsed checkpoint container.  The on-disk format is a single binary file:
// magic, format version, payload, trailing content digest.  The digest is
// verified before any payload parsing, so a flipped byte anywhere surfaces as
// an integrity error rather than garbage state.
struct CheckpointData {
    Config config;          // canonical snapshot of the producing run's config
    std::string stage;      // "stage1" | "stage2"
    std::uint64_t step = 0;
    std::string rng_state;  // opaque; enough to reproduce the training stream
    AdapterConfig adapters;
    // section name ("backbone", "lca", "rca", "rlf", "id_proj") -> full
    // parameter name -> tensor.
    std::map<std::string, std::map<std::string, Tensor>> sections;
    bool has_optimizer = false;
    OptimState optimizer;
};

// Atomic (write-temp-then-rename) serialization.
void save_checkpoint_file(const std::string& path, const CheckpointData& data);

// Throws InvalidState for a non-checkpoint file or unsupported format
// version, IntegrityError for truncation or digest mismatch.
CheckpointData load_checkpoint_file(const std::string& path);

// Capture every parameter group of the model plus training bookkeeping.
CheckpointData snapshot_model(const ModelBundle& model, const std::string& stage,
                              std::uint64_t step, const std::string& rng_state,
                              const OptimState* opt);

// Copy checkpoint parameters into the live model (and optimizer state into
// *opt when requested and present).  A stage-2 checkpoint demands a model
// with the reference branch enabled: ConfigConflict otherwise.  Unknown
// parameter names or shape mismatches also raise ConfigConflict.
void restore_model(ModelBundle& model, const CheckpointData& ckpt, OptimState* opt);

}  // namespace visage
