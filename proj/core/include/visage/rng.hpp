#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace visage {

// All randomness in the project flows through a single engine type so that
// runs are reproducible from one integer seed.  mt19937_64 output is fixed by
// the standard, and the helpers below avoid std::*_distribution (whose
// algorithms are implementation-defined), so identical seeds give identical
// streams on any conforming platform.
using Rng = std::mt19937_64;

// splitmix64 step: advances `state` and returns the next value.  Used to
// derive independent per-purpose seeds from one base seed.
std::uint64_t splitmix64(std::uint64_t& state);

// Stateless seed derivation: mixes (base, stream) into a fresh seed.  The
// training loop uses derive_seed(run_seed, step) so that the noise drawn at
// step k is a function of k alone, which makes resume-from-checkpoint
// reproduce the original run exactly.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

Rng make_rng(std::uint64_t seed);

// Uniform double in [0, 1).
double rand_uniform(Rng& rng);

// Uniform double in [lo, hi).
double rand_uniform(Rng& rng, double lo, double hi);

// Standard normal via Box-Muller on two fresh engine draws.  No cached spare
// value, so the generator state is exactly the engine state (important for
// checkpointed RNG serialization).
double rand_normal(Rng& rng);

// Uniform integer in [0, n).  Rejection sampling; requires n > 0.
std::uint64_t rand_index(Rng& rng, std::uint64_t n);

// Engine state round-trip through the standard stream representation.
std::string rng_state_to_string(const Rng& rng);
Rng rng_from_string(const std::string& text);

}  // namespace visage
