#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "visage/autodiff.hpp"
#include "visage/config.hpp"
#include "visage/rng.hpp"
#include "visage/tensor.hpp"

namespace visage {

// ---------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------

struct NoiseSchedule {
    int T = 0;
    std::string kind;
    std::vector<double> betas;       // size T, each in (0,1)
    std::vector<double> alpha_bars;  // cumulative products of (1 - beta), strictly decreasing

    double beta(int t) const;
    double alpha_bar(int t) const;
    // Cumulative alpha "before the first step": stepping past t=0 treats the
    // destination as fully clean.
    static constexpr double kTerminalAlphaBar = 1.0;
};

// kind is "linear" (straight beta ramp) or "scaled_linear" (linear in
// sqrt(beta), the convention of the pretrained latent-diffusion bases).
NoiseSchedule make_schedule(int T, const std::string& kind = "scaled_linear",
                            double beta_start = 0.00085, double beta_end = 0.012);

// Builds a schedule from explicit betas (validated); used by tests that need
// hand-constructed corner cases.
NoiseSchedule make_schedule_from_betas(std::vector<double> betas, std::string kind = "custom");

// Reads diffusion.{T,kind,beta_start,beta_end} with library defaults.
NoiseSchedule schedule_from_config(const Config& cfg);

// ---------------------------------------------------------------------------
// Forward process and guidance combination
// ---------------------------------------------------------------------------

// z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * noise
Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& noise, const NoiseSchedule& sched);

struct GuidanceWeights {
    double lambda_nq = 0.5;
    double lambda_na = 0.5;
};

GuidanceWeights guidance_from_config(const Config& cfg);

struct GuidedPredictionTriple {
    Tensor eps_pos, eps_nq, eps_na;
};

// eps_pos + lambda_nq*(eps_pos - eps_nq) + lambda_na*(eps_pos - eps_na).
// The combination is applied to the per-step noise predictions; for reverse
// updates that are affine in the prediction this is the same latent-space
// combination written on the per-step outputs.  With both weights zero the
// result is eps_pos bit-for-bit.
Tensor combine_guided(const GuidedPredictionTriple& preds, const GuidanceWeights& w);

// ---------------------------------------------------------------------------
// Reverse process
// ---------------------------------------------------------------------------

struct DiffusionState {
    Tensor z_t;
    int t = 0;
};

enum class SamplerKind { ddpm, ddim };
SamplerKind sampler_kind_from_string(const std::string& name);

// Estimate of the clean latent implied by (z_t, eps_hat).
Tensor predict_z0(const DiffusionState& state, const Tensor& eps_hat, const NoiseSchedule& sched);

// One reverse step t -> t-1.  ddpm uses the posterior mean plus
// sqrt(posterior variance) * step_noise (pass nullptr for noiseless);
// ddim is the deterministic update and ignores step_noise.
// Stepping from t=0 is an error: the final move out of t=0 is a jump.
DiffusionState sampler_step(const DiffusionState& state, const Tensor& eps_hat,
                            const NoiseSchedule& sched, SamplerKind mode,
                            const Tensor* step_noise = nullptr);

// Deterministic jump from state.t to t_prev < state.t.  t_prev = -1 denotes
// the clean terminal state (cumulative alpha 1), so a jump with an exact
// noise prediction returns the clean latent.
DiffusionState ddim_jump(const DiffusionState& state, const Tensor& eps_hat,
                         const NoiseSchedule& sched, int t_prev);

// ---------------------------------------------------------------------------
// Full sampling loop and the training objective
// ---------------------------------------------------------------------------

// Produces the three conditioned noise predictions for one step.
using GuidedDenoiser = std::function<GuidedPredictionTriple(const Tensor& z_t, int t)>;

struct SampleOptions {
    SamplerKind kind = SamplerKind::ddim;
    // Number of predictor timesteps to visit (strided ddim). 0 or >= T visits
    // every step.  ddpm always visits every step.
    int steps = 0;
    GuidanceWeights guidance;
    std::uint64_t seed = 0;
};

// Runs the reverse process from Gaussian noise: at each visited timestep makes
// the three predictor passes, combines them, and advances; the move out of the
// last timestep targets the clean terminal state.  Returns the clean latent.
// `predictor_calls`, when non-null, receives the number of single-prompt
// predictor evaluations (three per visited step).
Tensor sample(const GuidedDenoiser& denoise_fn, const std::vector<int>& latent_shape,
              const NoiseSchedule& sched, const SampleOptions& opt,
              int* predictor_calls = nullptr);

// Differentiable predictor used by the loss: (z_t, t) -> predicted noise node.
using TrainPredictor = std::function<nn::Var(const Tensor& z_t, int t)>;

// Draws t ~ U[0,T) and eps ~ N(0,I), forms z_t, and returns the mean squared
// error between predictor(z_t, t) and eps as a graph node.
nn::Var training_loss(const TrainPredictor& predictor, const Tensor& z0,
                      const NoiseSchedule& sched, Rng& rng);

}  // namespace visage
