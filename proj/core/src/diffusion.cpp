#include "visage/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "visage/errors.hpp"

namespace visage {

double NoiseSchedule::beta(int t) const {
    if (t < 0 || t >= T) throw InvalidArgument("schedule: timestep out of range");
    return betas[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t >= T) throw InvalidArgument("schedule: timestep out of range");
    return alpha_bars[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule_from_betas(std::vector<double> betas, std::string kind) {
    if (betas.size() < 2) throw InvalidArgument("schedule: need at least 2 steps");
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.kind = std::move(kind);
    s.betas = std::move(betas);
    s.alpha_bars.resize(s.betas.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < s.betas.size(); ++i) {
        if (!(s.betas[i] > 0.0 && s.betas[i] < 1.0))
            throw InvalidArgument("schedule: betas must lie in (0,1)");
        prod *= 1.0 - s.betas[i];
        s.alpha_bars[i] = prod;
        if (!(prod > 0.0 && prod <= 1.0) || (i > 0 && prod >= s.alpha_bars[i - 1]))
            throw InvalidArgument("schedule: cumulative alphas must strictly decrease in (0,1]");
    }
    return s;
}

NoiseSchedule make_schedule(int T, const std::string& kind, double beta_start, double beta_end) {
    if (T < 2) throw InvalidArgument("make_schedule: T must be >= 2");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
        throw InvalidArgument("make_schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(T));
    if (kind == "linear") {
        for (int i = 0; i < T; ++i)
            betas[i] = beta_start + (beta_end - beta_start) * i / (T - 1);
    } else if (kind == "scaled_linear") {
        const double s0 = std::sqrt(beta_start), s1 = std::sqrt(beta_end);
        for (int i = 0; i < T; ++i) {
            const double r = s0 + (s1 - s0) * i / (T - 1);
            betas[i] = r * r;
        }
    } else {
        throw InvalidArgument("make_schedule: unknown kind '" + kind + "'");
    }
    return make_schedule_from_betas(std::move(betas), kind);
}

NoiseSchedule schedule_from_config(const Config& cfg) {
    return make_schedule(cfg.get_int("diffusion.T", 500),
                         cfg.get_string("diffusion.kind", "scaled_linear"),
                         cfg.get_double("diffusion.beta_start", 0.00085),
                         cfg.get_double("diffusion.beta_end", 0.012));
}

Tensor forward_diffuse(const Tensor& z0, int t, const Tensor& noise, const NoiseSchedule& sched) {
    if (!z0.same_shape(noise))
        throw InvalidArgument("forward_diffuse: noise shape " + noise.shape_str() +
                              " does not match z0 " + z0.shape_str());
    const double ab = sched.alpha_bar(t);
    const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    Tensor out = z0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = cs * z0.data[i] + cn * noise.data[i];
    return out;
}

GuidanceWeights guidance_from_config(const Config& cfg) {
    GuidanceWeights w;
    w.lambda_nq = cfg.get_double("guidance.lambda_nq", 0.5);
    w.lambda_na = cfg.get_double("guidance.lambda_na", 0.5);
    if (w.lambda_nq < 0.0 || w.lambda_na < 0.0)
        throw InvalidArgument("guidance weights must be nonnegative");
    return w;
}

Tensor combine_guided(const GuidedPredictionTriple& preds, const GuidanceWeights& w) {
    if (!preds.eps_pos.same_shape(preds.eps_nq) || !preds.eps_pos.same_shape(preds.eps_na))
        throw InvalidArgument("combine_guided: prediction shapes differ");
    if (w.lambda_nq < 0.0 || w.lambda_na < 0.0)
        throw InvalidArgument("combine_guided: weights must be nonnegative");
    // Keep the weights-off case an exact identity: no arithmetic on eps_pos.
    if (w.lambda_nq == 0.0 && w.lambda_na == 0.0) return preds.eps_pos;
    Tensor out = preds.eps_pos;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double pos = preds.eps_pos.data[i];
        out.data[i] = pos + w.lambda_nq * (pos - preds.eps_nq.data[i]) +
                      w.lambda_na * (pos - preds.eps_na.data[i]);
    }
    return out;
}

SamplerKind sampler_kind_from_string(const std::string& name) {
    if (name == "ddpm") return SamplerKind::ddpm;
    if (name == "ddim") return SamplerKind::ddim;
    throw InvalidArgument("unknown sampler kind '" + name + "'");
}

Tensor predict_z0(const DiffusionState& state, const Tensor& eps_hat, const NoiseSchedule& sched) {
    if (!state.z_t.same_shape(eps_hat))
        throw InvalidArgument("predict_z0: eps shape does not match latent");
    const double ab = sched.alpha_bar(state.t);
    const double inv = 1.0 / std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    Tensor out = state.z_t;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (state.z_t.data[i] - cn * eps_hat.data[i]) * inv;
    return out;
}

DiffusionState sampler_step(const DiffusionState& state, const Tensor& eps_hat,
                            const NoiseSchedule& sched, SamplerKind mode,
                            const Tensor* step_noise) {
    if (state.t == 0)
        throw InvalidState("sampler_step: already at t=0; the final move is a terminal jump");
    if (state.t < 0 || state.t >= sched.T)
        throw InvalidArgument("sampler_step: timestep out of schedule range");
    if (!state.z_t.same_shape(eps_hat))
        throw InvalidArgument("sampler_step: eps shape does not match latent");

    if (mode == SamplerKind::ddim) return ddim_jump(state, eps_hat, sched, state.t - 1);

    // ddpm posterior: mean = (z_t - beta_t/sqrt(1-abar_t) * eps) / sqrt(alpha_t),
    // variance = (1-abar_{t-1})/(1-abar_t) * beta_t.
    const double beta_t = sched.beta(state.t);
    const double alpha_t = 1.0 - beta_t;
    const double ab_t = sched.alpha_bar(state.t);
    const double ab_prev = sched.alpha_bar(state.t - 1);
    const double mean_eps = beta_t / std::sqrt(1.0 - ab_t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_t);
    const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta_t);

    if (step_noise && !step_noise->same_shape(state.z_t))
        throw InvalidArgument("sampler_step: step noise shape does not match latent");

    DiffusionState next;
    next.t = state.t - 1;
    next.z_t = state.z_t;
    for (std::size_t i = 0; i < next.z_t.data.size(); ++i) {
        double v = (state.z_t.data[i] - mean_eps * eps_hat.data[i]) * inv_sqrt_alpha;
        if (step_noise) v += sigma * step_noise->data[i];
        next.z_t.data[i] = v;
    }
    return next;
}

DiffusionState ddim_jump(const DiffusionState& state, const Tensor& eps_hat,
                         const NoiseSchedule& sched, int t_prev) {
    if (t_prev < -1 || t_prev >= state.t)
        throw InvalidArgument("ddim_jump: t_prev must lie in [-1, t)");
    if (!state.z_t.same_shape(eps_hat))
        throw InvalidArgument("ddim_jump: eps shape does not match latent");
    const double ab_t = sched.alpha_bar(state.t);
    const double ab_prev =
        t_prev < 0 ? NoiseSchedule::kTerminalAlphaBar : sched.alpha_bar(t_prev);
    const double inv = 1.0 / std::sqrt(ab_t);
    const double cn_t = std::sqrt(1.0 - ab_t);
    const double cs_prev = std::sqrt(ab_prev), cn_prev = std::sqrt(1.0 - ab_prev);

    DiffusionState next;
    next.t = t_prev;
    next.z_t = state.z_t;
    for (std::size_t i = 0; i < next.z_t.data.size(); ++i) {
        const double z0_hat = (state.z_t.data[i] - cn_t * eps_hat.data[i]) * inv;
        next.z_t.data[i] = cs_prev * z0_hat + cn_prev * eps_hat.data[i];
    }
    return next;
}

namespace {

// Descending list of predictor timesteps; always starts at T-1 and ends at 0.
std::vector<int> visit_plan(int T, int steps) {
    if (steps <= 0 || steps >= T) {
        std::vector<int> ts(static_cast<std::size_t>(T));
        for (int i = 0; i < T; ++i) ts[i] = T - 1 - i;
        return ts;
    }
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(steps));
    if (steps == 1) {
        ts.push_back(T - 1);
        return ts;
    }
    for (int i = 0; i < steps; ++i) {
        int t = static_cast<int>(std::lround((T - 1) * (1.0 - double(i) / (steps - 1))));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }
    if (ts.back() != 0) ts.push_back(0);
    return ts;
}

}  // namespace

Tensor sample(const GuidedDenoiser& denoise_fn, const std::vector<int>& latent_shape,
              const NoiseSchedule& sched, const SampleOptions& opt, int* predictor_calls) {
    // ddpm has no strided form here; it walks the full schedule.
    const int steps = opt.kind == SamplerKind::ddpm ? 0 : opt.steps;
    const std::vector<int> plan = visit_plan(sched.T, steps);

    Rng rng = make_rng(opt.seed);
    DiffusionState state;
    state.t = plan.front();
    state.z_t = Tensor::randn(latent_shape, rng);
    int calls = 0;

    for (std::size_t i = 0; i < plan.size(); ++i) {
        const int t = plan[i];
        state.t = t;
        GuidedPredictionTriple preds;
        try {
            preds = denoise_fn(state.z_t, t);
        } catch (const std::exception& e) {
            throw Error("sample: predictor failed at step t=" + std::to_string(t) + ": " +
                        e.what());
        }
        calls += 3;
        const Tensor eps = combine_guided(preds, opt.guidance);

        const bool last = i + 1 == plan.size();
        if (last) {
            state = ddim_jump(state, eps, sched, -1);
        } else if (opt.kind == SamplerKind::ddpm) {
            const Tensor noise = Tensor::randn(state.z_t.shape, rng);
            state = sampler_step(state, eps, sched, SamplerKind::ddpm, &noise);
        } else {
            state = ddim_jump(state, eps, sched, plan[i + 1]);
        }
    }

    if (predictor_calls) *predictor_calls = calls;
    return state.z_t;
}

nn::Var training_loss(const TrainPredictor& predictor, const Tensor& z0,
                      const NoiseSchedule& sched, Rng& rng) {
    const int t = static_cast<int>(rand_index(rng, static_cast<std::uint64_t>(sched.T)));
    Tensor eps = Tensor::randn(z0.shape, rng);
    Tensor z_t = forward_diffuse(z0, t, eps, sched);
    nn::Var pred = predictor(z_t, t);
    if (!pred) throw InvalidState("training_loss: predictor returned null");
    return nn::mse(pred, nn::constant(std::move(eps)));
}

}  // namespace visage
