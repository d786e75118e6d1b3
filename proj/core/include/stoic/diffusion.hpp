#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "stoic/ops.hpp"
#include "stoic/schedule.hpp"
#include "stoic/tensor.hpp"

namespace stoic {

/// Noise-prediction callable: (x_t batch, per-element timesteps, optional
/// batch context) -> predicted noise of the same shape as x_t.
using DenoiseFn =
    std::function<Tensor(const Tensor& x, const std::vector<int>& t, const Tensor* context)>;

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps (single t).
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// forward_sample with an independent timestep per batch element.
Tensor forward_sample_batch(const Tensor& x0, const std::vector<int>& t, const Tensor& eps,
                            const NoiseSchedule& sched);

/// Noise-prediction training loss: mean ||eps - net(x_t, t[, c])||^2 over
/// all batch elements and coordinates, with x_t built by forward_sample.
Tensor ddpm_loss(const DenoiseFn& net, const Tensor& x0, const std::vector<int>& t,
                 const Tensor& eps, const NoiseSchedule& sched, const Tensor* context = nullptr);

/// Score from a noise prediction: s = -eps_hat / sigma_t, the substitution
/// under which the score-matching loss equals the noise-prediction loss.
Tensor score_from_eps(const Tensor& eps_hat, int t, const NoiseSchedule& sched);

/// x0_hat = x_t / sqrt(alpha_bar_t) - sigma_t * eps_hat / sqrt(alpha_bar_t).
Tensor reconstruct_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched);

/// Classifier-free guidance blend: eps_uncond + g (eps_cond - eps_uncond).
Tensor cfg_eps(const Tensor& eps_cond, const Tensor& eps_uncond, double g);

/// One reverse Markov step:
/// x_{t-1} = (x_t - beta_t/sqrt(1-alpha_bar_t) eps_hat)/sqrt(1-beta_t)
///           + sqrt(beta_tilde_t) noise,
/// with posterior variance beta_tilde and no noise at t = 1.
Tensor ancestral_step(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched,
                      const Tensor& noise);

/// One reverse-SDE Euler-Maruyama step (dt < 0):
/// x' = x + [-beta(t)/2 x - beta(t) score] dt + sqrt(beta(t) |dt|) noise.
Tensor euler_maruyama_step(const Tensor& x, double t, double dt, const Tensor& score,
                           const NoiseSchedule& sched, const Tensor& noise);

enum class SamplerKind { ancestral, euler_maruyama };

struct SampleOptions {
    SamplerKind sampler = SamplerKind::ancestral;
    int steps = 1000;
    double guidance = 1.0;  // used only when a context is supplied
    uint64_t seed = 0;
    int chunk = 256;            // chains evaluated per network batch
    double em_t_end = 1e-3;     // terminal integration time of the SDE
};

/// Full reverse trajectory from a standard-normal start for `count` chains
/// of shape image_shape [C,H,W]. Each chain draws from an RNG stream derived
/// from (seed, chain index), so results are independent of chunking and of
/// any internal parallelism. With a context, guidance g blends conditional
/// and unconditional (zero-context) predictions.
Tensor sample(const DenoiseFn& net, const NoiseSchedule& sched, const Shape& image_shape,
              int count, const SampleOptions& opts, const Tensor* context = nullptr);

}  // namespace stoic
