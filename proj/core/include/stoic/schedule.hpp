#pragma once

#include <cstdint>
#include <vector>

#include "stoic/tensor.hpp"

namespace stoic {

/// Variance-preserving noise schedule.
///
/// Discrete side: per-step beta_t with alpha_t = 1 - beta_t and
/// alpha_bar_t = prod_{s<=t} alpha_s; the closed-form marginal scales the
/// clean signal by sqrt(alpha_bar_t) and the noise by sqrt(1 - alpha_bar_t),
/// so alpha_bar_t + sigma_t^2 = 1 at every step. Timesteps are 1-based.
///
/// Continuous side: beta(t) = sde_beta_min + t * (sde_beta_max -
/// sde_beta_min) on t in (0, 1] for the reverse-SDE sampler.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // [T]
    std::vector<double> alpha;      // [T], 1 - beta_t
    std::vector<double> alpha_bar;  // [T], cumulative product of alpha
    double sde_beta_min = 0.1;
    double sde_beta_max = 20.0;

    double beta_at(int t) const { return beta[check(t)]; }
    double alpha_at(int t) const { return alpha[check(t)]; }
    double alpha_bar_at(int t) const { return alpha_bar[check(t)]; }
    /// alpha_bar_{t-1} with the t=1 convention alpha_bar_0 = 1.
    double alpha_bar_prev(int t) const { return t <= 1 ? 1.0 : alpha_bar[check(t - 1)]; }
    /// sigma_t = sqrt(1 - alpha_bar_t).
    double sigma_at(int t) const;
    double snr_at(int t) const;
    /// Posterior variance beta_tilde_t = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t).
    double posterior_variance(int t) const;
    double beta_continuous(double t) const {
        return sde_beta_min + t * (sde_beta_max - sde_beta_min);
    }

    /// Structural invariants: betas in (0,1), alpha_bar strictly decreasing.
    void validate() const;

private:
    size_t check(int t) const {
        if (t < 1 || t > T) throw ValueError("schedule: timestep out of range [1, T]");
        return static_cast<size_t>(t - 1);
    }
};

/// Linear beta ramp from beta_start to beta_end inclusive over T steps.
/// Requires 0 < beta_start <= beta_end < 1 (strictly increasing for T > 1).
NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

/// Evenly strided subsequence for `steps` sampling steps: both endpoints
/// t=1 and t=T included for steps >= 2; a single step runs at t=T.
std::vector<int> sample_timesteps(int T, int steps);

}  // namespace stoic
