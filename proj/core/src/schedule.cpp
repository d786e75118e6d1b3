#include "stoic/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace stoic {

double NoiseSchedule::sigma_at(int t) const { return std::sqrt(1.0 - alpha_bar_at(t)); }

double NoiseSchedule::snr_at(int t) const {
    double ab = alpha_bar_at(t);
    return ab / (1.0 - ab);
}

double NoiseSchedule::posterior_variance(int t) const {
    double ab = alpha_bar_at(t);
    return beta_at(t) * (1.0 - alpha_bar_prev(t)) / (1.0 - ab);
}

void NoiseSchedule::validate() const {
    if (T < 1 || static_cast<int>(beta.size()) != T || static_cast<int>(alpha.size()) != T ||
        static_cast<int>(alpha_bar.size()) != T)
        throw ValueError("schedule: inconsistent sizes");
    for (int t = 1; t <= T; ++t) {
        double b = beta_at(t);
        if (!(b > 0.0 && b < 1.0)) throw ValueError("schedule: beta out of (0,1)");
        if (alpha_at(t) != 1.0 - b) throw ValueError("schedule: alpha != 1 - beta");
        if (t > 1 && alpha_bar_at(t) >= alpha_bar_at(t - 1))
            throw ValueError("schedule: alpha_bar not strictly decreasing");
    }
    if (sde_beta_min < 0 || sde_beta_max < sde_beta_min)
        throw ValueError("schedule: bad continuous beta range");
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ValueError("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ValueError("make_schedule: need 0 < beta_start <= beta_end < 1");
    if (T > 1 && beta_start == beta_end)
        throw ValueError("make_schedule: betas must strictly increase for T > 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double frac = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
        double b = beta_start + frac * (beta_end - beta_start);
        s.beta[static_cast<size_t>(t)] = b;
        s.alpha[static_cast<size_t>(t)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    s.validate();
    return s;
}

std::vector<int> sample_timesteps(int T, int steps) {
    if (steps < 1) throw ValueError("sample_timesteps: steps must be >= 1");
    steps = std::min(steps, T);
    std::vector<int> out;
    if (steps == 1) {
        out.push_back(T);
        return out;
    }
    out.reserve(static_cast<size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        double pos = 1.0 + (static_cast<double>(T - 1) * k) / (steps - 1);
        int t = static_cast<int>(std::lround(pos));
        if (out.empty() || out.back() != t) out.push_back(t);
    }
    return out;  // increasing, includes 1 and T
}

}  // namespace stoic
