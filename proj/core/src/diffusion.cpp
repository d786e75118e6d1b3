#include "stoic/diffusion.hpp"

#include <cmath>

#include "stoic/rng.hpp"

namespace stoic {

namespace {

// Elementwise a*x + b*y carried in double and rounded once into the output
// dtype; the diffusion identities are badly conditioned at extreme SNR, so
// intermediate roundings are kept out of the data path.
Tensor fused_axby(const Tensor& x, double a, const Tensor& y, double b) {
    Tensor out = Tensor::zeros(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x.impl()->template data<T>();
        const T* py = y.impl()->template data<T>();
        T* po = out.impl()->template data<T>();
        int64_t n = x.numel();
        for (int64_t i = 0; i < n; ++i)
            po[i] = static_cast<T>(a * static_cast<double>(px[i]) +
                                   b * static_cast<double>(py[i]));
    });
    return out;
}

}  // namespace

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (x0.shape() != eps.shape()) throw ShapeError("forward_sample: eps shape mismatch");
    double ab = sched.alpha_bar_at(t);
    return fused_axby(x0, std::sqrt(ab), eps, std::sqrt(1.0 - ab));
}

Tensor forward_sample_batch(const Tensor& x0, const std::vector<int>& t, const Tensor& eps,
                            const NoiseSchedule& sched) {
    if (x0.shape() != eps.shape()) throw ShapeError("forward_sample_batch: eps shape mismatch");
    if (x0.size(0) != static_cast<int64_t>(t.size()))
        throw ShapeError("forward_sample_batch: one timestep per batch element required");
    Tensor out = Tensor::zeros(x0.shape(), x0.dtype());
    int64_t per = x0.numel() / x0.size(0);
    dispatch(x0.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x0.impl()->template data<T>();
        const T* pe = eps.impl()->template data<T>();
        T* po = out.impl()->template data<T>();
        for (size_t b = 0; b < t.size(); ++b) {
            double ab = sched.alpha_bar_at(t[b]);
            T a = static_cast<T>(std::sqrt(ab));
            T s = static_cast<T>(std::sqrt(1.0 - ab));
            const T* xb = px + static_cast<int64_t>(b) * per;
            const T* eb = pe + static_cast<int64_t>(b) * per;
            T* ob = po + static_cast<int64_t>(b) * per;
            for (int64_t i = 0; i < per; ++i) ob[i] = a * xb[i] + s * eb[i];
        }
    });
    return out;
}

Tensor ddpm_loss(const DenoiseFn& net, const Tensor& x0, const std::vector<int>& t,
                 const Tensor& eps, const NoiseSchedule& sched, const Tensor* context) {
    Tensor x_t = forward_sample_batch(x0, t, eps, sched);
    Tensor eps_hat = net(x_t, t, context);
    if (eps_hat.shape() != eps.shape()) throw ShapeError("ddpm_loss: prediction shape mismatch");
    return mean_squared_error(eps, eps_hat);
}

Tensor score_from_eps(const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
    double sigma = sched.sigma_at(t);
    if (sigma == 0.0) throw ValueError("score_from_eps: sigma_t = 0");
    return scale(eps_hat, -1.0 / sigma);
}

Tensor reconstruct_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
    if (x_t.shape() != eps_hat.shape()) throw ShapeError("reconstruct_x0: shape mismatch");
    double ab = sched.alpha_bar_at(t);
    if (ab == 0.0) throw ValueError("reconstruct_x0: alpha_bar_t = 0");
    double alpha = std::sqrt(ab);
    double sigma = std::sqrt(1.0 - ab);
    return fused_axby(x_t, 1.0 / alpha, eps_hat, -sigma / alpha);
}

Tensor cfg_eps(const Tensor& eps_cond, const Tensor& eps_uncond, double g) {
    if (eps_cond.shape() != eps_uncond.shape()) throw ShapeError("cfg_eps: shape mismatch");
    return add(eps_uncond, scale(sub(eps_cond, eps_uncond), g));
}

Tensor ancestral_step(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched,
                      const Tensor& noise) {
    if (eps_hat.shape() != x_t.shape()) throw ShapeError("ancestral_step: eps shape mismatch");
    double beta = sched.beta_at(t);
    double sigma = sched.sigma_at(t);
    Tensor mean = scale(sub(x_t, scale(eps_hat, beta / sigma)), 1.0 / std::sqrt(1.0 - beta));
    if (t == 1) return mean;  // final step is deterministic
    if (noise.shape() != x_t.shape()) throw ShapeError("ancestral_step: noise shape mismatch");
    return add(mean, scale(noise, std::sqrt(sched.posterior_variance(t))));
}

Tensor euler_maruyama_step(const Tensor& x, double t, double dt, const Tensor& score,
                           const NoiseSchedule& sched, const Tensor& noise) {
    if (!(t > 0.0 && t <= 1.0)) throw ValueError("euler_maruyama_step: t must be in (0, 1]");
    if (!(dt < 0.0)) throw ValueError("euler_maruyama_step: dt must be negative");
    if (score.shape() != x.shape() || noise.shape() != x.shape())
        throw ShapeError("euler_maruyama_step: shape mismatch");
    double beta = sched.beta_continuous(t);
    Tensor drifted = add(scale(x, 1.0 - 0.5 * beta * dt), scale(score, -beta * dt));
    return add(drifted, scale(noise, std::sqrt(beta * std::fabs(dt))));
}

namespace {

// One chain's worth of noise appended into `dst` at batch slot `slot`.
template <typename T>
void fill_chain_noise(Tensor& dst, int64_t slot, int64_t per, Rng& rng) {
    T* p = dst.impl()->template data<T>() + slot * per;
    for (int64_t i = 0; i < per; ++i) p[i] = static_cast<T>(rng.normal());
}

Tensor replicate_context(const Tensor& context, int64_t batch) {
    if (context.rank() != 2)
        throw ShapeError("sample: context must be a single [tokens, token_dim] tensor");
    Tensor out = Tensor::zeros({batch, context.size(0), context.size(1)}, context.dtype());
    int64_t per = context.numel();
    dispatch(context.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* src = context.impl()->template data<T>();
        T* dst = out.impl()->template data<T>();
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t i = 0; i < per; ++i) dst[b * per + i] = src[i];
    });
    return out;
}

}  // namespace

Tensor sample(const DenoiseFn& net, const NoiseSchedule& sched, const Shape& image_shape,
              int count, const SampleOptions& opts, const Tensor* context) {
    if (image_shape.size() != 3) throw ShapeError("sample: image_shape must be [C,H,W]");
    if (opts.steps < 1) throw ValueError("sample: steps must be >= 1");
    if (count < 0) throw ValueError("sample: negative count");
    NoGradGuard ng;

    Shape batch_shape{0, image_shape[0], image_shape[1], image_shape[2]};
    int64_t per = shape_numel(image_shape);
    batch_shape[0] = count;
    Tensor out = Tensor::zeros(batch_shape, DType::f32);
    if (count == 0) return out;

    // Chain-indexed RNG streams make the result independent of chunking.
    std::vector<Rng> chains;
    chains.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) chains.emplace_back(mix_seed(opts.seed, static_cast<uint64_t>(i)));

    std::vector<int> ancestral_ts;
    if (opts.sampler == SamplerKind::ancestral) ancestral_ts = sample_timesteps(sched.T, opts.steps);

    auto predict = [&](const Tensor& x, int t_idx, const Tensor* ctx_batch,
                       const Tensor* null_batch) {
        std::vector<int> ts(static_cast<size_t>(x.size(0)), t_idx);
        if (ctx_batch == nullptr) return net(x, ts, nullptr);
        if (opts.guidance == 1.0) return net(x, ts, ctx_batch);
        Tensor cond = net(x, ts, ctx_batch);
        Tensor uncond = net(x, ts, null_batch);
        return cfg_eps(cond, uncond, opts.guidance);
    };

    int chunk = std::max(1, opts.chunk);
    for (int lo = 0; lo < count; lo += chunk) {
        int hi = std::min(count, lo + chunk);
        int64_t b = hi - lo;

        Tensor ctx_batch, null_batch;
        if (context) {
            ctx_batch = replicate_context(*context, b);
            null_batch = Tensor::zeros(ctx_batch.shape(), ctx_batch.dtype());
        }

        Tensor x = Tensor::zeros({b, image_shape[0], image_shape[1], image_shape[2]}, DType::f32);
        for (int64_t i = 0; i < b; ++i)
            fill_chain_noise<float>(x, i, per, chains[static_cast<size_t>(lo + i)]);

        if (opts.sampler == SamplerKind::ancestral) {
            for (size_t k = ancestral_ts.size(); k-- > 0;) {
                int t = ancestral_ts[k];
                Tensor eps = predict(x, t, context ? &ctx_batch : nullptr,
                                     context ? &null_batch : nullptr);
                Tensor noise = Tensor::zeros(x.shape(), DType::f32);
                if (k > 0)  // no noise on the last executed step
                    for (int64_t i = 0; i < b; ++i)
                        fill_chain_noise<float>(noise, i, per, chains[static_cast<size_t>(lo + i)]);
                x = ancestral_step(x, t, eps, sched, noise);
            }
        } else {
            double dt = -(1.0 - opts.em_t_end) / opts.steps;
            for (int step = 0; step < opts.steps; ++step) {
                double t_cur = 1.0 + step * dt;
                int t_idx = static_cast<int>(std::lround(t_cur * sched.T));
                t_idx = std::min(sched.T, std::max(1, t_idx));
                Tensor eps = predict(x, t_idx, context ? &ctx_batch : nullptr,
                                     context ? &null_batch : nullptr);
                Tensor score = score_from_eps(eps, t_idx, sched);
                Tensor noise = Tensor::zeros(x.shape(), DType::f32);
                for (int64_t i = 0; i < b; ++i)
                    fill_chain_noise<float>(noise, i, per, chains[static_cast<size_t>(lo + i)]);
                x = euler_maruyama_step(x, t_cur, dt, score, sched, noise);
            }
        }

        dispatch(DType::f32, [&](auto tag) {
            using T = decltype(tag);
            const T* src = x.impl()->template data<T>();
            T* dst = out.impl()->template data<T>() + static_cast<int64_t>(lo) * per;
            for (int64_t i = 0; i < b * per; ++i) dst[i] = src[i];
        });
    }
    return out;
}

}  // namespace stoic
