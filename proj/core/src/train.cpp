#include "stoic/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace stoic {

void TrainHyper::validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
        throw ConfigError("adam betas must lie in [0,1)");
    if (!(eps > 0)) throw ConfigError("adam eps must be positive");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (!(cond_dropout >= 0 && cond_dropout <= 1))
        throw ConfigError("cond_dropout must lie in [0,1]");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
}

AdamState AdamState::init_like(const ParamStore& params) {
    AdamState st;
    for (const auto& [path, t] : params) {
        st.m.insert(path, Tensor::zeros(t.shape(), t.dtype()));
        st.v.insert(path, Tensor::zeros(t.shape(), t.dtype()));
    }
    return st;
}

void adamw_step(ParamStore& params, AdamState& state, const TrainHyper& hyper, int64_t step_index) {
    if (step_index < 1) throw ValueError("adamw_step: step_index must be >= 1");
    double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step_index));
    double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step_index));
    for (auto& [path, theta] : params) {
        Tensor& m = state.m.at(path);
        Tensor& v = state.v.at(path);
        if (m.shape() != theta.shape() || v.shape() != theta.shape())
            throw ShapeError("adamw_step: moment shape mismatch for " + path);
        dispatch(theta.dtype(), [&, &theta = theta](auto tag) {
            using T = decltype(tag);
            int64_t n = theta.numel();
            T* th = theta.impl()->template data<T>();
            const T* g = theta.impl()->template grad<T>();
            T* mp = m.impl()->template data<T>();
            T* vp = v.impl()->template data<T>();
            // Moments and the update are carried in double and rounded once
            // into the parameter dtype.
            for (int64_t i = 0; i < n; ++i) {
                double gi = static_cast<double>(g[i]);
                double mi = hyper.beta1 * static_cast<double>(mp[i]) + (1.0 - hyper.beta1) * gi;
                double vi =
                    hyper.beta2 * static_cast<double>(vp[i]) + (1.0 - hyper.beta2) * gi * gi;
                mp[i] = static_cast<T>(mi);
                vp[i] = static_cast<T>(vi);
                double update = (mi / bc1) / (std::sqrt(vi / bc2) + hyper.eps);
                th[i] = static_cast<T>(static_cast<double>(th[i]) - hyper.lr * update -
                                       hyper.lr * hyper.weight_decay * static_cast<double>(th[i]));
            }
        });
    }
}

DenoiseFn make_denoiser(const ParamStore& params, const StoicConfig& config) {
    const ParamStore* p = &params;
    return [p, config](const Tensor& x, const std::vector<int>& t, const Tensor* ctx) {
        std::optional<Tensor> opt;
        if (ctx) opt = *ctx;
        return stoic_forward(x, t, opt, *p, config);
    };
}

namespace {

// Gathers dataset rows into a batch tensor.
Tensor gather_rows(const Tensor& source, const std::vector<int64_t>& indices) {
    Shape shape = source.shape();
    shape[0] = static_cast<int64_t>(indices.size());
    Tensor out = Tensor::zeros(shape, source.dtype());
    int64_t per = source.numel() / source.size(0);
    auto src = source.data<float>();
    auto dst = out.mutable_data<float>();
    for (size_t b = 0; b < indices.size(); ++b)
        for (int64_t i = 0; i < per; ++i)
            dst[static_cast<int64_t>(b) * per + i] = src[indices[b] * per + i];
    return out;
}

std::string checkpoint_path(const std::string& dir, uint64_t step, bool final) {
    char name[64];
    if (final)
        std::snprintf(name, sizeof(name), "ckpt_final.stoic");
    else
        std::snprintf(name, sizeof(name), "ckpt_%06llu.stoic", static_cast<unsigned long long>(step));
    return (std::filesystem::path(dir) / name).string();
}

}  // namespace

Checkpoint train(const StoicConfig& config, const ScheduleSpec& schedule, const Dataset& dataset,
                 const TrainHyper& hyper, const std::string& checkpoint_dir,
                 const std::string& log_path, const Checkpoint* resume) {
    config.validate();
    hyper.validate();
    NoiseSchedule sched = schedule.make();
    if (dataset.size() < 1) throw ValueError("train: empty dataset");
    if (hyper.guidance_training) {
        if (!config.context) throw ConfigError("guidance training requires a context-conditioned "
                                               "model configuration");
        if (!dataset.contexts) throw ValueError("train: guidance training requires contexts");
        if (dataset.contexts->size(1) != config.context->num_tokens ||
            dataset.contexts->size(2) != config.context->token_dim)
            throw ShapeError("train: dataset context shape does not match configuration");
    }

    ParamStore params;
    AdamState state;
    Rng rng(0);
    uint64_t start_step = 0;
    if (resume) {
        validate_checkpoint_shapes(*resume);
        params = resume->params.clone();
        if (resume->has_optimizer) {
            state.m = resume->adam_m.clone();
            state.v = resume->adam_v.clone();
        } else {
            state = AdamState::init_like(params);
        }
        rng = Rng::from_state(resume->rng_state);
        start_step = resume->step;
    } else {
        params = build_params(config, hyper.seed);
        state = AdamState::init_like(params);
        rng = Rng(mix_seed(hyper.seed, 0x7261696eull));  // training stream
    }
    params.set_requires_grad(true);

    std::ofstream log;
    if (!log_path.empty()) {
        bool fresh = !std::filesystem::exists(log_path) ||
                     std::filesystem::file_size(log_path) == 0;
        log.open(log_path, std::ios::app);
        if (!log) throw IoError("train: cannot open log " + log_path);
        if (fresh) log << "step,loss\n";
    }

    auto snapshot = [&](uint64_t step) {
        Checkpoint ck;
        ck.config = config;
        ck.schedule = schedule;
        ck.params = params.clone();
        ck.has_optimizer = true;
        ck.adam_m = state.m.clone();
        ck.adam_v = state.v.clone();
        ck.rng_state = rng.state();
        ck.step = step;
        return ck;
    };

    int64_t n = dataset.size();
    int64_t image_per = dataset.images.numel() / n;
    (void)image_per;
    DenoiseFn net = make_denoiser(params, config);

    for (uint64_t step = start_step + 1; step <= static_cast<uint64_t>(hyper.steps); ++step) {
        // Draw order per step: indices, timesteps, noise. Condition dropout
        // uses a stream derived from (seed, step) so the main stream is
        // identical with and without guidance training.
        std::vector<int64_t> indices(static_cast<size_t>(hyper.batch_size));
        for (auto& ix : indices) ix = rng.uniform_int(0, n - 1);
        std::vector<int> t(static_cast<size_t>(hyper.batch_size));
        for (auto& tv : t) tv = static_cast<int>(rng.uniform_int(1, sched.T));
        Tensor x0 = gather_rows(dataset.images, indices);
        Tensor eps = Tensor::randn(x0.shape(), rng, DType::f32);

        Tensor ctx;
        bool use_ctx = config.context.has_value();
        if (use_ctx) {
            if (hyper.guidance_training) {
                ctx = gather_rows(*dataset.contexts, indices);
                Rng drop(mix_seed(hyper.seed ^ 0x64726f70ull, step));
                int64_t ctx_per = ctx.numel() / ctx.size(0);
                auto cd = ctx.mutable_data<float>();
                for (int64_t b = 0; b < ctx.size(0); ++b)
                    if (drop.uniform() < hyper.cond_dropout)
                        std::fill(cd.begin() + b * ctx_per, cd.begin() + (b + 1) * ctx_per, 0.0f);
            } else {
                // Conditioned architecture trained unconditionally: the null
                // (zero) context stands in everywhere.
                ctx = Tensor::zeros({x0.size(0), config.context->num_tokens,
                                     config.context->token_dim},
                                    DType::f32);
            }
        }

        params.zero_grads();
        Tensor loss = ddpm_loss(net, x0, t, eps, sched, use_ctx ? &ctx : nullptr);
        double loss_v = loss.value(0);
        if (!std::isfinite(loss_v))
            throw ValueError("train: non-finite loss at step " + std::to_string(step));
        backward(loss);
        adamw_step(params, state, hyper, static_cast<int64_t>(step));

        if (log.is_open()) {
            char line[64];
            std::snprintf(line, sizeof(line), "%llu,%.9g\n", static_cast<unsigned long long>(step),
                          loss_v);
            log << line;
            if (!log.good()) throw IoError("train: log write failed");
        }
        if (!checkpoint_dir.empty() && hyper.checkpoint_interval > 0 &&
            step % static_cast<uint64_t>(hyper.checkpoint_interval) == 0 &&
            step != static_cast<uint64_t>(hyper.steps))
            save_checkpoint(checkpoint_path(checkpoint_dir, step, false), snapshot(step));
    }

    uint64_t end_step = std::max(start_step, static_cast<uint64_t>(hyper.steps));
    Checkpoint result = snapshot(end_step);
    if (!checkpoint_dir.empty())
        save_checkpoint(checkpoint_path(checkpoint_dir, result.step, true), result);
    return result;
}

}  // namespace stoic
