#pragma once

#include <cstdint>
#include <string>

#include "stoic/checkpoint.hpp"
#include "stoic/data.hpp"
#include "stoic/diffusion.hpp"
#include "stoic/model.hpp"

namespace stoic {

struct TrainHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int batch_size = 128;
    int64_t steps = 0;
    double cond_dropout = 0.1;  // context dropped to the zero null condition
    uint64_t seed = 0;
    bool guidance_training = false;
    int64_t checkpoint_interval = 1000;  // 0 = final checkpoint only

    void validate() const;
};

/// Adam moment buffers, path-aligned with the parameter store.
struct AdamState {
    ParamStore m;
    ParamStore v;

    static AdamState init_like(const ParamStore& params);
};

/// Decoupled-weight-decay Adam update (step_index is 1-based):
/// theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * weight_decay * theta.
/// Consumes the gradients accumulated on `params`.
void adamw_step(ParamStore& params, AdamState& state, const TrainHyper& hyper, int64_t step_index);

/// Noise-prediction training loop.
///
/// Each step samples a batch with replacement, per-element uniform
/// timesteps in [1,T] and standard-normal noise, applies condition dropout
/// when guidance_training is set, takes one AdamW step on the
/// noise-prediction loss and appends "step,loss" to the CSV log. Writes a
/// checkpoint every checkpoint_interval steps (plus the final state) into
/// checkpoint_dir when it is non-empty. Fully deterministic given the seed;
/// passing `resume` continues a run bit-identically. A non-finite loss
/// aborts with a diagnostic.
Checkpoint train(const StoicConfig& config, const ScheduleSpec& schedule, const Dataset& dataset,
                 const TrainHyper& hyper, const std::string& checkpoint_dir,
                 const std::string& log_path, const Checkpoint* resume = nullptr);

/// Wraps a parameter store as a DenoiseFn evaluating stoic_forward.
DenoiseFn make_denoiser(const ParamStore& params, const StoicConfig& config);

}  // namespace stoic
