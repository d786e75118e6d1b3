#pragma once

#include <string>

#include "stoic/checkpoint.hpp"
#include "stoic/config.hpp"
#include "stoic/data.hpp"
#include "stoic/diffusion.hpp"
#include "stoic/train.hpp"

namespace stoic {

/// Sampling defaults carried by the [sample] section.
struct SampleDefaults {
    SamplerKind sampler = SamplerKind::ancestral;
    int steps = 1000;
    double guidance = 1.0;
    int count = 16;
    uint64_t seed = 0;
};

struct DataSpec {
    enum class Source { two_blobs, checker, cifar10 };
    Source source = Source::two_blobs;
    std::string path;        // cifar10 batch file
    int64_t count = 2048;    // generated sample count for toy sources
    double noise_std = 0.1;
    bool conditional = false;  // attach synthetic per-mode contexts
    uint64_t seed = 1;
};

/// Flat key=value run description with [model], [diffusion], [train],
/// [sample] and [data] sections. Unknown sections or keys are rejected with
/// their line number; every key has a default (see run_config_reference()).
struct RunConfig {
    StoicConfig model;
    ScheduleSpec diffusion;
    TrainHyper train;
    SampleDefaults sample;
    DataSpec data;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Annotated config listing every key with its default value.
std::string run_config_reference();

/// Materializes the [data] section (toy generation or CIFAR-10 load).
Dataset load_dataset(const DataSpec& spec, const StoicConfig& model);

}  // namespace stoic
