#pragma once

#include <cstdint>
#include <string>

namespace stoic::cli {

// Exit codes shared by every subcommand:
//   0 success, 2 configuration error, 3 runtime error,
//   4 checkpoint/config incompatibility, 5 gradient check failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitCheckpoint = 4;
inline constexpr int kExitGradcheck = 5;

struct TrainArgs {
    std::string config_path;
    std::string out_dir;
};
int cmd_train(const TrainArgs& args);

struct SampleArgs {
    std::string checkpoint;
    std::string sampler = "ancestral";
    int steps = 1000;
    double guidance = 1.0;
    int count = 16;
    uint64_t seed = 0;
    std::string out_dir;
    int mode = 0;  // synthetic-context selector for conditional checkpoints
};
int cmd_sample(const SampleArgs& args);

struct AnalyzeArgs {
    std::string config_path;
    std::string sweep;  // e.g. "L=256,512;N=12,24,32"
    std::string out_csv;
};
int cmd_analyze(const AnalyzeArgs& args);

struct GradcheckArgs {
    std::string config_path;
    int precision = 64;
};
int cmd_gradcheck(const GradcheckArgs& args);

struct InspectArgs {
    std::string checkpoint;
};
int cmd_inspect(const InspectArgs& args);

}  // namespace stoic::cli
