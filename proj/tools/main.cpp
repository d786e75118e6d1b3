#include <cstdlib>
#include <string_view>

#include "CLI11.hpp"
#include "commands.hpp"
#include "stoic/runconfig.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

int main(int argc, char** argv) {
#ifdef _OPENMP
    // STOIC_THREADS caps the worker count (default: machine cores). Results
    // are bit-identical for any setting.
    if (const char* env = std::getenv("STOIC_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif

    CLI::App app{"stoic - token-free transformer diffusion models, training and cost analysis"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 2 config error, 3 runtime error, 4 checkpoint/config "
               "incompatibility, 5 gradcheck failure.\nEnvironment: STOIC_THREADS caps the worker "
               "count.\n\nConfig file keys and defaults:\n" +
               stoic::run_config_reference());

    stoic::cli::TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Train a model from a run configuration");
    train->add_option("--config", train_args.config_path, "Run configuration file")->required();
    train->add_option("--out", train_args.out_dir, "Output directory (checkpoints + metrics.csv)")
        ->required();

    stoic::cli::SampleArgs sample_args;
    CLI::App* sample = app.add_subcommand("sample", "Sample images from a checkpoint");
    sample->add_option("--checkpoint", sample_args.checkpoint, "Checkpoint file")->required();
    sample->add_option("--sampler", sample_args.sampler, "ancestral | em")
        ->default_val("ancestral");
    sample->add_option("--steps", sample_args.steps, "Sampling steps")->default_val(1000);
    sample->add_option("--guidance", sample_args.guidance,
                       "Classifier-free guidance scale (conditional checkpoints)")
        ->default_val(1.0);
    sample->add_option("--count", sample_args.count, "Number of images")->default_val(16);
    sample->add_option("--seed", sample_args.seed, "Sampling seed")->default_val(0);
    sample->add_option("--out", sample_args.out_dir, "Output directory for sample_#####.ppm")
        ->required();
    sample->add_option("--mode", sample_args.mode,
                       "Synthetic-context mode for conditional checkpoints")
        ->default_val(0);

    stoic::cli::AnalyzeArgs analyze_args;
    CLI::App* analyze = app.add_subcommand("analyze", "Parameter/MAC accounting for configurations");
    analyze->add_option("--config", analyze_args.config_path, "Run configuration file")->required();
    analyze->add_option("--sweep", analyze_args.sweep,
                        "Cross-product sweep, e.g. \"L=256,512;N=12,24,32\"");
    analyze->add_option("--out", analyze_args.out_csv, "Output CSV path")->required();

    stoic::cli::GradcheckArgs gradcheck_args;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference gradient check on a reduced model");
    gradcheck->add_option("--config", gradcheck_args.config_path, "Run configuration file")
        ->required();
    gradcheck->add_option("--precision", gradcheck_args.precision, "Float width (64 only)")
        ->default_val(64);

    stoic::cli::InspectArgs inspect_args;
    CLI::App* inspect = app.add_subcommand("inspect", "Describe a checkpoint file");
    inspect->add_option("--checkpoint", inspect_args.checkpoint, "Checkpoint file")->required();

    // Top-level --help documents every subcommand flag in one listing.
    for (int i = 1; i < argc; ++i) {
        if (std::string_view(argv[i]) == "--help" || std::string_view(argv[i]) == "-h") {
            std::fputs(app.help("", CLI::AppFormatMode::All).c_str(), stdout);
            return 0;
        }
        if (argv[i][0] != '-') break;  // subcommand reached; its own help applies
    }

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) return stoic::cli::cmd_train(train_args);
    if (sample->parsed()) return stoic::cli::cmd_sample(sample_args);
    if (analyze->parsed()) return stoic::cli::cmd_analyze(analyze_args);
    if (gradcheck->parsed()) return stoic::cli::cmd_gradcheck(gradcheck_args);
    if (inspect->parsed()) return stoic::cli::cmd_inspect(inspect_args);
    return stoic::cli::kExitConfig;
}
