#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "stoic/checkpoint.hpp"
#include "stoic/model.hpp"
#include "stoic/runconfig.hpp"
#include "test_util.hpp"

using namespace stoic;
using testutil::TempDir;

#ifndef STOIC_CLI_PATH
#error "STOIC_CLI_PATH must point at the stoic binary"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args, const std::string& capture_file) {
    std::string cmd = std::string(STOIC_CLI_PATH) + " " + args + " > " + capture_file + " 2>&1";
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    auto bytes = testutil::read_bytes(capture_file);
    r.output.assign(bytes.begin(), bytes.end());
    return r;
}

const char* kTinyConfig = R"(
[model]
stride = s2
channels = 1
height = 8
width = 8
embed_dim = 32
heads = 4
num_blocks = 2

[diffusion]
timesteps = 40
beta_end = 0.1

[train]
steps = 0
batch_size = 8
checkpoint_interval = 0
seed = 3

[data]
source = two_blobs
count = 48
)";

std::string write_config(const TempDir& dir, const std::string& name, const std::string& text) {
    std::string path = dir.file(name);
    std::ofstream out(path);
    out << text;
    return path;
}

}  // namespace

TEST_CASE("run config defaults mirror the documented reference") {
    RunConfig rc = parse_run_config_text("");
    CHECK(rc.model.stride == StrideVariant::s2);
    CHECK(rc.model.embed_dim == 512);
    CHECK(rc.model.num_blocks == 12);
    CHECK(rc.model.heads == 8);  // 512/64
    CHECK(rc.model.decoder_conv == DecoderConv::conv_transpose);
    CHECK(!rc.model.context.has_value());
    CHECK(rc.diffusion.T == 1000);
    CHECK(rc.diffusion.beta_start == doctest::Approx(1e-4));
    CHECK(rc.train.lr == doctest::Approx(1e-4));
    CHECK(rc.train.cond_dropout == doctest::Approx(0.1));
    CHECK(rc.sample.steps == 1000);
    CHECK(rc.data.count == 2048);
}

TEST_CASE("run config parse errors carry line numbers") {
    try {
        parse_run_config_text("[model]\nstride = s2\nbogus_key = 1\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.line == 3);
        CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
    }
    try {
        parse_run_config_text("[model]\nstride = s9\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.line == 2);
    }
    try {
        parse_run_config_text("stray = 1\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.line == 1);
    }
    CHECK_THROWS_AS(parse_run_config_text("[nope]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("[model]\nheads = 3\nembed_dim = 8\n"), ConfigError);
}

TEST_CASE("run config resolves auto heads and decoder conv by stride") {
    RunConfig s1 = parse_run_config_text("[model]\nstride = s1\nembed_dim = 128\n");
    CHECK(s1.model.heads == 2);
    CHECK(s1.model.decoder_conv == DecoderConv::conv);

    RunConfig ctx = parse_run_config_text("[model]\ncontext_tokens = 77\ncontext_dim = 5\n");
    REQUIRE(ctx.model.context.has_value());
    CHECK(ctx.model.context->token_dim == 5);
    CHECK_THROWS_AS(parse_run_config_text("[model]\ncontext_tokens = 12\n"), ConfigError);
}

TEST_CASE("the documented reference text itself parses cleanly") {
    RunConfig rc = parse_run_config_text(run_config_reference());
    CHECK(rc.model.embed_dim == 512);
}

TEST_CASE("cli --help exits zero and documents flags and config keys") {
    TempDir dir("cli_help");
    RunResult r = run_cli("--help", dir.file("out.txt"));
    CHECK(r.exit_code == 0);
    for (const char* required :
         {"train", "sample", "analyze", "gradcheck", "inspect", "--config", "--checkpoint",
          "--guidance", "STOIC_THREADS", "embed_dim", "beta_start", "cond_dropout"})
        CHECK(r.output.find(required) != std::string::npos);
}

TEST_CASE("cli train: missing config exits 2 and names the path") {
    TempDir dir("cli_missing");
    RunResult r = run_cli("train --config /definitely/not/here.cfg --out " + dir.file("out"),
                          dir.file("log.txt"));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("/definitely/not/here.cfg") != std::string::npos);
}

TEST_CASE("cli train: zero-step run writes a checkpoint and exits 0") {
    TempDir dir("cli_train0");
    std::string cfg = write_config(dir, "run.cfg", kTinyConfig);
    RunResult r = run_cli("train --config " + cfg + " --out " + dir.file("out"), dir.file("log"));
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(dir.file("out") + "/ckpt_final.stoic"));
    CHECK(std::filesystem::exists(dir.file("out") + "/metrics.csv"));
}

TEST_CASE("cli train: a short toy run reduces the loss") {
    TempDir dir("cli_train");
    std::string text = kTinyConfig;
    text.replace(text.find("steps = 0"), 9, "steps = 220");
    std::string cfg = write_config(dir, "run.cfg", text);
    RunResult r = run_cli("train --config " + cfg + " --out " + dir.file("out"), dir.file("log"));
    REQUIRE(r.exit_code == 0);

    std::ifstream metrics(dir.file("out") + "/metrics.csv");
    std::string line;
    std::getline(metrics, line);  // header
    double first = -1, last = -1;
    while (std::getline(metrics, line)) {
        double v = std::strtod(line.substr(line.find(',') + 1).c_str(), nullptr);
        if (first < 0) first = v;
        last = v;
    }
    CHECK(first > 0);
    CHECK(last < first);
}

TEST_CASE("cli sample: deterministic, honors count, validates flags") {
    TempDir dir("cli_sample");
    std::string cfg = write_config(dir, "run.cfg", kTinyConfig);
    REQUIRE(run_cli("train --config " + cfg + " --out " + dir.file("m"), dir.file("log"))
                .exit_code == 0);
    std::string ckpt = dir.file("m") + "/ckpt_final.stoic";

    RunResult a = run_cli("sample --checkpoint " + ckpt + " --steps 40 --count 2 --seed 11 --out " +
                              dir.file("s1"),
                          dir.file("log"));
    CHECK(a.exit_code == 0);
    RunResult b = run_cli("sample --checkpoint " + ckpt + " --steps 40 --count 2 --seed 11 --out " +
                              dir.file("s2"),
                          dir.file("log"));
    CHECK(b.exit_code == 0);
    for (const char* name : {"/sample_00000.ppm", "/sample_00001.ppm"})
        CHECK(testutil::read_bytes(dir.file("s1") + name) ==
              testutil::read_bytes(dir.file("s2") + name));

    RunResult none = run_cli("sample --checkpoint " + ckpt + " --steps 5 --count 0 --out " +
                                 dir.file("s0"),
                             dir.file("log"));
    CHECK(none.exit_code == 0);
    CHECK(!std::filesystem::exists(dir.file("s0") + "/sample_00000.ppm"));

    RunResult bad = run_cli("sample --checkpoint " + ckpt + " --sampler nope --out " +
                                dir.file("sx"),
                            dir.file("log"));
    CHECK(bad.exit_code == 2);
}

TEST_CASE("cli sample: strided and full step counts both emit valid PPM headers") {
    TempDir dir("cli_steps");
    std::string cfg = write_config(dir, "run.cfg", kTinyConfig);
    REQUIRE(run_cli("train --config " + cfg + " --out " + dir.file("m"), dir.file("log"))
                .exit_code == 0);
    std::string ckpt = dir.file("m") + "/ckpt_final.stoic";

    // Mirrors the step sweep: a strided subsequence and the full chain.
    for (int steps : {28, 40}) {
        RunResult r = run_cli("sample --checkpoint " + ckpt + " --steps " +
                                  std::to_string(steps) + " --count 1 --out " +
                                  dir.file("s" + std::to_string(steps)),
                              dir.file("log"));
        REQUIRE(r.exit_code == 0);
        auto bytes =
            testutil::read_bytes(dir.file("s" + std::to_string(steps)) + "/sample_00000.ppm");
        REQUIRE(bytes.size() > 11);
        CHECK(std::string(bytes.begin(), bytes.begin() + 11) == "P6\n8 8\n255\n");
        CHECK(bytes.size() == 11 + 8 * 8 * 3);
    }
}

TEST_CASE("cli sample: em sampler runs from a checkpoint") {
    TempDir dir("cli_em");
    std::string cfg = write_config(dir, "run.cfg", kTinyConfig);
    REQUIRE(run_cli("train --config " + cfg + " --out " + dir.file("m"), dir.file("log"))
                .exit_code == 0);
    RunResult r = run_cli("sample --checkpoint " + dir.file("m") +
                              "/ckpt_final.stoic --sampler em --steps 25 --count 1 --out " +
                              dir.file("s"),
                          dir.file("log"));
    CHECK(r.exit_code == 0);
    CHECK(std::filesystem::exists(dir.file("s") + "/sample_00000.ppm"));
}

TEST_CASE("cli sample: checkpoint/config shape mismatch exits 4") {
    TempDir dir("cli_mismatch");
    StoicConfig big;
    big.stride = StrideVariant::s2;
    big.channels = 1;
    big.height = 8;
    big.width = 8;
    big.embed_dim = 64;
    big.heads = 4;
    big.num_blocks = 2;
    StoicConfig small = big;
    small.embed_dim = 32;
    Checkpoint ck;
    ck.config = big;
    ck.schedule = ScheduleSpec{40, 1e-4, 0.1, 0.1, 20.0};
    ck.params = build_params(small, 0);  // shapes disagree with the header
    save_checkpoint(dir.file("bad.stoic"), ck);

    RunResult r = run_cli("sample --checkpoint " + dir.file("bad.stoic") + " --count 1 --out " +
                              dir.file("s"),
                          dir.file("log"));
    CHECK(r.exit_code == 4);
}

TEST_CASE("cli analyze: single config, sweeps, and malformed sweeps") {
    TempDir dir("cli_analyze");
    std::string cfg = write_config(dir, "run.cfg", kTinyConfig);

    RunResult single =
        run_cli("analyze --config " + cfg + " --out " + dir.file("one.csv"), dir.file("log"));
    CHECK(single.exit_code == 0);
    {
        std::ifstream in(dir.file("one.csv"));
        std::string line;
        int rows = 0;
        while (std::getline(in, line)) ++rows;
        CHECK(rows == 2);
    }

    RunResult sweep = run_cli("analyze --config " + cfg +
                                  " --sweep \"L=256,512;N=12,24,32\" --out " + dir.file("s.csv"),
                              dir.file("log"));
    CHECK(sweep.exit_code == 0);
    {
        std::ifstream in(dir.file("s.csv"));
        std::string line;
        std::getline(in, line);
        CHECK(line == "stride,L,N,params,gmacs");
        int rows = 0;
        double prev_gmacs = 0;
        while (std::getline(in, line)) {
            ++rows;
            // gmacs strictly increases within each fixed-L group of three.
            double g = std::strtod(line.substr(line.rfind(',') + 1).c_str(), nullptr);
            if (rows % 3 != 1) CHECK(g > prev_gmacs);
            prev_gmacs = g;
        }
        CHECK(rows == 6);
    }

    RunResult bad = run_cli("analyze --config " + cfg + " --sweep \"L=;N=1\" --out " +
                                dir.file("bad.csv"),
                            dir.file("log"));
    CHECK(bad.exit_code == 2);
    RunResult bad2 = run_cli("analyze --config " + cfg + " --sweep \"Q=3\" --out " +
                                 dir.file("bad2.csv"),
                             dir.file("log"));
    CHECK(bad2.exit_code == 2);
}

TEST_CASE("cli gradcheck: passes normally, fails under the corrupt-backward hook") {
    TempDir dir("cli_gradcheck");
    std::string cfg = write_config(dir, "run.cfg", kTinyConfig);
    RunResult ok = run_cli("gradcheck --config " + cfg, dir.file("log"));
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("max_rel_error") != std::string::npos);

    std::string cmd = std::string("STOIC_TEST_CORRUPT_BACKWARD=1 ") + STOIC_CLI_PATH +
                      " gradcheck --config " + cfg + " > " + dir.file("log2") + " 2>&1";
    int rc = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(rc) == 5);

    RunResult p32 = run_cli("gradcheck --config " + cfg + " --precision 32", dir.file("log3"));
    CHECK(p32.exit_code == 2);
}

TEST_CASE("cli gradcheck: non-square reduced image also passes") {
    TempDir dir("cli_gradcheck_ns");
    std::string text = kTinyConfig;
    text.replace(text.find("width = 8"), 9, "width = 6");
    std::string cfg = write_config(dir, "run.cfg", text);
    // The reduced model keeps the configured aspect ratio valid (4x6 -> the
    // fixed 4x4 probe only changes height/width below 8).
    RunResult r = run_cli("gradcheck --config " + cfg, dir.file("log"));
    CHECK(r.exit_code == 0);
}

TEST_CASE("cli inspect prints checkpoint structure") {
    TempDir dir("cli_inspect");
    std::string cfg = write_config(dir, "run.cfg", kTinyConfig);
    REQUIRE(run_cli("train --config " + cfg + " --out " + dir.file("m"), dir.file("log"))
                .exit_code == 0);
    RunResult r = run_cli("inspect --checkpoint " + dir.file("m") + "/ckpt_final.stoic",
                          dir.file("log"));
    CHECK(r.exit_code == 0);
    for (const char* required : {"version", "step", "stride=s2", "init_conv/weight", "schedule"})
        CHECK(r.output.find(required) != std::string::npos);

    RunResult bad = run_cli("inspect --checkpoint " + dir.file("nope.stoic"), dir.file("log"));
    CHECK(bad.exit_code == 3);
}
