#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>

#include "stoic/runconfig.hpp"
#include "stoic/train.hpp"
#include "test_util.hpp"

using namespace stoic;
using testutil::TempDir;

namespace {

StoicConfig toy_model() {
    StoicConfig c;
    c.stride = StrideVariant::s2;
    c.channels = 1;
    c.height = 8;
    c.width = 8;
    c.embed_dim = 32;
    c.heads = 4;
    c.num_blocks = 2;
    return c;
}

ScheduleSpec toy_schedule() {
    ScheduleSpec s;
    s.T = 50;
    s.beta_end = 0.1;
    return s;
}

TrainHyper toy_hyper(int64_t steps) {
    TrainHyper h;
    h.batch_size = 16;
    h.steps = steps;
    h.checkpoint_interval = 0;
    h.seed = 4;
    return h;
}

bool stores_bit_equal(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [path, t] : a)
        if (!b.contains(path) || !bit_equal(t, b.at(path))) return false;
    return true;
}

}  // namespace

TEST_CASE("adamw: zero gradient leaves parameters unchanged without decay") {
    ParamStore p;
    p.insert("w", Tensor::from_vector({3}, {1.0, -2.0, 0.5}));
    p.set_requires_grad(true);
    AdamState st = AdamState::init_like(p);
    TrainHyper h;
    h.weight_decay = 0.0;
    Tensor before = p.at("w").clone();
    adamw_step(p, st, h, 1);
    CHECK(bit_equal(p.at("w"), before));
}

TEST_CASE("adamw: zero gradient with decay scales by (1 - lr * weight_decay)") {
    ParamStore p;
    p.insert("w", Tensor::from_vector({3}, {1.0, -2.0, 0.5}, DType::f64));
    p.set_requires_grad(true);
    AdamState st = AdamState::init_like(p);
    TrainHyper h;
    h.lr = 0.05;
    h.weight_decay = 0.1;
    adamw_step(p, st, h, 1);
    for (int64_t i = 0; i < 3; ++i) {
        double theta0 = i == 0 ? 1.0 : (i == 1 ? -2.0 : 0.5);
        CHECK(p.at("w").value(i) == doctest::Approx(theta0 * (1.0 - 0.05 * 0.1)).epsilon(1e-15));
    }
}

TEST_CASE("adamw: bias-corrected first step moves by about lr") {
    ParamStore p;
    p.insert("w", Tensor::from_vector({1}, {1.0}, DType::f64));
    p.set_requires_grad(true);
    Tensor& w = p.at("w");
    backward(sum(w));  // gradient = 1
    AdamState st = AdamState::init_like(p);
    TrainHyper h;
    h.lr = 0.1;
    h.weight_decay = 0.0;
    adamw_step(p, st, h, 1);
    // mhat = vhat = 1 after bias correction: theta' = 1 - 0.1 * 1/(1 + eps).
    CHECK(std::fabs(w.value(0) - 0.9) < 1e-6);
}

TEST_CASE("training loss strictly decreases on a fixed batch") {
    StoicConfig c = toy_model();
    NoiseSchedule sched = toy_schedule().make();
    Dataset data = gen_toy_dataset(ToyKind::two_blobs, 32, {1, 8, 8}, 7);

    ParamStore params = build_params(c, 1);
    params.set_requires_grad(true);
    AdamState st = AdamState::init_like(params);
    TrainHyper h;  // default lr 1e-4
    DenoiseFn net = make_denoiser(params, c);

    Rng rng(2);
    Tensor eps = Tensor::randn(data.images.shape(), rng);
    std::vector<int> t(static_cast<size_t>(data.size()));
    for (auto& tv : t) tv = static_cast<int>(rng.uniform_int(1, sched.T));

    double prev = 1e300;
    for (int step = 1; step <= 10; ++step) {
        params.zero_grads();
        Tensor loss = ddpm_loss(net, data.images, t, eps, sched);
        backward(loss);
        adamw_step(params, st, h, step);
        CHECK(loss.value(0) < prev);
        prev = loss.value(0);
    }
}

TEST_CASE("train: zero steps returns the initial parameters and an empty log body") {
    TempDir dir("train0");
    StoicConfig c = toy_model();
    Dataset data = gen_toy_dataset(ToyKind::two_blobs, 32, {1, 8, 8}, 7);
    Checkpoint ck = train(c, toy_schedule(), data, toy_hyper(0), dir.file(""),
                          dir.file("metrics.csv"));
    CHECK(ck.step == 0);
    CHECK(stores_bit_equal(ck.params, build_params(c, toy_hyper(0).seed)));

    std::ifstream log(dir.file("metrics.csv"));
    std::string line;
    CHECK(std::getline(log, line));
    CHECK(line == "step,loss");
    CHECK(!std::getline(log, line));

    CHECK(std::filesystem::exists(dir.file("ckpt_final.stoic")));
}

TEST_CASE("train runs are bit-identical for identical inputs") {
    TempDir dir("train_det");
    StoicConfig c = toy_model();
    Dataset data = gen_toy_dataset(ToyKind::two_blobs, 32, {1, 8, 8}, 7);
    std::filesystem::create_directories(dir.file("a"));
    std::filesystem::create_directories(dir.file("b"));
    train(c, toy_schedule(), data, toy_hyper(8), dir.file("a"), "");
    train(c, toy_schedule(), data, toy_hyper(8), dir.file("b"), "");
    CHECK(testutil::read_bytes(dir.file("a") + "/ckpt_final.stoic") ==
          testutil::read_bytes(dir.file("b") + "/ckpt_final.stoic"));
}

TEST_CASE("resuming from a mid-run checkpoint reproduces the full run bit-identically") {
    TempDir dir("train_resume");
    StoicConfig c = toy_model();
    Dataset data = gen_toy_dataset(ToyKind::two_blobs, 32, {1, 8, 8}, 7);

    Checkpoint full = train(c, toy_schedule(), data, toy_hyper(10), "", "");

    TrainHyper first = toy_hyper(6);
    Checkpoint mid = train(c, toy_schedule(), data, first, "", "");
    CHECK(mid.step == 6);
    TrainHyper rest = toy_hyper(10);
    Checkpoint resumed = train(c, toy_schedule(), data, rest, "", "", &mid);
    CHECK(resumed.step == 10);
    CHECK(stores_bit_equal(resumed.params, full.params));
    CHECK(stores_bit_equal(resumed.adam_m, full.adam_m));
    CHECK(stores_bit_equal(resumed.adam_v, full.adam_v));
    CHECK(resumed.rng_state == full.rng_state);
}

TEST_CASE("with full condition dropout, conditional and unconditional training coincide") {
    StoicConfig c = toy_model();
    c.context = ContextSpec{77, 8};
    ToyOptions opts;
    opts.with_contexts = true;
    Dataset data = gen_toy_dataset(ToyKind::two_blobs, 32, {1, 8, 8}, 7, opts);

    TrainHyper cond = toy_hyper(6);
    cond.guidance_training = true;
    cond.cond_dropout = 1.0;
    Checkpoint a = train(c, toy_schedule(), data, cond, "", "");

    TrainHyper uncond = toy_hyper(6);
    uncond.guidance_training = false;
    Checkpoint b = train(c, toy_schedule(), data, uncond, "", "");

    CHECK(stores_bit_equal(a.params, b.params));
}

TEST_CASE("train validates guidance prerequisites and aborts on bad setups") {
    StoicConfig c = toy_model();
    Dataset data = gen_toy_dataset(ToyKind::two_blobs, 8, {1, 8, 8}, 7);
    TrainHyper h = toy_hyper(1);
    h.guidance_training = true;
    CHECK_THROWS_AS(train(c, toy_schedule(), data, h, "", ""), ConfigError);

    Dataset empty;
    empty.images = Tensor::zeros({0, 1, 8, 8});
    CHECK_THROWS_AS(train(c, toy_schedule(), empty, toy_hyper(1), "", ""), ValueError);
}

TEST_CASE("metrics log records one loss per step") {
    TempDir dir("train_log");
    StoicConfig c = toy_model();
    Dataset data = gen_toy_dataset(ToyKind::two_blobs, 32, {1, 8, 8}, 7);
    train(c, toy_schedule(), data, toy_hyper(5), "", dir.file("metrics.csv"));
    std::ifstream log(dir.file("metrics.csv"));
    std::string line;
    std::getline(log, line);
    CHECK(line == "step,loss");
    int rows = 0;
    while (std::getline(log, line)) {
        ++rows;
        CHECK(line.find(',') != std::string::npos);
    }
    CHECK(rows == 5);
}

TEST_CASE("checkpoint files round-trip bit-identically") {
    TempDir dir("ckpt_rt");
    StoicConfig c = toy_model();
    Checkpoint ck;
    ck.config = c;
    ck.schedule = toy_schedule();
    ck.params = build_params(c, 3);
    ck.has_optimizer = true;
    ck.adam_m = AdamState::init_like(ck.params).m;
    ck.adam_v = AdamState::init_like(ck.params).v;
    ck.rng_state = {1, 2, 3, 4};
    ck.step = 99;

    std::string path = dir.file("x.stoic");
    save_checkpoint(path, ck);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.version == ck.version);
    CHECK(back.step == 99);
    CHECK(back.rng_state == ck.rng_state);
    CHECK(back.schedule.T == ck.schedule.T);
    CHECK(stores_bit_equal(back.params, ck.params));
    CHECK(stores_bit_equal(back.adam_m, ck.adam_m));

    // Saving the loaded copy reproduces the file byte for byte.
    std::string path2 = dir.file("y.stoic");
    save_checkpoint(path2, back);
    CHECK(testutil::read_bytes(path) == testutil::read_bytes(path2));

    CHECK_NOTHROW(validate_checkpoint_shapes(back));
}

TEST_CASE("checkpoint corruption modes are reported distinctly") {
    TempDir dir("ckpt_bad");
    StoicConfig c = toy_model();
    Checkpoint ck;
    ck.config = c;
    ck.schedule = toy_schedule();
    ck.params = build_params(c, 3);
    std::string path = dir.file("x.stoic");
    save_checkpoint(path, ck);
    auto bytes = testutil::read_bytes(path);

    auto expect_kind = [&](std::vector<unsigned char> mutated, CheckpointError::Kind kind) {
        std::string p = dir.file("mutated.stoic");
        testutil::write_bytes(p, mutated);
        try {
            load_checkpoint(p);
            FAIL("expected a checkpoint error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind == kind);
        }
    };

    // Bad magic.
    auto bad = bytes;
    bad[0] = 'X';
    expect_kind(bad, CheckpointError::Kind::bad_magic);

    // Unsupported version 99.
    bad = bytes;
    bad[4] = 99;
    expect_kind(bad, CheckpointError::Kind::unsupported_version);

    // Payload bit flip breaks the record digest.
    bad = bytes;
    bad[bytes.size() / 2] ^= 0x01;
    expect_kind(bad, CheckpointError::Kind::digest_mismatch);

    // Truncation.
    bad = bytes;
    bad.resize(bytes.size() - 9);
    expect_kind(bad, CheckpointError::Kind::truncated);
}

TEST_CASE("shape validation catches checkpoints inconsistent with their config") {
    StoicConfig big = toy_model();
    big.embed_dim = 64;
    big.heads = 4;
    Checkpoint ck;
    ck.config = big;
    ck.schedule = toy_schedule();
    ck.params = build_params(toy_model(), 0);  // wrong shapes for `big`
    try {
        validate_checkpoint_shapes(ck);
        FAIL("expected a shape mismatch");
    } catch (const CheckpointError& e) {
        CHECK(e.kind == CheckpointError::Kind::malformed);
    }
}
