#include "commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <vector>

#include "stoic/complexity.hpp"
#include "stoic/gradcheck.hpp"
#include "stoic/runconfig.hpp"

namespace stoic::cli {

namespace fs = std::filesystem;

namespace {

int config_fail(const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
}

int runtime_fail(const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
}

}  // namespace

int cmd_train(const TrainArgs& args) {
    RunConfig rc;
    try {
        rc = load_run_config(args.config_path);
    } catch (const ConfigError& e) {
        return config_fail(e);
    }
    try {
        fs::create_directories(args.out_dir);
        Dataset dataset = load_dataset(rc.data, rc.model);
        if (rc.train.guidance_training && !dataset.contexts) {
            std::fprintf(stderr, "config error: guidance_training = true but the dataset has no "
                                 "contexts (set [data] conditional = true)\n");
            return kExitConfig;
        }
        std::string log_path = (fs::path(args.out_dir) / "metrics.csv").string();
        Checkpoint ckpt =
            train(rc.model, rc.diffusion, dataset, rc.train, args.out_dir, log_path);
        std::printf("trained %llu steps; final checkpoint %s/ckpt_final.stoic\n",
                    static_cast<unsigned long long>(ckpt.step), args.out_dir.c_str());
        return kExitOk;
    } catch (const ConfigError& e) {
        return config_fail(e);
    } catch (const std::exception& e) {
        return runtime_fail(e);
    }
}

int cmd_sample(const SampleArgs& args) {
    SamplerKind sampler;
    if (args.sampler == "ancestral") sampler = SamplerKind::ancestral;
    else if (args.sampler == "em") sampler = SamplerKind::euler_maruyama;
    else {
        std::fprintf(stderr, "config error: unknown sampler '%s' (ancestral|em)\n",
                     args.sampler.c_str());
        return kExitConfig;
    }
    if (args.steps < 1 || args.count < 0) {
        std::fprintf(stderr, "config error: steps must be >= 1 and count >= 0\n");
        return kExitConfig;
    }

    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint(args.checkpoint);
        validate_checkpoint_shapes(ckpt);
    } catch (const CheckpointError& e) {
        if (e.kind == CheckpointError::Kind::malformed) {
            std::fprintf(stderr, "checkpoint incompatible: %s\n", e.what());
            return kExitCheckpoint;
        }
        return runtime_fail(e);
    }

    try {
        NoiseSchedule sched = ckpt.schedule.make();
        ckpt.config.validate();

        Tensor context;
        bool conditional = ckpt.config.context.has_value();
        if (conditional) {
            if (args.mode < 0 || args.mode >= ckpt.config.context->token_dim) {
                std::fprintf(stderr, "config error: --mode out of range for this checkpoint\n");
                return kExitConfig;
            }
            context = toy_context(args.mode, ckpt.config.context->token_dim);
        }

        SampleOptions opts;
        opts.sampler = sampler;
        opts.steps = args.steps;
        opts.guidance = args.guidance;
        opts.seed = args.seed;

        DenoiseFn net = make_denoiser(ckpt.params, ckpt.config);
        Shape img_shape{ckpt.config.channels, ckpt.config.height, ckpt.config.width};
        Tensor batch = sample(net, sched, img_shape, args.count, opts,
                              conditional ? &context : nullptr);

        fs::create_directories(args.out_dir);
        int64_t per = shape_numel(img_shape);
        for (int i = 0; i < args.count; ++i) {
            Tensor img = Tensor::zeros(img_shape, DType::f32);
            auto src = batch.data<float>();
            auto dst = img.mutable_data<float>();
            for (int64_t j = 0; j < per; ++j) dst[j] = src[i * per + j];
            char name[32];
            std::snprintf(name, sizeof(name), "sample_%05d.ppm", i);
            write_image(img, (fs::path(args.out_dir) / name).string());
        }
        std::printf("wrote %d image(s) to %s\n", args.count, args.out_dir.c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        return runtime_fail(e);
    }
}

namespace {

// "L=256,512;N=12,24,32" -> cross product of configs. Heads follow the
// swept embed dim (embed_dim/64 rule); everything else comes from the base.
std::vector<StoicConfig> expand_sweep(const StoicConfig& base, const std::string& sweep) {
    std::vector<int> ls{base.embed_dim};
    std::vector<int> ns{base.num_blocks};
    if (!sweep.empty()) {
        bool saw_l = false, saw_n = false;
        size_t pos = 0;
        while (pos <= sweep.size()) {
            size_t semi = sweep.find(';', pos);
            std::string part = sweep.substr(pos, semi == std::string::npos ? std::string::npos
                                                                           : semi - pos);
            pos = semi == std::string::npos ? sweep.size() + 1 : semi + 1;
            if (part.empty()) throw ConfigError("sweep: empty segment");
            size_t eq = part.find('=');
            if (eq == std::string::npos) throw ConfigError("sweep: expected KEY=v1,v2,...");
            std::string key = part.substr(0, eq);
            std::vector<int>* target = nullptr;
            if (key == "L" && !saw_l) {
                target = &ls;
                saw_l = true;
            } else if (key == "N" && !saw_n) {
                target = &ns;
                saw_n = true;
            } else {
                throw ConfigError("sweep: unknown or repeated key '" + key + "'");
            }
            target->clear();
            std::string values = part.substr(eq + 1);
            size_t vpos = 0;
            while (vpos <= values.size()) {
                size_t comma = values.find(',', vpos);
                std::string tok = values.substr(
                    vpos, comma == std::string::npos ? std::string::npos : comma - vpos);
                vpos = comma == std::string::npos ? values.size() + 1 : comma + 1;
                char* end = nullptr;
                long v = std::strtol(tok.c_str(), &end, 10);
                if (tok.empty() || end == tok.c_str() || *end != '\0' || v < 1)
                    throw ConfigError("sweep: bad value '" + tok + "'");
                target->push_back(static_cast<int>(v));
            }
            if (target->empty()) throw ConfigError("sweep: no values for '" + key + "'");
        }
    }
    std::vector<StoicConfig> out;
    for (int l : ls)
        for (int n : ns) {
            StoicConfig c = base;
            c.embed_dim = l;
            c.num_blocks = n;
            c.heads = StoicConfig::default_heads(l);
            c.validate();
            out.push_back(c);
        }
    return out;
}

}  // namespace

int cmd_analyze(const AnalyzeArgs& args) {
    try {
        RunConfig rc = load_run_config(args.config_path);
        std::vector<StoicConfig> configs = expand_sweep(rc.model, args.sweep);
        scaling_table(configs, args.out_csv);
        std::printf("# %s\n", kMacConventionNote);
        std::printf("wrote %zu row(s) to %s\n", configs.size(), args.out_csv.c_str());
        return kExitOk;
    } catch (const ConfigError& e) {
        return config_fail(e);
    } catch (const std::exception& e) {
        return runtime_fail(e);
    }
}

int cmd_gradcheck(const GradcheckArgs& args) {
    RunConfig rc;
    try {
        rc = load_run_config(args.config_path);
        if (args.precision != 64)
            throw ConfigError("gradcheck runs in 64-bit only (--precision 64)");
    } catch (const ConfigError& e) {
        return config_fail(e);
    }

    try {
        // Reduced model: the check is exhaustive enough at tiny scale and
        // the finite differences stay well conditioned. Extents are halved
        // down to a 4-6 pixel probe, so small non-square inputs keep their
        // aspect.
        StoicConfig c = rc.model;
        c.embed_dim = 16;
        c.heads = 2;
        c.num_blocks = std::min(c.num_blocks, 2);
        while (c.height > 6) c.height = (c.height + 1) / 2;
        while (c.width > 6) c.width = (c.width + 1) / 2;
        if (c.stride == StrideVariant::s2) {
            c.height += c.height % 2;
            c.width += c.width % 2;
        }
        c.validate();

        ParamStore params = build_params(c, 7, DType::f64);
        // The final conv is zero-initialized by design, which would zero all
        // upstream gradients; the check needs a generic point instead.
        Rng wiggle(13);
        for (const char* path : {"decoder/out_conv/weight", "decoder/out_conv/bias"}) {
            Tensor& t = params.at(path);
            for (int64_t i = 0; i < t.numel(); ++i) t.set_value(i, wiggle.truncated_normal(0.05));
        }
        Rng rng(11);
        Tensor x = Tensor::randn({2, c.channels, c.height, c.width}, rng, DType::f64);
        Tensor weights = Tensor::randn(x.shape(), rng, DType::f64);
        std::vector<int> t{3, 7};
        std::optional<Tensor> ctx;
        if (c.context) {
            Tensor both = Tensor::zeros({2, c.context->num_tokens, c.context->token_dim},
                                        DType::f64);
            Tensor a = toy_context(0, c.context->token_dim).astype(DType::f64);
            Tensor b = toy_context(1 % c.context->token_dim, c.context->token_dim)
                           .astype(DType::f64);
            for (int64_t i = 0; i < a.numel(); ++i) {
                both.set_value(i, a.value(i));
                both.set_value(a.numel() + i, b.value(i));
            }
            ctx = both;
        }

        const bool corrupt = std::getenv("STOIC_TEST_CORRUPT_BACKWARD") != nullptr;
        LossFn f = [&](ParamStore& p) {
            Tensor out = stoic_forward(x, t, ctx, p, c);
            Tensor loss = sum(mul(out, weights));
            if (corrupt) {
                // Test hook: a term the graph does not see, so the analytic
                // gradient is wrong by construction.
                double leak = p.at("init_conv/weight").value(0);
                loss = add_scalar(loss, 0.1 * leak);
            }
            return loss;
        };

        GradReport report = finite_diff_grad_check(f, params, 1e-6);
        std::fputs(report.to_string().c_str(), stdout);
        if (report.max_rel_error < 1e-4) {
            std::printf("gradcheck passed (max_rel_error %.3e < 1e-4)\n", report.max_rel_error);
            return kExitOk;
        }
        std::printf("gradcheck FAILED (max_rel_error %.3e >= 1e-4)\n", report.max_rel_error);
        return kExitGradcheck;
    } catch (const std::exception& e) {
        return runtime_fail(e);
    }
}

int cmd_inspect(const InspectArgs& args) {
    try {
        Checkpoint ckpt = load_checkpoint(args.checkpoint);
        const StoicConfig& c = ckpt.config;
        std::printf("checkpoint      %s\n", args.checkpoint.c_str());
        std::printf("version         %u\n", ckpt.version);
        std::printf("step            %llu\n", static_cast<unsigned long long>(ckpt.step));
        std::printf("model           stride=%s %dx%dx%d L=%d N=%d heads=%d mlp_ratio=%g\n",
                    to_string(c.stride), c.channels, c.height, c.width, c.embed_dim, c.num_blocks,
                    c.heads, c.mlp_ratio);
        std::printf("conditioning    time=%s context=%s\n", to_string(c.time_concat),
                    c.context ? (std::to_string(c.context->num_tokens) + "x" +
                                 std::to_string(c.context->token_dim))
                                    .c_str()
                              : "none");
        std::printf("decoder         reduce=%s conv=%s\n", to_string(c.decoder_reduce),
                    to_string(c.decoder_conv));
        std::printf("schedule        T=%d beta=[%g,%g] sde_beta=[%g,%g]\n", ckpt.schedule.T,
                    ckpt.schedule.beta_start, ckpt.schedule.beta_end, ckpt.schedule.sde_beta_min,
                    ckpt.schedule.sde_beta_max);
        std::printf("optimizer state %s\n", ckpt.has_optimizer ? "present" : "absent");
        std::printf("parameters      %lld scalars in %zu tensors\n",
                    static_cast<long long>(ckpt.params.total_scalars()), ckpt.params.size());
        for (const auto& [path, tensor] : ckpt.params)
            std::printf("  %-32s %s %s\n", path.c_str(), shape_str(tensor.shape()).c_str(),
                        dtype_name(tensor.dtype()));
        return kExitOk;
    } catch (const std::exception& e) {
        return runtime_fail(e);
    }
}

}  // namespace stoic::cli
