#include "stoic/model.hpp"

#include <cmath>
#include <cstdio>

#include "stoic/kernels.hpp"
#include "stoic/rng.hpp"

namespace stoic {

std::string block_path(int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "block%02d", index);
    return buf;
}

std::vector<ParamSpec> parameter_specs(const StoicConfig& c) {
    c.validate();
    std::vector<ParamSpec> specs;
    auto push = [&](std::string path, Shape shape, ParamInit init) {
        specs.push_back({std::move(path), std::move(shape), init});
    };
    int64_t l = c.embed_dim;
    int64_t t_seq = c.seq_len();
    auto [ho, wo] = c.conv_out_hw();
    (void)ho;
    (void)wo;

    for (int i = 0; i < c.num_blocks; ++i) {
        std::string p = block_path(i);
        push(p + "/attn/out_b", {l}, ParamInit::zeros);
        push(p + "/attn/out_w", {l, l}, ParamInit::trunc_normal);
        push(p + "/attn/qkv_b", {3 * l}, ParamInit::zeros);
        push(p + "/attn/qkv_w", {l, 3 * l}, ParamInit::trunc_normal);
        push(p + "/ln1/beta", {l}, ParamInit::zeros);
        push(p + "/ln1/gamma", {l}, ParamInit::ones);
        push(p + "/ln2/beta", {l}, ParamInit::zeros);
        push(p + "/ln2/gamma", {l}, ParamInit::ones);
        push(p + "/mlp/fc1_b", {c.mlp_hidden()}, ParamInit::zeros);
        push(p + "/mlp/fc1_w", {l, c.mlp_hidden()}, ParamInit::trunc_normal);
        push(p + "/mlp/fc2_b", {l}, ParamInit::zeros);
        push(p + "/mlp/fc2_w", {c.mlp_hidden(), l}, ParamInit::trunc_normal);
    }

    if (c.context) {
        push("context_embed/bias", {t_seq}, ParamInit::zeros);
        push("context_embed/weight", {c.context->token_dim, t_seq}, ParamInit::trunc_normal);
        push("context_proj/bias", {l}, ParamInit::zeros);
        push("context_proj/weight", {l + c.context->num_tokens, l}, ParamInit::trunc_normal);
    }

    int k_out = c.stride == StrideVariant::s1 ? 3 : 2;
    push("decoder/ln/beta", {l}, ParamInit::zeros);
    push("decoder/ln/gamma", {l}, ParamInit::ones);
    if (c.decoder_reduce == DecoderReduce::linear) {
        push("decoder/reduce/bias", {c.channels}, ParamInit::zeros);
        push("decoder/reduce/weight", {l, c.channels}, ParamInit::trunc_normal);
    }
    push("decoder/out_conv/bias", {c.channels}, ParamInit::zeros);
    push("decoder/out_conv/weight", {c.channels, c.channels, k_out, k_out}, ParamInit::zeros);

    push("init_conv/bias", {l}, ParamInit::zeros);
    push("init_conv/weight", {l, c.initial_in_channels(), c.kernel(), c.kernel()},
         ParamInit::trunc_normal);
    if (c.initial_norm == InitialNorm::batch_norm) {
        push("init_norm/beta", {l}, ParamInit::zeros);
        push("init_norm/gamma", {l}, ParamInit::ones);
    }

    int64_t time_plane = c.time_concat == TimeConcat::before_conv
                             ? static_cast<int64_t>(c.height) * c.width
                             : t_seq;
    push("time_embed/bias", {time_plane}, ParamInit::zeros);
    push("time_embed/weight", {kTimeFeatureDim, time_plane}, ParamInit::trunc_normal);
    if (c.time_concat == TimeConcat::after_conv) {
        push("time_proj/bias", {l}, ParamInit::zeros);
        push("time_proj/weight", {l + 1, l}, ParamInit::trunc_normal);
    }
    return specs;
}

namespace {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr double kInitStd = 0.02;

}  // namespace

ParamStore build_params(const StoicConfig& config, uint64_t seed, DType dt) {
    ParamStore store;
    for (const ParamSpec& spec : parameter_specs(config)) {
        Tensor t;
        switch (spec.init) {
            case ParamInit::zeros:
                t = Tensor::zeros(spec.shape, dt);
                break;
            case ParamInit::ones:
                t = Tensor::full(spec.shape, 1.0, dt);
                break;
            case ParamInit::trunc_normal: {
                t = Tensor::zeros(spec.shape, dt);
                Rng rng(mix_seed(seed, fnv1a64(spec.path)));
                int64_t n = t.numel();
                for (int64_t i = 0; i < n; ++i) t.set_value(i, rng.truncated_normal(kInitStd));
                break;
            }
        }
        store.insert(spec.path, std::move(t));
    }
    return store;
}

Tensor time_features(const std::vector<int>& t, DType dt) {
    constexpr int half = kTimeFeatureDim / 2;
    const double log_base = std::log(10000.0) / (half - 1);
    Tensor out = Tensor::zeros({static_cast<int64_t>(t.size()), kTimeFeatureDim}, dt);
    for (size_t b = 0; b < t.size(); ++b) {
        if (t[b] < 0) throw ValueError("time_features: negative timestep");
        for (int i = 0; i < half; ++i) {
            double angle = static_cast<double>(t[b]) * std::exp(-log_base * i);
            out.set_value(static_cast<int64_t>(b) * kTimeFeatureDim + i, std::sin(angle));
            out.set_value(static_cast<int64_t>(b) * kTimeFeatureDim + half + i, std::cos(angle));
        }
    }
    return out;
}

Tensor time_embed(const std::vector<int>& t, const ParamStore& params, const StoicConfig& config,
                  DType dt) {
    bool before = config.time_concat == TimeConcat::before_conv;
    int64_t h = before ? config.height : config.conv_out_hw().first;
    int64_t w = before ? config.width : config.conv_out_hw().second;
    Tensor feats = time_features(t, dt);
    Tensor plane = linear(feats, params.at("time_embed/weight"), params.at("time_embed/bias"));
    return reshape(plane, {static_cast<int64_t>(t.size()), 1, h, w});
}

Tensor initial_conv(const Tensor& x, const ParamStore& params, const StoicConfig& config) {
    Tensor y = conv2d(x, params.at("init_conv/weight"), params.at("init_conv/bias"),
                      config.stride_px(), config.padding());
    if (config.initial_norm == InitialNorm::batch_norm)
        y = batch_norm(y, params.at("init_norm/gamma"), params.at("init_norm/beta"));
    if (config.initial_nonlinearity == InitialNonlinearity::gelu) y = gelu(y);
    return nchw_to_seq(y);
}

Tensor apply_context(const Tensor& features, const Tensor& context, const ParamStore& params,
                     const StoicConfig& config) {
    if (!config.context) throw ConfigError("apply_context: configuration has no context");
    const ContextSpec& spec = *config.context;
    if (context.rank() != 3 || context.size(1) != spec.num_tokens ||
        context.size(2) != spec.token_dim)
        throw ShapeError("apply_context: context must be [B," + std::to_string(spec.num_tokens) +
                         "," + std::to_string(spec.token_dim) + "], got " +
                         shape_str(context.shape()));
    // One shared linear map token_dim -> T turns each token into a plane.
    Tensor planes = linear(context, params.at("context_embed/weight"),
                           params.at("context_embed/bias"));       // [B, tokens, T]
    Tensor plane_seq = transpose_last2(planes);                    // [B, T, tokens]
    Tensor widened = concat(features, plane_seq, 2);               // [B, T, L + tokens]
    return linear(widened, params.at("context_proj/weight"), params.at("context_proj/bias"));
}

Tensor core_block(const Tensor& seq, const ParamStore& params, const StoicConfig& config,
                  int block_index) {
    std::string p = block_path(block_index);
    Tensor normed = layer_norm(seq, params.at(p + "/ln1/gamma"), params.at(p + "/ln1/beta"));
    Tensor attn = multi_head_attention(normed, params.at(p + "/attn/qkv_w"),
                                       params.at(p + "/attn/qkv_b"), params.at(p + "/attn/out_w"),
                                       params.at(p + "/attn/out_b"), config.heads);
    Tensor mid = add(seq, attn);
    Tensor normed2 = layer_norm(mid, params.at(p + "/ln2/gamma"), params.at(p + "/ln2/beta"));
    Tensor ff = mlp(normed2, params.at(p + "/mlp/fc1_w"), params.at(p + "/mlp/fc1_b"),
                    params.at(p + "/mlp/fc2_w"), params.at(p + "/mlp/fc2_b"));
    return add(mid, ff);
}

Tensor run_block_stack(const Tensor& seq, const ParamStore& params, const StoicConfig& config) {
    Tensor cur = seq;
    for (int i = 0; i < config.num_blocks; ++i) cur = core_block(cur, params, config, i);
    return cur;
}

Tensor run_block_stack_streaming(const Tensor& seq, const ParamStore& params,
                                 const StoicConfig& config) {
    NoGradGuard ng;
    Tensor out = seq.detach().clone();
    dispatch(seq.dtype(), [&](auto tag) {
        using T = decltype(tag);
        int64_t batch = seq.size(0), tlen = seq.size(1), l = seq.size(2);
        int64_t rows = batch * tlen;
        int64_t hidden = config.mlp_hidden();

        // Fixed-size working set, reused by every block.
        std::vector<T> ln_buf(static_cast<size_t>(rows * l));
        std::vector<T> sub_buf(static_cast<size_t>(rows * l));
        std::vector<T> hid_buf(static_cast<size_t>(rows * hidden));
        std::vector<T> stats(static_cast<size_t>(2 * rows));
        kernels::MhaWorkspace<T> ws;

        T* cur = out.impl()->template data<T>();
        auto pdata = [&](const std::string& path) { return params.at(path).data<T>().data(); };

        for (int i = 0; i < config.num_blocks; ++i) {
            std::string p = block_path(i);
            kernels::layer_norm_forward(rows, l, cur, pdata(p + "/ln1/gamma"),
                                        pdata(p + "/ln1/beta"), static_cast<T>(1e-5),
                                        ln_buf.data(), stats.data(), stats.data() + rows);
            kernels::mha_forward(batch, tlen, l, config.heads, ln_buf.data(),
                                 pdata(p + "/attn/qkv_w"), pdata(p + "/attn/qkv_b"),
                                 pdata(p + "/attn/out_w"), pdata(p + "/attn/out_b"), sub_buf.data(),
                                 ws);
            for (int64_t j = 0; j < rows * l; ++j) cur[j] = cur[j] + sub_buf[j];

            kernels::layer_norm_forward(rows, l, cur, pdata(p + "/ln2/gamma"),
                                        pdata(p + "/ln2/beta"), static_cast<T>(1e-5),
                                        ln_buf.data(), stats.data(), stats.data() + rows);
            kernels::gemm_nn(rows, l, hidden, ln_buf.data(), pdata(p + "/mlp/fc1_w"),
                             hid_buf.data(), false);
            kernels::add_row_vector(rows, hidden, pdata(p + "/mlp/fc1_b"), hid_buf.data());
            kernels::gelu_forward(rows * hidden, hid_buf.data(), hid_buf.data());
            kernels::gemm_nn(rows, hidden, l, hid_buf.data(), pdata(p + "/mlp/fc2_w"),
                             sub_buf.data(), false);
            kernels::add_row_vector(rows, l, pdata(p + "/mlp/fc2_b"), sub_buf.data());
            for (int64_t j = 0; j < rows * l; ++j) cur[j] = cur[j] + sub_buf[j];
        }
    });
    return out;
}

Tensor decoder(const Tensor& seq, const ParamStore& params, const StoicConfig& config) {
    auto [ho, wo] = config.conv_out_hw();
    if (seq.rank() != 3 || seq.size(1) != static_cast<int64_t>(ho) * wo)
        throw ShapeError("decoder: sequence length does not match " + std::to_string(ho) + "x" +
                         std::to_string(wo));
    Tensor normed =
        layer_norm(seq, params.at("decoder/ln/gamma"), params.at("decoder/ln/beta"));
    Tensor reduced = config.decoder_reduce == DecoderReduce::linear
                         ? linear(normed, params.at("decoder/reduce/weight"),
                                  params.at("decoder/reduce/bias"))
                         : slice_prefix(normed, 2, config.channels);
    Tensor spatial = seq_to_nchw(reduced, ho, wo);
    const Tensor& w = params.at("decoder/out_conv/weight");
    const Tensor& b = params.at("decoder/out_conv/bias");
    if (config.decoder_conv == DecoderConv::conv) return conv2d(spatial, w, b, 1, 1);
    // s1: dimension-preserving transposed conv (K=3,S=1,P=1); s2: x2 upsample.
    return config.stride == StrideVariant::s1 ? conv_transpose2d(spatial, w, b, 1, 1)
                                              : conv_transpose2d(spatial, w, b, 2, 0);
}

Tensor stoic_forward(const Tensor& x_t, const std::vector<int>& t,
                     const std::optional<Tensor>& context, const ParamStore& params,
                     const StoicConfig& config) {
    if (x_t.rank() != 4) throw ShapeError("stoic_forward: expected [B,C,H,W] input");
    if (x_t.size(1) != config.channels || x_t.size(2) != config.height ||
        x_t.size(3) != config.width)
        throw ShapeError("stoic_forward: input " + shape_str(x_t.shape()) +
                         " does not match configuration");
    if (x_t.size(0) != static_cast<int64_t>(t.size()))
        throw ShapeError("stoic_forward: one timestep per batch element required");
    if (config.context.has_value() != context.has_value())
        throw ConfigError("stoic_forward: context must be present iff configured");

    Tensor x = x_t;
    if (config.time_concat == TimeConcat::before_conv)
        x = concat(x, time_embed(t, params, config, x.dtype()), 1);

    Tensor seq = initial_conv(x, params, config);

    if (config.time_concat == TimeConcat::after_conv) {
        Tensor plane = time_embed(t, params, config, x.dtype());
        Tensor plane_seq = nchw_to_seq(plane);  // [B, T, 1]
        seq = linear(concat(seq, plane_seq, 2), params.at("time_proj/weight"),
                     params.at("time_proj/bias"));
    }
    if (context) seq = apply_context(seq, *context, params, config);

    seq = run_block_stack(seq, params, config);
    return decoder(seq, params, config);
}

}  // namespace stoic
