#include "stoic/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "stoic/rng.hpp"

namespace stoic {

Dataset load_cifar10_batch(const std::string& path) {
    constexpr int64_t kRecord = 3073;  // label + 3 * 32 * 32
    constexpr int64_t kPixels = 3072;
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path);
    int64_t bytes = static_cast<int64_t>(in.tellg());
    if (bytes == 0) throw IoError(path + ": empty file");
    if (bytes % kRecord != 0)
        throw IoError(path + ": length " + std::to_string(bytes) +
                      " is not a multiple of the 3073-byte record size");
    in.seekg(0);
    int64_t n = bytes / kRecord;

    Dataset ds;
    ds.name = path;
    ds.images = Tensor::zeros({n, 3, 32, 32}, DType::f32);
    auto img = ds.images.mutable_data<float>();
    std::vector<unsigned char> record(static_cast<size_t>(kRecord));
    for (int64_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(record.data()), kRecord))
            throw IoError(path + ": short read");
        // record[0] is the label; pixels follow channel-planar. The mapping
        // (b - 127.5)/127.5 hits -1 and +1 exactly at the byte endpoints.
        for (int64_t p = 0; p < kPixels; ++p)
            img[i * kPixels + p] =
                (static_cast<float>(record[static_cast<size_t>(1 + p)]) - 127.5f) / 127.5f;
    }
    return ds;
}

Tensor toy_context(int mode, int token_dim) {
    constexpr int kTokens = 77;
    if (mode < 0 || mode >= token_dim) throw ValueError("toy_context: mode out of range");
    Tensor ctx = Tensor::zeros({kTokens, token_dim}, DType::f32);
    auto d = ctx.mutable_data<float>();
    for (int t = 0; t < kTokens; ++t) d[static_cast<size_t>(t * token_dim + mode)] = 1.0f;
    return ctx;
}

Dataset gen_toy_dataset(ToyKind kind, int64_t n, std::array<int, 3> dims, uint64_t seed,
                        const ToyOptions& opts) {
    if (n < 1) throw ValueError("gen_toy_dataset: n must be >= 1");
    auto [c, h, w] = dims;
    if (c < 1 || h < 1 || w < 1) throw ValueError("gen_toy_dataset: bad dims");
    if (opts.with_contexts && opts.token_dim < 2)
        throw ValueError("gen_toy_dataset: contexts need token_dim >= 2");

    Dataset ds;
    ds.name = kind == ToyKind::two_blobs ? "two_blobs" : "checker";
    ds.images = Tensor::zeros({n, c, h, w}, DType::f32);
    auto img = ds.images.mutable_data<float>();
    Tensor contexts;
    float* ctx = nullptr;
    constexpr int kTokens = 77;
    if (opts.with_contexts) {
        contexts = Tensor::zeros({n, kTokens, opts.token_dim}, DType::f32);
        ctx = contexts.mutable_data<float>().data();
    }

    Rng rng(mix_seed(seed, 0x70790ull));
    int64_t per = static_cast<int64_t>(c) * h * w;
    for (int64_t i = 0; i < n; ++i) {
        int mode = rng.uniform() < 0.5 ? 0 : 1;
        float* px = img.data() + i * per;
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    float base;
                    if (kind == ToyKind::two_blobs) {
                        base = mode == 0 ? 0.5f : -0.5f;
                    } else {
                        int block = ((y / 2) + (x / 2)) % 2;
                        base = (block ^ mode) ? 0.5f : -0.5f;
                    }
                    float v = base + static_cast<float>(rng.normal() * opts.noise_std);
                    v = std::clamp(v, -1.0f, 1.0f);
                    px[(static_cast<int64_t>(ch) * h + y) * w + x] = v;
                }
        if (ctx) {
            for (int t = 0; t < kTokens; ++t)
                ctx[(i * kTokens + t) * opts.token_dim + mode] = 1.0f;
        }
    }
    if (opts.with_contexts) ds.contexts = contexts;
    return ds;
}

void write_image(const Tensor& img, const std::string& path) {
    if (img.rank() != 3 || (img.size(0) != 1 && img.size(0) != 3))
        throw ShapeError("write_image: expected [C,H,W] with C in {1,3}, got " +
                         shape_str(img.shape()));
    int64_t c = img.size(0), h = img.size(1), w = img.size(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    char header[64];
    int len = std::snprintf(header, sizeof(header), "P6\n%lld %lld\n255\n",
                            static_cast<long long>(w), static_cast<long long>(h));
    out.write(header, len);
    auto byte_of = [&](int64_t ch, int64_t y, int64_t x) {
        double v = img.value((ch * h + y) * w + x);
        long b = std::lround((v + 1.0) / 2.0 * 255.0);
        return static_cast<unsigned char>(std::clamp(b, 0L, 255L));
    };
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ch = 0; ch < 3; ++ch)
                row[static_cast<size_t>(x * 3 + ch)] = byte_of(c == 1 ? 0 : ch, y, x);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out.good()) throw IoError("write failed for " + path);
}

}  // namespace stoic
