#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "stoic/tensor.hpp"

namespace stoic {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training corpus: images scaled to [-1, 1], optionally paired with
/// per-image conditioning contexts.
struct Dataset {
    Tensor images;                   // [N,C,H,W], f32 in [-1,1]
    std::optional<Tensor> contexts;  // [N,77,token_dim], aligned with images
    std::string name;

    int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

/// Parses one CIFAR-10 binary batch: 3073-byte records (1 label byte +
/// 3*1024 channel-planar pixels). Labels are discarded; pixels map linearly
/// from [0,255] to [-1,1]. Rejects empty files and lengths that are not a
/// multiple of the record size.
Dataset load_cifar10_batch(const std::string& path);

enum class ToyKind { two_blobs, checker };

struct ToyOptions {
    double noise_std = 0.1;
    bool with_contexts = false;  // synthetic 77-token one-hot contexts per mode
    int token_dim = 8;
};

/// Synthetic two-mode datasets for desk-scale training runs.
/// two_blobs: constant +0.5 / -0.5 planes plus pixel noise, fair coin per
/// image; checker: 2x2-block checkerboards in two phases with the same
/// noise. Pixels are clipped to [-1,1]. Deterministic given the seed.
Dataset gen_toy_dataset(ToyKind kind, int64_t n, std::array<int, 3> dims, uint64_t seed,
                        const ToyOptions& opts = {});

/// Synthetic context matrix identifying a toy mode: every one of the 77
/// tokens is one-hot at index `mode`.
Tensor toy_context(int mode, int token_dim);

/// Writes a binary PPM (P6): header "P6\n<W> <H>\n255\n" followed by
/// row-major RGB byte triplets, bytes = round((v+1)/2*255) clamped to
/// [0,255]. Single-channel images are replicated to RGB. img is [C,H,W]
/// with C in {1,3}.
void write_image(const Tensor& img, const std::string& path);

}  // namespace stoic
