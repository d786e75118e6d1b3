#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace stoic {

struct ConfigError : std::runtime_error {
    int line = 0;  // 1-based source line for file-backed configs, 0 otherwise
    explicit ConfigError(const std::string& msg, int line_no = 0)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
};

enum class StrideVariant { s1, s2 };
enum class TimeConcat { before_conv, after_conv };
enum class DecoderReduce { linear, slice };
enum class DecoderConv { conv, conv_transpose };
enum class InitialNonlinearity { gelu, none };
enum class InitialNorm { none, batch_norm };

/// Conditioning input: a fixed 77-token context (CLIP text-embedding layout)
/// of token_dim features per token.
struct ContextSpec {
    int num_tokens = 77;
    int token_dim = 8;
};

/// Output spatial extents of a square-kernel convolution:
/// H_o = floor((H + 2P - K)/S) + 1, likewise W_o. Throws if an extent
/// would be smaller than 1.
std::pair<int, int> conv_out_dims(int h, int w, int k, int s, int p);

/// Full architecture description. Shapes of every parameter tensor are a
/// pure function of this struct.
struct StoicConfig {
    StrideVariant stride = StrideVariant::s2;
    int channels = 3;
    int height = 32;
    int width = 32;
    int embed_dim = 512;   // L
    int num_blocks = 12;   // N
    int heads = 8;
    double mlp_ratio = 4.0;
    TimeConcat time_concat = TimeConcat::after_conv;
    std::optional<ContextSpec> context;
    DecoderReduce decoder_reduce = DecoderReduce::slice;
    DecoderConv decoder_conv = DecoderConv::conv_transpose;
    InitialNonlinearity initial_nonlinearity = InitialNonlinearity::gelu;
    InitialNorm initial_norm = InitialNorm::none;

    // Initial-conv geometry is fixed per stride variant:
    // s1 -> {K=3,S=1,P=1} (dims preserved), s2 -> {K=2,S=2,P=0} (dims halved).
    int kernel() const { return stride == StrideVariant::s1 ? 3 : 2; }
    int stride_px() const { return stride == StrideVariant::s1 ? 1 : 2; }
    int padding() const { return stride == StrideVariant::s1 ? 1 : 0; }

    std::pair<int, int> conv_out_hw() const {
        return conv_out_dims(height, width, kernel(), stride_px(), padding());
    }
    int64_t seq_len() const {
        auto [ho, wo] = conv_out_hw();
        return static_cast<int64_t>(ho) * wo;
    }
    /// Input channels of the initial conv (image channels plus the time
    /// plane in before_conv mode).
    int initial_in_channels() const {
        return channels + (time_concat == TimeConcat::before_conv ? 1 : 0);
    }
    int mlp_hidden() const { return static_cast<int>(mlp_ratio * embed_dim); }

    static int default_heads(int embed_dim) { return embed_dim >= 64 ? embed_dim / 64 : 1; }

    /// Throws ConfigError on any violated structural invariant.
    void validate() const;
};

/// Sinusoidal time-feature width ahead of the learned time projection.
constexpr int kTimeFeatureDim = 128;

const char* to_string(StrideVariant v);
const char* to_string(TimeConcat v);
const char* to_string(DecoderReduce v);
const char* to_string(DecoderConv v);
const char* to_string(InitialNonlinearity v);
const char* to_string(InitialNorm v);

}  // namespace stoic
