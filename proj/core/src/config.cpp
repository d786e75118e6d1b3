#include "stoic/config.hpp"

namespace stoic {

std::pair<int, int> conv_out_dims(int h, int w, int k, int s, int p) {
    if (k < 1 || s < 1 || p < 0) throw ConfigError("conv_out_dims: bad geometry");
    if (h + 2 * p < k || w + 2 * p < k)
        throw ConfigError("conv_out_dims: padded extent smaller than kernel");
    int ho = (h + 2 * p - k) / s + 1;
    int wo = (w + 2 * p - k) / s + 1;
    if (ho < 1 || wo < 1) throw ConfigError("conv_out_dims: output extent smaller than 1");
    return {ho, wo};
}

void StoicConfig::validate() const {
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (height < 1 || width < 1) throw ConfigError("image extents must be >= 1");
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
    if (mlp_ratio <= 0) throw ConfigError("mlp_ratio must be positive");
    if (mlp_hidden() < 1) throw ConfigError("mlp hidden width must be >= 1");
    if (stride == StrideVariant::s2 && (height % 2 != 0 || width % 2 != 0))
        throw ConfigError("stride-2 variant requires even image extents");
    if (decoder_reduce == DecoderReduce::slice && channels > embed_dim)
        throw ConfigError("slice reduce requires channels <= embed_dim");
    // A dimension-preserving Conv2D cannot restore resolution after a
    // stride-2 initial conv; only the transposed variant upsamples.
    if (stride == StrideVariant::s2 && decoder_conv == DecoderConv::conv)
        throw ConfigError("decoder conv variant is only available for stride 1");
    if (context) {
        if (context->num_tokens != 77)
            throw ConfigError("context expects the fixed 77-token layout");
        if (context->token_dim < 1) throw ConfigError("context token_dim must be >= 1");
    }
    conv_out_hw();  // throws if degenerate
}

const char* to_string(StrideVariant v) { return v == StrideVariant::s1 ? "s1" : "s2"; }
const char* to_string(TimeConcat v) {
    return v == TimeConcat::before_conv ? "before_conv" : "after_conv";
}
const char* to_string(DecoderReduce v) { return v == DecoderReduce::linear ? "linear" : "slice"; }
const char* to_string(DecoderConv v) {
    return v == DecoderConv::conv ? "conv" : "conv_transpose";
}
const char* to_string(InitialNonlinearity v) {
    return v == InitialNonlinearity::gelu ? "gelu" : "none";
}
const char* to_string(InitialNorm v) { return v == InitialNorm::none ? "none" : "batch_norm"; }

}  // namespace stoic
