#pragma once

#include <optional>
#include <vector>

#include "stoic/config.hpp"
#include "stoic/ops.hpp"
#include "stoic/params.hpp"

namespace stoic {

enum class ParamInit { trunc_normal, zeros, ones };

struct ParamSpec {
    std::string path;
    Shape shape;
    ParamInit init;
};

/// Canonical parameter table for a configuration: every tensor path, its
/// shape, and its initialization rule, in lexicographic path order.
std::vector<ParamSpec> parameter_specs(const StoicConfig& config);

/// Materializes the parameter table.
///
/// Linear/conv weights draw from a truncated normal (std 0.02, cut at 2
/// sigma), biases start at zero, norm gains at one, and the final decoder
/// conv is zero-initialized so an untrained model predicts zero noise. Each
/// tensor uses an RNG stream derived from (seed, path), so the result is
/// independent of construction order.
ParamStore build_params(const StoicConfig& config, uint64_t seed, DType dt = DType::f32);

/// Canonical block path, zero-padded ("block00/...").
std::string block_path(int index);

/// Sinusoidal features of integer timesteps, shape [B, kTimeFeatureDim].
Tensor time_features(const std::vector<int>& t, DType dt);

/// Learned projection of the time features to a single spatial plane:
/// [B,1,H,W] in before_conv mode, [B,1,Ho,Wo] in after_conv mode.
Tensor time_embed(const std::vector<int>& t, const ParamStore& params, const StoicConfig& config,
                  DType dt = DType::f32);

/// Strided initial convolution followed by the configured norm/nonlinearity,
/// flattened row-major into a [B, T, L] sequence. No tokenization and no
/// positional embedding: spatial structure enters only through this conv.
Tensor initial_conv(const Tensor& x, const ParamStore& params, const StoicConfig& config);

/// Projects each context token to an H_o*W_o plane (shared linear map),
/// concatenates the planes onto the sequence features (L -> L + tokens) and
/// maps back to width L with a pointwise linear layer.
Tensor apply_context(const Tensor& features, const Tensor& context, const ParamStore& params,
                     const StoicConfig& config);

/// Pre-LN residual transformer block: x + MHA(LN(x)), then y + MLP(LN(y)).
/// Output shape equals input shape; all blocks share parameter shapes.
Tensor core_block(const Tensor& seq, const ParamStore& params, const StoicConfig& config,
                  int block_index);

/// All N core blocks in sequence (autograd path).
Tensor run_block_stack(const Tensor& seq, const ParamStore& params, const StoicConfig& config);

/// Forward-only block stack that reuses one set of fixed-size buffers across
/// all N blocks (constant activation memory). Element-wise identical to
/// run_block_stack.
Tensor run_block_stack_streaming(const Tensor& seq, const ParamStore& params,
                                 const StoicConfig& config);

/// LayerNorm, L -> C reduction (linear map or prefix slice), reshape to
/// [B,C,Ho,Wo], and the final spatial conv restoring [B,C,H,W].
Tensor decoder(const Tensor& seq, const ParamStore& params, const StoicConfig& config);

/// Noise prediction network: (time concat) -> initial conv -> (time/context
/// conditioning) -> N core blocks -> decoder. Output shape equals the input
/// image shape for both stride variants.
Tensor stoic_forward(const Tensor& x_t, const std::vector<int>& t,
                     const std::optional<Tensor>& context, const ParamStore& params,
                     const StoicConfig& config);

}  // namespace stoic
