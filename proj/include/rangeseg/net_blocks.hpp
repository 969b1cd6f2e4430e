#ifndef RANGESEG_NET_BLOCKS_HPP
#define RANGESEG_NET_BLOCKS_HPP

#include <array>
#include <cstdint>

#include "rangeseg/meta_kernel.hpp"
#include "rangeseg/range_view.hpp"
#include "rangeseg/tensor_ops.hpp"

namespace rangeseg {

// Per-channel normalization of the five geometry channels (r, x, y, z, e);
// residual and mask channels pass through unchanged.
struct NormalizeConfig {
  std::array<double, 5> mean = {0, 0, 0, 0, 0};
  std::array<double, 5> stddev = {1, 1, 1, 1, 1};

  bool operator==(const NormalizeConfig&) const = default;
};

// Channel widths of the forward-only network, desk scale by default.
struct NetConfig {
  int num_classes = 19;
  int meta_value_channels = 9; // raw 9-channel input into the meta kernel
  int meta_mlp_hidden = 16;
  int meta_out_channels = 32;
  std::array<int, 4> encoder_channels = {32, 64, 128, 256};
  int backbone_out_channels = 32;
  int context_channels = 32;
  int fam_channels = 32;

  bool operator==(const NetConfig&) const = default;
};

// Two stacked 3x3 convolutions over the range channel, dilation 1 then 2,
// relu between; spatial size preserved.
struct ContextParams {
  Conv2d conv1; // 1 -> Cctx, dilation 1, padding 1
  Conv2d conv2; // Cctx -> Cctx, dilation 2, padding 2
};

// gate = sigmoid(conv1x1(range_ctx)); out = multi_scale .* gate + proj(range_ctx).
struct AttentionParams {
  Conv2d gate; // Cctx -> Cms, 1x1
  Conv2d proj; // Cctx -> Cms, 1x1
};

struct FamParams {
  ContextParams context;
  AttentionParams attention;
  Conv2d fuse;      // (Cmeta + Cms) -> Cfam, 3x3, padding 1
  Conv2d fuse_proj; // (Cmeta + Cms) -> Cfam, 1x1 residual projection
  Conv2d head;      // Cfam -> num_classes, 1x1
};

// Encoder: 4 stages of (3x3 conv, relu, 2x2 max-pool stride 2).
// Decoder: 4 stages of (nearest 2x upsample, concat encoder skip, 3x3 conv,
// relu). Requires H and W divisible by 16.
struct BackboneParams {
  std::array<Conv2d, 4> encoder;
  std::array<Conv2d, 4> decoder;
};

struct NetworkParams {
  MetaKernelParams meta;
  BackboneParams backbone;
  FamParams fam;
  std::uint64_t seed = 0;
};

FeatureMap context_module_forward(const FeatureMap& range_channel,
                                  const ContextParams& params);

FeatureMap attention_fusion(const FeatureMap& multi_scale,
                            const FeatureMap& range_ctx,
                            const AttentionParams& params);

FeatureMap fam_forward(const FeatureMap& meta, const FeatureMap& multi_scale,
                       const FeatureMap& range_channel, const FamParams& params);

FeatureMap micro_backbone_forward(const FeatureMap& meta,
                                  const BackboneParams& params);

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

// Normalized 9 x H x W network input from an assembled residual image.
FeatureMap normalize_rri(const RangeResidualImage& rri, const NormalizeConfig& norm);

// Geometry (raw), values (normalized) and mask views for the meta kernel.
MetaKernelInput make_meta_kernel_input(const RangeResidualImage& rri,
                                       const NormalizeConfig& norm);

NetworkParams init_network_params(const NetConfig& cfg, std::uint64_t seed);

// meta -> backbone -> FAM; returns num_classes x H x W logits. Throws
// NumericError if any logit is non-finite.
FeatureMap network_forward(const RangeResidualImage& rri,
                           const NetworkParams& params,
                           const NormalizeConfig& norm);

} // namespace rangeseg

#endif // RANGESEG_NET_BLOCKS_HPP
