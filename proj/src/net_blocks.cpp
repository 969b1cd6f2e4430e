#include "rangeseg/net_blocks.hpp"

#include <cmath>
#include <limits>

namespace rangeseg {

FeatureMap context_module_forward(const FeatureMap& range_channel,
                                  const ContextParams& params) {
  if (range_channel.channels != 1)
    throw ShapeError("context module: input must be exactly the range channel");
  FeatureMap h = relu(conv2d(range_channel, params.conv1, 1, 1, 1));
  return conv2d(h, params.conv2, 1, 2, 2);
}

FeatureMap attention_fusion(const FeatureMap& multi_scale,
                            const FeatureMap& range_ctx,
                            const AttentionParams& params) {
  if (multi_scale.height != range_ctx.height || multi_scale.width != range_ctx.width)
    throw ShapeError("attention fusion: spatial dimensions differ");

  FeatureMap gate = conv2d(range_ctx, params.gate, 1, 0, 1);
  FeatureMap projected = conv2d(range_ctx, params.proj, 1, 0, 1);
  if (gate.channels != multi_scale.channels)
    throw ShapeError("attention fusion: gate channels do not match multi-scale");

  FeatureMap out(multi_scale.channels, multi_scale.height, multi_scale.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double g = 1.0 / (1.0 + std::exp(-static_cast<double>(gate.data[i])));
    out.data[i] = static_cast<float>(
        static_cast<double>(multi_scale.data[i]) * g + projected.data[i]);
  }
  return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("concat: spatial dimensions differ");
  FeatureMap out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

FeatureMap fam_forward(const FeatureMap& meta, const FeatureMap& multi_scale,
                       const FeatureMap& range_channel, const FamParams& params) {
  const FeatureMap range_ctx = context_module_forward(range_channel, params.context);
  const FeatureMap range_guided = attention_fusion(multi_scale, range_ctx,
                                                   params.attention);
  const FeatureMap cat = concat_channels(meta, range_guided);
  FeatureMap fused = conv2d(cat, params.fuse, 1, 1, 1);

  // Residual connection; 1x1 projection bridges the channel difference.
  const bool need_proj = params.fuse.out_channels != cat.channels;
  const FeatureMap shortcut =
      need_proj ? conv2d(cat, params.fuse_proj, 1, 0, 1) : cat;
  for (std::size_t i = 0; i < fused.data.size(); ++i)
    fused.data[i] += shortcut.data[i];

  return conv2d(fused, params.head, 1, 0, 1);
}

FeatureMap micro_backbone_forward(const FeatureMap& meta,
                                  const BackboneParams& params) {
  if (meta.height % 16 != 0 || meta.width % 16 != 0)
    throw ShapeError("backbone: spatial dimensions must be divisible by 16, got " +
                     std::to_string(meta.height) + "x" + std::to_string(meta.width));

  std::array<FeatureMap, 4> skips;
  FeatureMap cur = meta;
  for (int stage = 0; stage < 4; ++stage) {
    skips[stage] = relu(conv2d(cur, params.encoder[stage], 1, 1, 1));
    cur = max_pool2d(skips[stage], 2, 2, 0,
                     -std::numeric_limits<float>::infinity());
  }
  for (int stage = 3; stage >= 0; --stage) {
    FeatureMap up = upsample_nearest(cur, 2);
    FeatureMap cat = concat_channels(up, skips[stage]);
    cur = relu(conv2d(cat, params.decoder[static_cast<std::size_t>(3 - stage)],
                      1, 1, 1));
  }
  return cur;
}

FeatureMap normalize_rri(const RangeResidualImage& rri, const NormalizeConfig& norm) {
  FeatureMap out(9, rri.height, rri.width);
  const std::size_t plane = static_cast<std::size_t>(rri.height) * rri.width;
  for (int c = 0; c < 9; ++c) {
    const float* src = rri.channel(c);
    float* dst = out.data.data() + static_cast<std::size_t>(c) * plane;
    if (c <= kChRemission) {
      const double mean = norm.mean[static_cast<std::size_t>(c)];
      const double inv_std = 1.0 / norm.stddev[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i)
        dst[i] = static_cast<float>((src[i] - mean) * inv_std);
    } else {
      std::copy(src, src + plane, dst);
    }
  }
  return out;
}

MetaKernelInput make_meta_kernel_input(const RangeResidualImage& rri,
                                       const NormalizeConfig& norm) {
  MetaKernelInput input;
  input.height = rri.height;
  input.width = rri.width;
  const std::size_t plane = static_cast<std::size_t>(rri.height) * rri.width;

  input.geometry.assign(rri.channels.begin(),
                        rri.channels.begin() + 4 * plane); // raw r, x, y, z
  input.values = normalize_rri(rri, norm).data;
  input.mask.resize(plane);
  const float* mask = rri.channel(kChMask);
  for (std::size_t i = 0; i < plane; ++i)
    input.mask[i] = mask[i] != 0.0f ? 1 : 0;
  return input;
}

NetworkParams init_network_params(const NetConfig& cfg, std::uint64_t seed) {
  SplitMix64 rng(seed);
  NetworkParams p;
  p.seed = seed;
  p.meta = make_meta_kernel_params(cfg.meta_value_channels, cfg.meta_mlp_hidden,
                                   cfg.meta_out_channels, rng);

  int in_c = cfg.meta_out_channels;
  for (int stage = 0; stage < 4; ++stage) {
    p.backbone.encoder[stage] =
        make_conv2d(cfg.encoder_channels[static_cast<std::size_t>(stage)], in_c, 3, 3, rng);
    in_c = cfg.encoder_channels[static_cast<std::size_t>(stage)];
  }
  // Decoder stage s consumes upsampled features concatenated with the skip
  // at the same resolution.
  int up_c = cfg.encoder_channels[3];
  const std::array<int, 4> dec_out = {cfg.encoder_channels[2], cfg.encoder_channels[1],
                                      cfg.encoder_channels[0], cfg.backbone_out_channels};
  for (int stage = 0; stage < 4; ++stage) {
    const int skip_c = cfg.encoder_channels[static_cast<std::size_t>(3 - stage)];
    p.backbone.decoder[static_cast<std::size_t>(stage)] =
        make_conv2d(dec_out[static_cast<std::size_t>(stage)], up_c + skip_c, 3, 3, rng);
    up_c = dec_out[static_cast<std::size_t>(stage)];
  }

  p.fam.context.conv1 = make_conv2d(cfg.context_channels, 1, 3, 3, rng);
  p.fam.context.conv2 = make_conv2d(cfg.context_channels, cfg.context_channels, 3, 3, rng);
  p.fam.attention.gate =
      make_conv2d(cfg.backbone_out_channels, cfg.context_channels, 1, 1, rng);
  p.fam.attention.proj =
      make_conv2d(cfg.backbone_out_channels, cfg.context_channels, 1, 1, rng);
  const int cat_c = cfg.meta_out_channels + cfg.backbone_out_channels;
  p.fam.fuse = make_conv2d(cfg.fam_channels, cat_c, 3, 3, rng);
  p.fam.fuse_proj = make_conv2d(cfg.fam_channels, cat_c, 1, 1, rng);
  p.fam.head = make_conv2d(cfg.num_classes, cfg.fam_channels, 1, 1, rng);
  return p;
}

FeatureMap network_forward(const RangeResidualImage& rri,
                           const NetworkParams& params,
                           const NormalizeConfig& norm) {
  const MetaKernelInput meta_input = make_meta_kernel_input(rri, norm);
  const FeatureMap meta = meta_kernel_forward(meta_input, params.meta);
  const FeatureMap multi_scale = micro_backbone_forward(meta, params.backbone);

  FeatureMap range_channel(1, rri.height, rri.width);
  const std::size_t plane = static_cast<std::size_t>(rri.height) * rri.width;
  std::copy(meta_input.values.begin(), meta_input.values.begin() + plane,
            range_channel.data.begin());

  FeatureMap logits = fam_forward(meta, multi_scale, range_channel, params.fam);
  for (float v : logits.data)
    if (!std::isfinite(v))
      throw NumericError("network_forward: non-finite logit");
  return logits;
}

} // namespace rangeseg
