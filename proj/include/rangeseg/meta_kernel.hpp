#ifndef RANGESEG_META_KERNEL_HPP
#define RANGESEG_META_KERNEL_HPP

#include <cstdint>
#include <vector>

#include "rangeseg/tensor_ops.hpp"

namespace rangeseg {

// 5x5 sliding window, row-major top-left to bottom-right. The aggregator is
// order-sensitive, so this order is part of the operator definition.
inline constexpr int kMetaWindow = 5;
inline constexpr int kMetaNeighbors = kMetaWindow * kMetaWindow;

// Dynamic-weight operator parameters. The shared MLP maps the relative
// vector (dr, dx, dy, dz) of each neighbor to a per-channel weight vector;
// a 1x1 convolution over the 25 concatenated modulated vectors produces the
// output features.
struct MetaKernelParams {
  DensePerceptron weight_mlp; // input 4 -> ... -> value_channels
  int value_channels = 0;
  int out_channels = 0;
  std::vector<double> agg_weight; // out_channels x (25 * value_channels)
  std::vector<double> agg_bias;   // out_channels

  void validate() const;
  std::size_t parameter_count() const;
};

struct MetaKernelInput {
  int height = 0;
  int width = 0;
  std::vector<float> geometry;    // 4 x H x W: r, x, y, z per pixel
  std::vector<float> values;      // value_channels x H x W
  std::vector<std::uint8_t> mask; // H x W
};

// Gradients of sum-style upstream losses with respect to every parameter and
// to the value channels (geometry is treated as a constant input).
struct MetaKernelGrad {
  std::vector<std::vector<double>> mlp_weight; // per layer, same shapes as params
  std::vector<std::vector<double>> mlp_bias;
  std::vector<double> agg_weight;
  std::vector<double> agg_bias;
  std::vector<double> values; // value_channels x H x W
};

FeatureMap meta_kernel_forward(const MetaKernelInput& input,
                               const MetaKernelParams& params);

// Sum of all forward outputs computed without the float32 output rounding;
// the objective used by the finite-difference gradient checks.
double meta_kernel_forward_sum(const MetaKernelInput& input,
                               const MetaKernelParams& params);

MetaKernelGrad meta_kernel_backward(const MetaKernelInput& input,
                                    const MetaKernelParams& params,
                                    const FeatureMap& upstream);

// Canonical parameter vector order: per MLP layer (weight row-major, bias),
// then aggregator weight, then aggregator bias. Used by the gradient checks
// and the checkpoint writer.
std::vector<double> flatten_params(const MetaKernelParams& params);
void unflatten_params(MetaKernelParams& params, std::span<const double> flat);
std::vector<double> flatten_grad(const MetaKernelGrad& grad);

// Default architecture: 2-layer MLP 4 -> hidden -> value_channels with relu
// then no activation, seeded uniform init.
MetaKernelParams make_meta_kernel_params(int value_channels, int mlp_hidden,
                                         int out_channels, SplitMix64& rng);

} // namespace rangeseg

#endif // RANGESEG_META_KERNEL_HPP
