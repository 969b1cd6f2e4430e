#ifndef RANGESEG_TENSOR_OPS_HPP
#define RANGESEG_TENSOR_OPS_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rangeseg/errors.hpp"
#include "rangeseg/rng.hpp"

namespace rangeseg {

// Dense C x H x W tensor, channel-major. Storage is float32; every kernel
// accumulates in float64 with a fixed order per output cell.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  float at(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
  float& at(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
  std::size_t size() const { return data.size(); }
};

// Convolution weights: Cout x Cin x kh x kw plus per-output bias.
struct Conv2d {
  int out_channels = 0;
  int in_channels = 0;
  int kh = 0;
  int kw = 0;
  std::vector<float> weight; // out * in * kh * kw
  std::vector<float> bias;   // out

  float w(int oc, int ic, int i, int j) const {
    return weight[((static_cast<std::size_t>(oc) * in_channels + ic) * kh + i) * kw + j];
  }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

// Cross-correlation (no kernel flip) with zero padding.
// Output H' = floor((H + 2*padding - dilation*(kh-1) - 1) / stride) + 1.
FeatureMap conv2d(const FeatureMap& input, const Conv2d& conv, int stride = 1,
                  int padding = 0, int dilation = 1);

// Sliding-window maximum; cells outside the image contribute pad_value.
FeatureMap max_pool2d(const FeatureMap& input, int window, int stride,
                      int padding, float pad_value);

// Nearest-neighbor upsampling by an integer factor.
FeatureMap upsample_nearest(const FeatureMap& input, int factor);

FeatureMap relu(FeatureMap input);

// Per-pixel softmax across channels, max-subtracted for stability.
FeatureMap softmax_channels(const FeatureMap& input);

enum class Activation { None, Relu, Sigmoid };

struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weight; // out x in, row-major
  std::vector<double> bias;   // out
  Activation activation = Activation::None;
};

// Small fully connected network over vectors; weights are double so the
// finite-difference gradient checks see a smooth objective.
struct DensePerceptron {
  std::vector<DenseLayer> layers;

  void validate() const; // dimension chaining
};

std::vector<double> perceptron_forward(const DensePerceptron& p,
                                       std::span<const double> x);

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
std::vector<double>
finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                 std::span<const double> x, double eps);

// Seeded uniform init in [-limit, limit] with limit = sqrt(1 / fan_in).
Conv2d make_conv2d(int out_channels, int in_channels, int kh, int kw,
                   SplitMix64& rng);
DenseLayer make_dense_layer(int in_dim, int out_dim, Activation act,
                            SplitMix64& rng);

} // namespace rangeseg

#endif // RANGESEG_TENSOR_OPS_HPP
