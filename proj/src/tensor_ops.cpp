#include "rangeseg/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

namespace rangeseg {

FeatureMap conv2d(const FeatureMap& input, const Conv2d& conv, int stride,
                  int padding, int dilation) {
  if (conv.in_channels != input.channels)
    throw ShapeError("conv2d: kernel expects " + std::to_string(conv.in_channels) +
                     " input channels, got " + std::to_string(input.channels));
  if (stride < 1 || padding < 0 || dilation < 1)
    throw ShapeError("conv2d: invalid stride/padding/dilation");

  const int eff_kh = dilation * (conv.kh - 1) + 1;
  const int eff_kw = dilation * (conv.kw - 1) + 1;
  const int out_h = (input.height + 2 * padding - eff_kh) / stride + 1;
  const int out_w = (input.width + 2 * padding - eff_kw) / stride + 1;
  if (out_h < 1 || out_w < 1)
    throw ShapeError("conv2d: kernel larger than padded input");

  FeatureMap out(conv.out_channels, out_h, out_w);
  const std::size_t in_plane = static_cast<std::size_t>(input.height) * input.width;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;

  // Valid output index range for one kernel tap: o*stride + k*dilation -
  // padding must stay inside [0, extent).
  const auto tap_range = [&](int k, int extent, int out_extent) {
    const int off = k * dilation - padding;
    int lo = off < 0 ? (-off + stride - 1) / stride : 0;
    int hi = (extent - 1 - off) / stride;
    hi = std::min(hi, out_extent - 1);
    return std::pair<int, int>(lo, hi);
  };

  // Accumulates taps in (ic, ki, kj) order per output cell, the same order a
  // naive per-cell loop nest uses.
  std::vector<double> acc(out_plane);
  for (int oc = 0; oc < conv.out_channels; ++oc) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(conv.bias[oc]));
    for (int ic = 0; ic < conv.in_channels; ++ic) {
      const float* in_plane_ptr = input.data.data() + static_cast<std::size_t>(ic) * in_plane;
      for (int ki = 0; ki < conv.kh; ++ki) {
        const auto [oh_lo, oh_hi] = tap_range(ki, input.height, out_h);
        for (int kj = 0; kj < conv.kw; ++kj) {
          const auto [ow_lo, ow_hi] = tap_range(kj, input.width, out_w);
          const double w = conv.w(oc, ic, ki, kj);
          if (w == 0.0)
            continue;
          for (int oh = oh_lo; oh <= oh_hi; ++oh) {
            const int ih = oh * stride + ki * dilation - padding;
            const float* in_row =
                in_plane_ptr + static_cast<std::size_t>(ih) * input.width +
                (static_cast<std::size_t>(ow_lo) * stride + kj * dilation - padding);
            double* acc_row = acc.data() + static_cast<std::size_t>(oh) * out_w + ow_lo;
            const int n = ow_hi - ow_lo + 1;
            if (stride == 1) {
              for (int x = 0; x < n; ++x)
                acc_row[x] += w * in_row[x];
            } else {
              for (int x = 0; x < n; ++x)
                acc_row[x] += w * in_row[static_cast<std::size_t>(x) * stride];
            }
          }
        }
      }
    }
    float* out_ptr = out.data.data() + static_cast<std::size_t>(oc) * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i)
      out_ptr[i] = static_cast<float>(acc[i]);
  }
  return out;
}

FeatureMap max_pool2d(const FeatureMap& input, int window, int stride,
                      int padding, float pad_value) {
  if (window < 1 || stride < 1 || padding < 0)
    throw ShapeError("max_pool2d: invalid window/stride/padding");

  const int out_h = (input.height + 2 * padding - window) / stride + 1;
  const int out_w = (input.width + 2 * padding - window) / stride + 1;
  if (out_h < 1 || out_w < 1)
    throw ShapeError("max_pool2d: window larger than padded input");

  FeatureMap out(input.channels, out_h, out_w);
  for (int c = 0; c < input.channels; ++c) {
    for (int oh = 0; oh < out_h; ++oh) {
      for (int ow = 0; ow < out_w; ++ow) {
        float best = pad_value;
        bool first = true;
        for (int i = 0; i < window; ++i) {
          const int h = oh * stride - padding + i;
          for (int j = 0; j < window; ++j) {
            const int w = ow * stride - padding + j;
            const float v = (h >= 0 && h < input.height && w >= 0 && w < input.width)
                                ? input.at(c, h, w)
                                : pad_value;
            if (first || v > best)
              best = v;
            first = false;
          }
        }
        out.at(c, oh, ow) = best;
      }
    }
  }
  return out;
}

FeatureMap upsample_nearest(const FeatureMap& input, int factor) {
  if (factor < 1)
    throw ShapeError("upsample_nearest: factor must be positive");
  FeatureMap out(input.channels, input.height * factor, input.width * factor);
  for (int c = 0; c < input.channels; ++c)
    for (int h = 0; h < out.height; ++h)
      for (int w = 0; w < out.width; ++w)
        out.at(c, h, w) = input.at(c, h / factor, w / factor);
  return out;
}

FeatureMap relu(FeatureMap input) {
  for (float& v : input.data)
    v = std::max(v, 0.0f);
  return input;
}

FeatureMap softmax_channels(const FeatureMap& input) {
  if (input.channels < 1)
    throw ShapeError("softmax_channels: need at least one channel");
  FeatureMap out(input.channels, input.height, input.width);
  const std::size_t plane = static_cast<std::size_t>(input.height) * input.width;
  for (std::size_t p = 0; p < plane; ++p) {
    double max_logit = input.data[p];
    for (int c = 1; c < input.channels; ++c)
      max_logit = std::max(max_logit, static_cast<double>(input.data[c * plane + p]));
    double sum = 0.0;
    for (int c = 0; c < input.channels; ++c)
      sum += std::exp(static_cast<double>(input.data[c * plane + p]) - max_logit);
    for (int c = 0; c < input.channels; ++c)
      out.data[c * plane + p] = static_cast<float>(
          std::exp(static_cast<double>(input.data[c * plane + p]) - max_logit) / sum);
  }
  return out;
}

void DensePerceptron::validate() const {
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    if (layers[i].out_dim != layers[i + 1].in_dim)
      throw ShapeError("perceptron: layer " + std::to_string(i) + " output " +
                       std::to_string(layers[i].out_dim) + " does not chain into " +
                       std::to_string(layers[i + 1].in_dim));
}

namespace {

double apply_activation(double v, Activation act) {
  switch (act) {
  case Activation::Relu:
    return v > 0.0 ? v : 0.0;
  case Activation::Sigmoid:
    return 1.0 / (1.0 + std::exp(-v));
  case Activation::None:
    return v;
  }
  return v;
}

} // namespace

std::vector<double> perceptron_forward(const DensePerceptron& p,
                                       std::span<const double> x) {
  std::vector<double> cur(x.begin(), x.end());
  for (const DenseLayer& layer : p.layers) {
    if (static_cast<int>(cur.size()) != layer.in_dim)
      throw ShapeError("perceptron_forward: input size " + std::to_string(cur.size()) +
                       " does not match layer input " + std::to_string(layer.in_dim));
    std::vector<double> next(static_cast<std::size_t>(layer.out_dim));
    for (int o = 0; o < layer.out_dim; ++o) {
      double acc = layer.bias[o];
      const double* row = layer.weight.data() + static_cast<std::size_t>(o) * layer.in_dim;
      for (int i = 0; i < layer.in_dim; ++i)
        acc += row[i] * cur[i];
      next[o] = apply_activation(acc, layer.activation);
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<double>
finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                 std::span<const double> x, double eps) {
  if (!(eps > 0.0))
    throw NumericError("finite_diff_grad: eps must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = f(probe);
    probe[i] = saved - eps;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: objective is not finite near x");
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Conv2d make_conv2d(int out_channels, int in_channels, int kh, int kw,
                   SplitMix64& rng) {
  Conv2d conv;
  conv.out_channels = out_channels;
  conv.in_channels = in_channels;
  conv.kh = kh;
  conv.kw = kw;
  const double limit = std::sqrt(1.0 / (static_cast<double>(in_channels) * kh * kw));
  conv.weight.resize(static_cast<std::size_t>(out_channels) * in_channels * kh * kw);
  for (float& v : conv.weight)
    v = static_cast<float>(rng.uniform(-limit, limit));
  conv.bias.assign(static_cast<std::size_t>(out_channels), 0.0f);
  return conv;
}

DenseLayer make_dense_layer(int in_dim, int out_dim, Activation act,
                            SplitMix64& rng) {
  DenseLayer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.activation = act;
  const double limit = std::sqrt(1.0 / in_dim);
  layer.weight.resize(static_cast<std::size_t>(out_dim) * in_dim);
  for (double& v : layer.weight)
    v = rng.uniform(-limit, limit);
  layer.bias.assign(static_cast<std::size_t>(out_dim), 0.0);
  return layer;
}

} // namespace rangeseg
