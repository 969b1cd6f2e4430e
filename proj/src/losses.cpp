#include "rangeseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace rangeseg {

namespace {
constexpr double kProbFloor = 1e-12;
} // namespace

void ClassFrequencies::validate() const {
  double sum = 0.0;
  for (double v : f) {
    if (!(v > 0.0))
      throw DataError("class frequencies must be strictly positive");
    sum += v;
  }
  if (sum > 1.0 + 1e-6)
    throw DataError("class frequencies sum above 1");
}

double weighted_cross_entropy(const FeatureMap& probs,
                              const std::vector<std::int32_t>& targets,
                              const ClassFrequencies& freqs,
                              std::int32_t ignore_id) {
  const std::size_t plane = static_cast<std::size_t>(probs.height) * probs.width;
  if (targets.size() != plane)
    throw ShapeError("weighted_cross_entropy: target size mismatch");
  if (static_cast<int>(freqs.f.size()) != probs.channels)
    throw ShapeError("weighted_cross_entropy: frequency table size mismatch");
  freqs.validate();

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const std::int32_t target = targets[i];
    if (target == ignore_id)
      continue;
    if (target < 0 || target >= probs.channels)
      throw DataError("weighted_cross_entropy: target class out of range");
    const double p = std::max(
        static_cast<double>(probs.data[static_cast<std::size_t>(target) * plane + i]),
        kProbFloor);
    sum += -std::log(p) / std::sqrt(freqs.f[static_cast<std::size_t>(target)]);
    ++count;
  }
  if (count == 0)
    throw DataError("weighted_cross_entropy: no valid pixels");
  return sum / static_cast<double>(count);
}

std::vector<double> lovasz_grad(const std::vector<std::uint8_t>& gt_sorted) {
  const std::size_t k = gt_sorted.size();
  std::vector<double> grad(k);
  if (k == 0)
    return grad;

  double gts = 0.0;
  for (std::uint8_t g : gt_sorted)
    gts += g;

  double cum_gt = 0.0;
  double cum_not_gt = 0.0;
  double prev_jaccard = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    cum_gt += gt_sorted[i];
    cum_not_gt += 1.0 - gt_sorted[i];
    const double intersection = gts - cum_gt;
    const double union_ = gts + cum_not_gt;
    const double jaccard = 1.0 - intersection / union_;
    grad[i] = jaccard - prev_jaccard;
    prev_jaccard = jaccard;
  }
  return grad;
}

double lovasz_class_term(std::vector<double> errors,
                         std::vector<std::uint8_t> membership) {
  if (errors.size() != membership.size())
    throw ShapeError("lovasz_class_term: error/membership size mismatch");
  const std::size_t k = errors.size();
  if (k == 0)
    return 0.0;

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return errors[a] > errors[b];
  });

  std::vector<std::uint8_t> gt_sorted(k);
  for (std::size_t i = 0; i < k; ++i)
    gt_sorted[i] = membership[order[i]];
  const std::vector<double> grad = lovasz_grad(gt_sorted);

  double value = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    value += errors[order[i]] * grad[i];
  return value;
}

double lovasz_softmax(const FeatureMap& probs,
                      const std::vector<std::int32_t>& targets,
                      std::int32_t ignore_id) {
  const std::size_t plane = static_cast<std::size_t>(probs.height) * probs.width;
  if (targets.size() != plane)
    throw ShapeError("lovasz_softmax: target size mismatch");

  std::vector<std::size_t> valid;
  valid.reserve(plane);
  std::set<std::int32_t> present;
  for (std::size_t i = 0; i < plane; ++i) {
    if (targets[i] == ignore_id)
      continue;
    if (targets[i] < 0 || targets[i] >= probs.channels)
      throw DataError("lovasz_softmax: target class out of range");
    valid.push_back(i);
    present.insert(targets[i]);
  }
  if (valid.empty())
    throw DataError("lovasz_softmax: no valid pixels");

  double sum = 0.0;
  for (std::int32_t c : present) {
    std::vector<double> errors(valid.size());
    std::vector<std::uint8_t> membership(valid.size());
    for (std::size_t vi = 0; vi < valid.size(); ++vi) {
      const std::size_t i = valid[vi];
      const double fc = probs.data[static_cast<std::size_t>(c) * plane + i];
      const bool is_c = targets[i] == c;
      membership[vi] = is_c ? 1 : 0;
      errors[vi] = is_c ? 1.0 - fc : fc;
    }
    sum += lovasz_class_term(std::move(errors), std::move(membership));
  }
  return sum / static_cast<double>(present.size());
}

std::vector<std::uint8_t> boundary_map(const std::vector<std::uint8_t>& binary,
                                       int height, int width, int theta0) {
  if (binary.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError("boundary_map: size mismatch");
  if (theta0 < 1)
    throw ShapeError("boundary_map: window must be positive");

  FeatureMap inverted(1, height, width);
  for (std::size_t i = 0; i < binary.size(); ++i)
    inverted.data[i] = binary[i] ? 0.0f : 1.0f;

  const FeatureMap pooled = max_pool2d(inverted, theta0, 1, theta0 / 2, 0.0f);
  std::vector<std::uint8_t> out(binary.size());
  for (std::size_t i = 0; i < binary.size(); ++i)
    out[i] = pooled.data[i] - inverted.data[i] > 0.5f ? 1 : 0;
  return out;
}

double boundary_loss(const std::vector<std::int32_t>& pred_labels,
                     const std::vector<std::int32_t>& gt_labels, int height,
                     int width, int theta0, std::int32_t ignore_id) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (pred_labels.size() != plane || gt_labels.size() != plane)
    throw ShapeError("boundary_loss: size mismatch");

  std::set<std::int32_t> present;
  for (std::int32_t g : gt_labels)
    if (g != ignore_id)
      present.insert(g);
  if (present.empty())
    throw DataError("boundary_loss: no valid pixels");

  double sum = 0.0;
  std::vector<std::uint8_t> gt_bin(plane), pred_bin(plane);
  for (std::int32_t c : present) {
    // Ignored pixels are treated exactly like out-of-image padding: their
    // inverted-map value is 0 (achieved by marking them in-class) and they
    // can never be boundary pixels themselves.
    for (std::size_t i = 0; i < plane; ++i) {
      const bool ignored = gt_labels[i] == ignore_id;
      gt_bin[i] = (ignored || gt_labels[i] == c) ? 1 : 0;
      pred_bin[i] = (ignored || pred_labels[i] == c) ? 1 : 0;
    }
    std::vector<std::uint8_t> gt_b = boundary_map(gt_bin, height, width, theta0);
    std::vector<std::uint8_t> pred_b = boundary_map(pred_bin, height, width, theta0);

    std::size_t n_gt = 0, n_pred = 0, n_both = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (gt_labels[i] == ignore_id)
        continue;
      n_gt += gt_b[i];
      n_pred += pred_b[i];
      n_both += gt_b[i] & pred_b[i];
    }

    if (n_gt == 0 && n_pred == 0)
      continue; // no boundary on either side, perfect agreement
    if (n_gt == 0 || n_pred == 0) {
      sum += 1.0;
      continue;
    }
    const double precision = static_cast<double>(n_both) / static_cast<double>(n_pred);
    const double recall = static_cast<double>(n_both) / static_cast<double>(n_gt);
    sum += (precision + recall > 0.0)
               ? 1.0 - 2.0 * precision * recall / (precision + recall)
               : 1.0;
  }
  return sum / static_cast<double>(present.size());
}

std::vector<std::int32_t> argmax_channels(const FeatureMap& probs) {
  const std::size_t plane = static_cast<std::size_t>(probs.height) * probs.width;
  std::vector<std::int32_t> out(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    float best = probs.data[i];
    std::int32_t best_c = 0;
    for (int c = 1; c < probs.channels; ++c) {
      const float v = probs.data[static_cast<std::size_t>(c) * plane + i];
      if (v > best) {
        best = v;
        best_c = c;
      }
    }
    out[i] = best_c;
  }
  return out;
}

LossBreakdown total_loss(const FeatureMap& probs,
                         const std::vector<std::int32_t>& targets,
                         const ClassFrequencies& freqs, const LossWeights& weights,
                         int theta0, std::int32_t ignore_id) {
  LossBreakdown breakdown;
  breakdown.cross_entropy = weighted_cross_entropy(probs, targets, freqs, ignore_id);
  breakdown.lovasz = lovasz_softmax(probs, targets, ignore_id);
  breakdown.boundary = boundary_loss(argmax_channels(probs), targets, probs.height,
                                     probs.width, theta0, ignore_id);
  breakdown.total = weights.w_cross_entropy * breakdown.cross_entropy +
                    weights.w_lovasz * breakdown.lovasz +
                    weights.w_boundary * breakdown.boundary;
  return breakdown;
}

} // namespace rangeseg
