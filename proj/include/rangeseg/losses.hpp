#ifndef RANGESEG_LOSSES_HPP
#define RANGESEG_LOSSES_HPP

#include <cstdint>
#include <vector>

#include "rangeseg/tensor_ops.hpp"

namespace rangeseg {

// Per-class frequencies backing the 1/sqrt(f) cross-entropy weights. Every
// entry must be strictly positive; load_class_frequencies floors zeros and
// renormalizes so corpus files with absent classes stay usable.
struct ClassFrequencies {
  std::vector<double> f;

  void validate() const;
};

struct LossWeights {
  double w_cross_entropy = 1.0;
  double w_lovasz = 1.5;
  double w_boundary = 1.0;

  bool operator==(const LossWeights&) const = default;
};

// Mean over non-ignored pixels of (1/sqrt(f_y)) * (-log p_y); probabilities
// are floored at 1e-12 before the log.
double weighted_cross_entropy(const FeatureMap& probs,
                              const std::vector<std::int32_t>& targets,
                              const ClassFrequencies& freqs,
                              std::int32_t ignore_id);

// Jaccard-delta vector of the Lovasz extension for one class. gt_sorted is
// the ground-truth membership indicator ordered by descending error; the
// extension value is the inner product of the sorted errors with this
// vector.
std::vector<double> lovasz_grad(const std::vector<std::uint8_t>& gt_sorted);

// Lovasz extension value for one class given unsorted errors and membership.
double lovasz_class_term(std::vector<double> errors,
                         std::vector<std::uint8_t> membership);

// Mean of per-class Lovasz terms over classes present in the valid ground
// truth; errors follow m_i(c) = 1 - f_i(c) if c == y_i else f_i(c).
double lovasz_softmax(const FeatureMap& probs,
                      const std::vector<std::int32_t>& targets,
                      std::int32_t ignore_id);

// y_b = maxpool(1 - y, theta0, stride 1, pad floor(theta0/2), pad value 0)
// - (1 - y); marks pixels adjacent to a class transition.
std::vector<std::uint8_t> boundary_map(const std::vector<std::uint8_t>& binary,
                                       int height, int width, int theta0);

// Mean over classes present in the valid ground truth of 1 - 2PR/(P+R) on
// the class boundary maps. Ignored pixels behave exactly like out-of-image
// padding. Classes with empty boundaries on both sides contribute 0; empty
// on exactly one side contributes 1.
double boundary_loss(const std::vector<std::int32_t>& pred_labels,
                     const std::vector<std::int32_t>& gt_labels, int height,
                     int width, int theta0, std::int32_t ignore_id);

struct LossBreakdown {
  double total = 0.0;
  double cross_entropy = 0.0;
  double lovasz = 0.0;
  double boundary = 0.0;
};

// w1 * wce + w2 * lovasz + w3 * boundary; the boundary term runs on the
// argmax of probs.
LossBreakdown total_loss(const FeatureMap& probs,
                         const std::vector<std::int32_t>& targets,
                         const ClassFrequencies& freqs, const LossWeights& weights,
                         int theta0, std::int32_t ignore_id);

// Per-pixel argmax class map (ties go to the lowest class id).
std::vector<std::int32_t> argmax_channels(const FeatureMap& probs);

} // namespace rangeseg

#endif // RANGESEG_LOSSES_HPP
