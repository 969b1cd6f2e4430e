#ifndef RANGESEG_POSTPROC_HPP
#define RANGESEG_POSTPROC_HPP

#include <cstdint>
#include <vector>

#include "rangeseg/range_view.hpp"

namespace rangeseg {

struct KnnConfig {
  int k = 5;
  int window = 7;      // odd
  double cutoff = 0.0; // max |range difference| in meters; <= 0 disables
  // Optional Gaussian range weighting of the votes, off by default.
  bool gaussian_weight = false;
  double gaussian_sigma = 1.0;

  void validate() const;
  bool operator==(const KnnConfig&) const = default;
};

// Recovers per-point labels from 2D range-view predictions. For each point,
// valid pixels inside the window around its pixel are ranked by absolute
// range difference to the point; the k nearest vote on the point's label.
// Ties between candidates resolve by window row-major order; ties between
// classes resolve by smallest range difference, then lowest class id.
// Points that were never projected (zero range) receive the most common
// valid 2D label.
std::vector<std::int32_t> knn_refine(const PointCloud& cloud,
                                     const PixelIndexMap& map,
                                     const RangeImage& range_img,
                                     const std::vector<std::int32_t>& labels2d,
                                     const KnnConfig& cfg);

} // namespace rangeseg

#endif // RANGESEG_POSTPROC_HPP
