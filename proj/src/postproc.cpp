#include "rangeseg/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rangeseg {

void KnnConfig::validate() const {
  if (k < 1)
    throw ConfigError("knn: k must be positive");
  if (window < 1 || window % 2 == 0)
    throw ConfigError("knn: window must be odd and positive");
  if (k > window * window)
    throw ConfigError("knn: k exceeds window capacity");
}

namespace {

struct Candidate {
  double range_diff;
  int order; // row-major position inside the window, for deterministic ties
  std::int32_t label;
  double weight;
};

} // namespace

std::vector<std::int32_t> knn_refine(const PointCloud& cloud,
                                     const PixelIndexMap& map,
                                     const RangeImage& range_img,
                                     const std::vector<std::int32_t>& labels2d,
                                     const KnnConfig& cfg) {
  cfg.validate();
  if (map.point_to_pixel.size() != cloud.size())
    throw DataError("knn_refine: index map does not match cloud");
  if (labels2d.size() != range_img.pixels())
    throw ShapeError("knn_refine: 2D labels do not match range image");

  const int height = range_img.height;
  const int width = range_img.width;
  const int half = cfg.window / 2;

  // Fallback for unprojected points: most common label over valid pixels
  // (lowest id wins a tie).
  std::int32_t fallback = kIgnoreLabel;
  {
    std::map<std::int32_t, std::size_t> counts;
    for (std::size_t pix = 0; pix < labels2d.size(); ++pix)
      if (range_img.mask[pix])
        counts[labels2d[pix]]++;
    std::size_t best = 0;
    for (const auto& [label, count] : counts)
      if (count > best) {
        best = count;
        fallback = label;
      }
  }

  std::vector<std::int32_t> out(cloud.size(), fallback);
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<std::size_t>(cfg.window) * cfg.window);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const std::int32_t pix = map.point_to_pixel[i];
    if (pix < 0)
      continue; // unprojected: keep fallback
    const int pv = pix / width;
    const int pu = pix % width;
    const Point& p = cloud.points[i];
    const double r_point = std::sqrt(static_cast<double>(p.x) * p.x +
                                     static_cast<double>(p.y) * p.y +
                                     static_cast<double>(p.z) * p.z);

    candidates.clear();
    int order = 0;
    for (int dv = -half; dv <= half; ++dv) {
      for (int du = -half; du <= half; ++du, ++order) {
        const int nv = pv + dv;
        const int nu = pu + du;
        if (nv < 0 || nv >= height || nu < 0 || nu >= width)
          continue;
        const int npix = nv * width + nu;
        if (!range_img.mask[npix])
          continue;
        const double diff = std::abs(range_img.range[npix] - r_point);
        candidates.push_back({diff, order, labels2d[npix], 1.0});
      }
    }

    if (candidates.empty()) {
      // A projected point's own pixel always holds a winner.
      if (!range_img.mask[pix])
        throw Error("knn_refine: projected point maps to an empty pixel");
      out[i] = labels2d[pix];
      continue;
    }

    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.range_diff != b.range_diff)
                  return a.range_diff < b.range_diff;
                return a.order < b.order;
              });

    // Vote over the k nearest candidates inside the cutoff.
    std::map<std::int32_t, double> votes;
    std::map<std::int32_t, double> best_diff;
    std::size_t taken = 0;
    for (const Candidate& c : candidates) {
      if (taken == static_cast<std::size_t>(cfg.k))
        break;
      if (cfg.cutoff > 0.0 && c.range_diff > cfg.cutoff)
        break; // sorted ascending, nothing closer follows
      const double w = cfg.gaussian_weight
                           ? std::exp(-0.5 * (c.range_diff / cfg.gaussian_sigma) *
                                      (c.range_diff / cfg.gaussian_sigma))
                           : 1.0;
      votes[c.label] += w;
      auto [it, inserted] = best_diff.try_emplace(c.label, c.range_diff);
      if (!inserted)
        it->second = std::min(it->second, c.range_diff);
      ++taken;
    }

    if (votes.empty()) {
      out[i] = labels2d[pix];
      continue;
    }

    std::int32_t winner = 0;
    double winner_votes = -1.0;
    double winner_diff = 0.0;
    for (const auto& [label, v] : votes) {
      const double d = best_diff[label];
      const bool better = v > winner_votes ||
                          (v == winner_votes && (d < winner_diff ||
                                                 (d == winner_diff && label < winner)));
      if (better) {
        winner = label;
        winner_votes = v;
        winner_diff = d;
      }
    }
    out[i] = winner;
  }
  return out;
}

} // namespace rangeseg
