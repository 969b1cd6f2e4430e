#ifndef RANGESEG_RANGE_VIEW_HPP
#define RANGESEG_RANGE_VIEW_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "rangeseg/kitti_io.hpp"

namespace rangeseg {

// Pixel label reserved for empty pixels in projected label maps; also the
// ignore id handed to the losses.
inline constexpr std::int32_t kIgnoreLabel = -1;

struct ProjectionConfig {
  int height = 64;
  int width = 2048;
  double fov_up_rad = 3.0 * M_PI / 180.0;
  double fov_down_rad = 25.0 * M_PI / 180.0; // stored positive

  double fov_total() const { return fov_up_rad + fov_down_rad; }
  void validate() const; // throws ConfigError when degenerate
  bool operator==(const ProjectionConfig&) const = default;
};

// Spherically projected scan. Empty pixels carry range -1, xyz/remission 0
// and mask 0; a negative sentinel cannot collide with a real range.
struct RangeImage {
  int height = 0;
  int width = 0;
  std::vector<float> range;     // H*W, -1 where empty
  std::vector<float> x, y, z;   // H*W each
  std::vector<float> remission; // H*W
  std::vector<std::uint8_t> mask;

  std::size_t pixels() const { return range.size(); }
  int index(int v, int u) const { return v * width + u; }
};

// Bidirectional point <-> pixel association. point_to_pixel holds v*W+u or
// -1 for points skipped in projection (zero range); pixel_to_point holds the
// winning (nearest) point index or -1.
struct PixelIndexMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> point_to_pixel;
  std::vector<std::int32_t> pixel_to_point;
};

// Channel order of the 9 x H x W input representation.
enum RriChannel : int {
  kChRange = 0,
  kChX = 1,
  kChY = 2,
  kChZ = 3,
  kChRemission = 4,
  kChResidual1 = 5,
  kChResidual2 = 6,
  kChResidual3 = 7,
  kChMask = 8,
};

struct RangeResidualImage {
  int height = 0;
  int width = 0;
  std::vector<float> channels; // 9*H*W, channel-major

  float at(int c, int v, int u) const {
    return channels[(static_cast<std::size_t>(c) * height + v) * width + u];
  }
  float& at(int c, int v, int u) {
    return channels[(static_cast<std::size_t>(c) * height + v) * width + u];
  }
  const float* channel(int c) const {
    return channels.data() + static_cast<std::size_t>(c) * height * width;
  }
};

// Continuous image coordinates of a point under the spherical projection.
// u = 1/2 [1 - atan2(y,x)/pi] W,  v = [1 - (asin(z/r) + f_up)/f] H.
std::pair<double, double> project_point(double x, double y, double z, double r,
                                        const ProjectionConfig& cfg);

// Floor + clamp discretization of the continuous coordinates.
std::pair<int, int> discretize(double u_cont, double v_cont,
                               const ProjectionConfig& cfg);

// Projects a cloud; on pixel collisions the nearest point wins (ties go to
// the highest point index, matching a stable descending-range sort whose
// last write wins).
std::pair<RangeImage, PixelIndexMap>
spherical_project(const PointCloud& cloud, const ProjectionConfig& cfg);

// Applies a relative pose to every point; remission is untouched.
PointCloud compensate_scan(const PointCloud& cloud, const Pose& rel);

// d_i = |r_i - r'_i| / r_i where both masks are true, 0 elsewhere.
std::vector<float> residual_channel(const RangeImage& current,
                                    const RangeImage& prev_reprojected);

// Builds the full 9-channel image. prev lists up to three predecessors in
// recency order (most recent first), each with the transform into the
// current frame; missing predecessors leave their channel zero.
// residual_cap > 0 clips residual values at that bound.
std::pair<RangeResidualImage, PixelIndexMap>
assemble_residual_image(const PointCloud& current,
                        const std::vector<std::pair<PointCloud, Pose>>& prev,
                        const ProjectionConfig& cfg, double residual_cap = 0.0);

// Per-pixel semantic id of the winning point; empty pixels carry ignore_id.
std::vector<std::int32_t> project_labels(const LabelArray& labels,
                                         const PixelIndexMap& map,
                                         const ProjectionConfig& cfg,
                                         std::int32_t ignore_id = kIgnoreLabel);

// Debug dump format: 16-byte header (magic "RRI1", u32 H, u32 W, u32
// reserved) followed by 9*H*W little-endian float32 values.
void write_rri(const RangeResidualImage& rri, const std::filesystem::path& path);
RangeResidualImage read_rri(const std::filesystem::path& path);

} // namespace rangeseg

#endif // RANGESEG_RANGE_VIEW_HPP
