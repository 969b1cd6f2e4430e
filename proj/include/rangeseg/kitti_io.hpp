#ifndef RANGESEG_KITTI_IO_HPP
#define RANGESEG_KITTI_IO_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "rangeseg/errors.hpp"

namespace rangeseg {

struct Point {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float remission = 0.0f; // clamped to [0, 1] on ingestion
};

struct PointCloud {
  std::vector<Point> points;
  // Points with non-finite coordinates are dropped on ingestion; the count
  // is kept so callers can report it.
  std::size_t dropped_non_finite = 0;

  std::size_t size() const { return points.size(); }
};

// Homogeneous rigid transform. The rotation block must be orthonormal with
// positive determinant; validate() enforces it.
struct Pose {
  Eigen::Matrix4d matrix = Eigen::Matrix4d::Identity();

  static Pose identity() { return Pose{}; }
  void validate() const; // throws DataError on a non-rigid matrix
  Pose inverse() const;  // rigid inverse (R^T, -R^T t)

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return matrix.block<3, 3>(0, 0) * p + matrix.block<3, 1>(0, 3);
  }
};

struct LabelArray {
  std::vector<std::uint16_t> semantic;
  std::vector<std::uint16_t> instance;

  std::size_t size() const { return semantic.size(); }
};

// velodyne .bin: packed little-endian float32 quadruples (x, y, z, remission).
PointCloud read_point_cloud(const std::filesystem::path& path);
void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);

// .label: packed little-endian uint32, semantic = low 16 bits, instance = high 16.
LabelArray read_labels(const std::filesystem::path& path);

// Writes semantic ids as .label words with zero instance bits.
void write_predictions(const LabelArray& labels, const std::filesystem::path& path);
void write_predictions(const std::vector<std::uint16_t>& semantic,
                       const std::filesystem::path& path);

// poses.txt (12 reals per line, row-major camera-frame 3x4) combined with the
// calib.txt "Tr" line. Poses are returned in the LiDAR frame:
// P_lidar = Tr^-1 * P_cam * Tr.
std::vector<Pose> read_poses(const std::filesystem::path& poses_path,
                             const std::filesystem::path& calib_path);

// Parses only the Tr line of a KITTI calib.txt into a 4x4 homogeneous matrix.
Pose read_calibration(const std::filesystem::path& calib_path);

// T = pose_l^-1 * pose_k; applying T to points of scan k expresses them in
// scan l's frame.
Pose relative_transform(const Pose& pose_k, const Pose& pose_l);

} // namespace rangeseg

#endif // RANGESEG_KITTI_IO_HPP
