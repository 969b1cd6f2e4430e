#include "rangeseg/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rangeseg/rng.hpp"

namespace rangeseg {
namespace synth {

namespace {

// Velodyne-to-camera extrinsics used by the synthetic calib.txt; an axis
// permutation plus a small offset, the same shape real KITTI calibrations
// have.
Pose synth_tr() {
  Pose tr;
  tr.matrix << 0, -1, 0, -0.02, //
      0, 0, -1, -0.08,          //
      1, 0, 0, -0.27,           //
      0, 0, 0, 1;
  return tr;
}

Pose sensor_pose(int scan) {
  const double yaw = 0.02 * scan;
  Pose p;
  p.matrix << std::cos(yaw), -std::sin(yaw), 0, 0.5 * scan, //
      std::sin(yaw), std::cos(yaw), 0, 0.1 * scan,          //
      0, 0, 1, 0,                                           //
      0, 0, 0, 1;
  return p;
}

struct WorldPoint {
  double x, y, z;
  std::uint16_t label;
  std::uint16_t instance;
  float remission;
};

// Static world geometry sampled once; the moving car is added per scan.
std::vector<WorldPoint> make_static_world() {
  SplitMix64 rng(0x5EED0001ULL);
  std::vector<WorldPoint> world;

  // Ground annulus (road).
  for (int i = 0; i < 80; ++i) {
    const double az = rng.uniform(0.0, 2.0 * M_PI);
    const double radius = rng.uniform(6.0, 24.0);
    world.push_back({radius * std::cos(az), radius * std::sin(az),
                     -1.8 + rng.uniform(-0.02, 0.02), 40, 0,
                     static_cast<float>(rng.uniform(0.05, 0.4))});
  }
  // Building wall at x = 18.
  for (int i = 0; i < 52; ++i) {
    world.push_back({18.0 + rng.uniform(-0.05, 0.05), rng.uniform(-9.0, 9.0),
                     rng.uniform(-1.5, 2.5), 50, 0,
                     static_cast<float>(rng.uniform(0.2, 0.6))});
  }
  // Vegetation cluster.
  for (int i = 0; i < 24; ++i) {
    world.push_back({-10.0 + rng.uniform(-1.5, 1.5), 8.0 + rng.uniform(-1.5, 1.5),
                     rng.uniform(-1.0, 2.0), 70, 0,
                     static_cast<float>(rng.uniform(0.3, 0.9))});
  }
  // Parked car.
  for (int i = 0; i < 18; ++i) {
    world.push_back({8.0 + rng.uniform(-1.0, 1.0), -4.0 + rng.uniform(-0.6, 0.6),
                     -1.0 + rng.uniform(0.0, 0.9), 10, 1,
                     static_cast<float>(rng.uniform(0.4, 0.8))});
  }
  // Pole.
  for (int i = 0; i < 10; ++i) {
    world.push_back({-6.0 + rng.uniform(-0.05, 0.05), -6.0 + rng.uniform(-0.05, 0.05),
                     rng.uniform(-1.5, 3.0), 80, 0,
                     static_cast<float>(rng.uniform(0.5, 0.9))});
  }
  return world;
}

// Per-scan world position of the moving car cluster; same shape every scan.
std::vector<WorldPoint> make_moving_cluster(int scan) {
  SplitMix64 rng(0x5EED0002ULL);
  std::vector<WorldPoint> cluster;
  const double cx = 6.0 + 1.2 * scan;
  for (int i = 0; i < 16; ++i) {
    cluster.push_back({cx + rng.uniform(-1.0, 1.0), 5.0 + rng.uniform(-0.5, 0.5),
                       -1.0 + rng.uniform(0.0, 0.8), 252, 2,
                       static_cast<float>(rng.uniform(0.4, 0.8))});
  }
  return cluster;
}

struct ScanData {
  PointCloud cloud;
  std::vector<std::uint16_t> semantic;
  std::vector<std::uint16_t> instance;
  Pose pose;
};

ScanData make_scan(int scan) {
  std::vector<WorldPoint> world = make_static_world();
  const std::vector<WorldPoint> moving = make_moving_cluster(scan);
  world.insert(world.end(), moving.begin(), moving.end());

  ScanData data;
  data.pose = sensor_pose(scan);
  const Pose inv = data.pose.inverse();
  for (const WorldPoint& wp : world) {
    const Eigen::Vector3d local = inv.apply({wp.x, wp.y, wp.z});
    Point p;
    p.x = static_cast<float>(local.x());
    p.y = static_cast<float>(local.y());
    p.z = static_cast<float>(local.z());
    p.remission = wp.remission;
    data.cloud.points.push_back(p);
    data.semantic.push_back(wp.label);
    data.instance.push_back(wp.instance);
  }
  return data;
}

void write_label_file(const std::vector<std::uint16_t>& semantic,
                      const std::vector<std::uint16_t>& instance,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open())
    throw IoError("cannot open file for writing: " + path.string());
  for (std::size_t i = 0; i < semantic.size(); ++i) {
    const std::uint32_t word = static_cast<std::uint32_t>(semantic[i]) |
                               (static_cast<std::uint32_t>(instance[i]) << 16);
    out.write(reinterpret_cast<const char*>(&word), 4);
  }
  if (!out)
    throw IoError("failed to write file: " + path.string());
}

std::string scan_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

void write_pose_line(std::ofstream& poses, const Pose& lidar_pose, const Pose& tr,
                     const Pose& tr_inv) {
  const Eigen::Matrix4d cam = tr.matrix * lidar_pose.matrix * tr_inv.matrix;
  char buf[32];
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 4; ++col) {
      std::snprintf(buf, sizeof(buf), "%.17g", cam(row, col));
      poses << (row == 0 && col == 0 ? "" : " ") << buf;
    }
  poses << "\n";
}

} // namespace

MiniSequence make_mini_sequence() {
  MiniSequence seq;
  for (int scan = 0; scan < 4; ++scan) {
    ScanData data = make_scan(scan);
    seq.clouds.push_back(std::move(data.cloud));
    seq.semantic.push_back(std::move(data.semantic));
    seq.poses.push_back(data.pose);
  }
  return seq;
}

void write_mini_sequence(const std::filesystem::path& dir) {
  const Pose tr = synth_tr();
  const Pose tr_inv = tr.inverse();

  std::filesystem::create_directories(dir / "velodyne");
  std::filesystem::create_directories(dir / "labels");

  std::ofstream poses(dir / "poses.txt");
  if (!poses.is_open())
    throw IoError("cannot write poses.txt under " + dir.string());

  for (int scan = 0; scan < 4; ++scan) {
    const ScanData data = make_scan(scan);
    write_point_cloud(data.cloud, dir / "velodyne" / (scan_name(scan) + ".bin"));
    write_label_file(data.semantic, data.instance,
                     dir / "labels" / (scan_name(scan) + ".label"));
    write_pose_line(poses, data.pose, tr, tr_inv);
  }
  if (!poses)
    throw IoError("failed to write poses.txt under " + dir.string());

  std::ofstream calib(dir / "calib.txt");
  if (!calib.is_open())
    throw IoError("cannot write calib.txt under " + dir.string());
  calib << "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  calib << "Tr: 0 -1 0 -0.02 0 0 -1 -0.08 1 0 0 -0.27\n";
  if (!calib)
    throw IoError("failed to write calib.txt under " + dir.string());
}

PointCloud make_dense_scan(int rows, int cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(rows) * cols);

  const double fov_up = 3.0 * M_PI / 180.0;
  const double fov_down = 25.0 * M_PI / 180.0;
  for (int row = 0; row < rows; ++row) {
    const double pitch =
        fov_up - (fov_up + fov_down) * (row + 0.5) / static_cast<double>(rows);
    for (int col = 0; col < cols; ++col) {
      const double az = 2.0 * M_PI * (col + 0.5) / static_cast<double>(cols) - M_PI;
      // Smoothly varying range field plus jitter; roughly street-scene scale.
      const double base = 14.0 + 9.0 * std::sin(3.0 * az) * std::cos(2.0 * pitch);
      const double r = base + rng.uniform(-0.5, 0.5);
      Point p;
      p.x = static_cast<float>(r * std::cos(pitch) * std::cos(az));
      p.y = static_cast<float>(r * std::cos(pitch) * std::sin(az));
      p.z = static_cast<float>(r * std::sin(pitch));
      p.remission = static_cast<float>(rng.uniform(0.05, 0.95));
      cloud.points.push_back(p);
    }
  }
  return cloud;
}

void write_dense_sequence(const std::filesystem::path& dir, int scans, int rows,
                          int cols, std::uint64_t seed) {
  std::filesystem::create_directories(dir / "velodyne");
  std::filesystem::create_directories(dir / "labels");
  const Pose tr = synth_tr();
  const Pose tr_inv = tr.inverse();

  std::ofstream poses(dir / "poses.txt");
  if (!poses.is_open())
    throw IoError("cannot write poses.txt under " + dir.string());

  SplitMix64 label_rng(seed ^ 0xABCDULL);
  const std::uint16_t label_pool[4] = {40, 50, 70, 10};

  for (int scan = 0; scan < scans; ++scan) {
    const PointCloud cloud = make_dense_scan(rows, cols, seed + scan);
    write_point_cloud(cloud, dir / "velodyne" / (scan_name(scan) + ".bin"));

    std::vector<std::uint16_t> semantic(cloud.size());
    std::vector<std::uint16_t> instance(cloud.size(), 0);
    for (std::uint16_t& s : semantic)
      s = label_pool[label_rng.below(4)];
    write_label_file(semantic, instance, dir / "labels" / (scan_name(scan) + ".label"));

    Pose pose;
    pose.matrix(0, 3) = 0.4 * scan;
    pose.matrix(1, 3) = 0.05 * scan;
    write_pose_line(poses, pose, tr, tr_inv);
  }
  if (!poses)
    throw IoError("failed to write poses.txt under " + dir.string());

  std::ofstream calib(dir / "calib.txt");
  if (!calib.is_open())
    throw IoError("cannot write calib.txt under " + dir.string());
  calib << "Tr: 0 -1 0 -0.02 0 0 -1 -0.08 1 0 0 -0.27\n";
  if (!calib)
    throw IoError("failed to write calib.txt under " + dir.string());
}

} // namespace synth
} // namespace rangeseg
