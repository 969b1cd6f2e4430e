#include "rangeseg/kitti_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rangeseg {

namespace {

std::vector<char> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in.is_open())
    throw IoError("cannot open file: " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> buffer(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(buffer.data(), size))
    throw IoError("failed to read file: " + path.string());
  return buffer;
}

float load_le_float(const char* p) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, p, 4); // little-endian host assumed throughout
  float v = 0.0f;
  std::memcpy(&v, &bits, 4);
  return v;
}

} // namespace

void Pose::validate() const {
  const Eigen::Matrix3d r = matrix.block<3, 3>(0, 0);
  const Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() >= 1e-6)
    throw DataError("pose rotation block is not orthonormal");
  if (r.determinant() <= 0.0)
    throw DataError("pose rotation block has non-positive determinant");
  const Eigen::RowVector4d bottom = matrix.row(3);
  if (bottom != Eigen::RowVector4d(0, 0, 0, 1))
    throw DataError("pose bottom row is not [0, 0, 0, 1]");
}

Pose Pose::inverse() const {
  const Eigen::Matrix3d r = matrix.block<3, 3>(0, 0);
  const Eigen::Vector3d t = matrix.block<3, 1>(0, 3);
  Pose out;
  out.matrix.block<3, 3>(0, 0) = r.transpose();
  out.matrix.block<3, 1>(0, 3) = -r.transpose() * t;
  return out;
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  const std::vector<char> raw = read_binary_file(path);
  if (raw.size() % 16 != 0)
    throw DataError("malformed point cloud file (length " +
                    std::to_string(raw.size()) + " is not a multiple of 16): " +
                    path.string());

  PointCloud cloud;
  cloud.points.reserve(raw.size() / 16);
  for (std::size_t off = 0; off < raw.size(); off += 16) {
    Point p;
    p.x = load_le_float(raw.data() + off);
    p.y = load_le_float(raw.data() + off + 4);
    p.z = load_le_float(raw.data() + off + 8);
    p.remission = load_le_float(raw.data() + off + 12);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.remission)) {
      cloud.dropped_non_finite++;
      continue;
    }
    p.remission = std::clamp(p.remission, 0.0f, 1.0f);
    cloud.points.push_back(p);
  }
  return cloud;
}

void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open())
    throw IoError("cannot open file for writing: " + path.string());
  std::vector<float> buffer;
  buffer.reserve(cloud.points.size() * 4);
  for (const Point& p : cloud.points) {
    buffer.push_back(p.x);
    buffer.push_back(p.y);
    buffer.push_back(p.z);
    buffer.push_back(p.remission);
  }
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  if (!out)
    throw IoError("failed to write file: " + path.string());
}

LabelArray read_labels(const std::filesystem::path& path) {
  const std::vector<char> raw = read_binary_file(path);
  if (raw.size() % 4 != 0)
    throw DataError("malformed label file (length " + std::to_string(raw.size()) +
                    " is not a multiple of 4): " + path.string());

  LabelArray labels;
  const std::size_t count = raw.size() / 4;
  labels.semantic.reserve(count);
  labels.instance.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t word = 0;
    std::memcpy(&word, raw.data() + i * 4, 4);
    labels.semantic.push_back(static_cast<std::uint16_t>(word & 0xFFFFu));
    labels.instance.push_back(static_cast<std::uint16_t>(word >> 16));
  }
  return labels;
}

void write_predictions(const std::vector<std::uint16_t>& semantic,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open())
    throw IoError("cannot open file for writing: " + path.string());
  std::vector<std::uint32_t> words;
  words.reserve(semantic.size());
  for (std::uint16_t id : semantic)
    words.push_back(static_cast<std::uint32_t>(id)); // instance bits zero
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out)
    throw IoError("failed to write file: " + path.string());
}

void write_predictions(const LabelArray& labels, const std::filesystem::path& path) {
  write_predictions(labels.semantic, path);
}

namespace {

// Parses exactly 12 reals into a row-major 3x4 block of a homogeneous matrix.
Eigen::Matrix4d parse_transform_line(const std::vector<double>& vals) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 4; ++col)
      m(row, col) = vals[static_cast<std::size_t>(row * 4 + col)];
  return m;
}

std::vector<double> parse_reals(const std::string& text, const std::string& what) {
  std::istringstream ss(text);
  std::vector<double> vals;
  std::string tok;
  while (ss >> tok) {
    std::size_t consumed = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &consumed);
    } catch (const std::exception&) {
      throw DataError("non-numeric token '" + tok + "' in " + what);
    }
    if (consumed != tok.size())
      throw DataError("non-numeric token '" + tok + "' in " + what);
    vals.push_back(v);
  }
  return vals;
}

} // namespace

Pose read_calibration(const std::filesystem::path& calib_path) {
  std::ifstream in(calib_path);
  if (!in.is_open())
    throw IoError("cannot open calibration file: " + calib_path.string());
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t colon = line.find(':');
    if (colon == std::string::npos)
      continue;
    const std::string key = line.substr(0, colon);
    if (key != "Tr")
      continue;
    const std::vector<double> vals =
        parse_reals(line.substr(colon + 1), "calibration Tr line");
    if (vals.size() != 12)
      throw DataError("calibration Tr line has " + std::to_string(vals.size()) +
                      " values, expected 12: " + calib_path.string());
    Pose tr;
    tr.matrix = parse_transform_line(vals);
    tr.validate();
    return tr;
  }
  throw DataError("calibration file has no Tr line: " + calib_path.string());
}

std::vector<Pose> read_poses(const std::filesystem::path& poses_path,
                             const std::filesystem::path& calib_path) {
  const Pose tr = read_calibration(calib_path);
  const Pose tr_inv = tr.inverse();

  std::ifstream in(poses_path);
  if (!in.is_open())
    throw IoError("cannot open poses file: " + poses_path.string());

  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    const std::vector<double> vals =
        parse_reals(line, "poses line " + std::to_string(line_no));
    if (vals.size() != 12)
      throw DataError("poses line " + std::to_string(line_no) + " has " +
                      std::to_string(vals.size()) + " values, expected 12");
    Pose cam;
    cam.matrix = parse_transform_line(vals);
    Pose lidar;
    lidar.matrix = tr_inv.matrix * cam.matrix * tr.matrix;
    lidar.validate();
    poses.push_back(lidar);
  }
  return poses;
}

Pose relative_transform(const Pose& pose_k, const Pose& pose_l) {
  Pose rel;
  rel.matrix = pose_l.inverse().matrix * pose_k.matrix;
  return rel;
}

} // namespace rangeseg
