#include "rangeseg/range_view.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rangeseg {

void ProjectionConfig::validate() const {
  if (height < 1 || width < 1)
    throw ConfigError("projection image size must be at least 1x1");
  if (!(fov_total() > 0.0))
    throw ConfigError("projection vertical field of view must be positive");
}

std::pair<double, double> project_point(double x, double y, double z, double r,
                                        const ProjectionConfig& cfg) {
  const double yaw = std::atan2(y, x);
  const double pitch = std::asin(std::clamp(z / r, -1.0, 1.0));
  const double u = 0.5 * (1.0 - yaw / M_PI) * cfg.width;
  const double v = (1.0 - (pitch + cfg.fov_up_rad) / cfg.fov_total()) * cfg.height;
  return {u, v};
}

std::pair<int, int> discretize(double u_cont, double v_cont,
                               const ProjectionConfig& cfg) {
  int u = static_cast<int>(std::floor(u_cont));
  int v = static_cast<int>(std::floor(v_cont));
  u = std::clamp(u, 0, cfg.width - 1);
  v = std::clamp(v, 0, cfg.height - 1);
  return {u, v};
}

std::pair<RangeImage, PixelIndexMap>
spherical_project(const PointCloud& cloud, const ProjectionConfig& cfg) {
  cfg.validate();

  RangeImage img;
  img.height = cfg.height;
  img.width = cfg.width;
  const std::size_t n_pixels = static_cast<std::size_t>(cfg.height) * cfg.width;
  img.range.assign(n_pixels, -1.0f);
  img.x.assign(n_pixels, 0.0f);
  img.y.assign(n_pixels, 0.0f);
  img.z.assign(n_pixels, 0.0f);
  img.remission.assign(n_pixels, 0.0f);
  img.mask.assign(n_pixels, 0);

  PixelIndexMap map;
  map.height = cfg.height;
  map.width = cfg.width;
  map.point_to_pixel.assign(cloud.size(), -1);
  map.pixel_to_point.assign(n_pixels, -1);

  // Nearest point wins each pixel. <= keeps the highest-index point among
  // equal ranges, the same winner a stable descending-range sort with
  // last-write-wins would produce.
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point& p = cloud.points[i];
    const double r = std::sqrt(static_cast<double>(p.x) * p.x +
                               static_cast<double>(p.y) * p.y +
                               static_cast<double>(p.z) * p.z);
    if (r == 0.0)
      continue;
    const auto [u_cont, v_cont] = project_point(p.x, p.y, p.z, r, cfg);
    const auto [u, v] = discretize(u_cont, v_cont, cfg);
    const int pix = v * cfg.width + u;
    map.point_to_pixel[i] = pix;

    const float rf = static_cast<float>(r);
    if (img.mask[pix] && img.range[pix] < rf)
      continue;
    img.range[pix] = rf;
    img.x[pix] = p.x;
    img.y[pix] = p.y;
    img.z[pix] = p.z;
    img.remission[pix] = p.remission;
    img.mask[pix] = 1;
    map.pixel_to_point[pix] = static_cast<std::int32_t>(i);
  }
  return {std::move(img), std::move(map)};
}

PointCloud compensate_scan(const PointCloud& cloud, const Pose& rel) {
  PointCloud out;
  out.points.reserve(cloud.size());
  const Eigen::Matrix3d r = rel.matrix.block<3, 3>(0, 0);
  const Eigen::Vector3d t = rel.matrix.block<3, 1>(0, 3);
  for (const Point& p : cloud.points) {
    const Eigen::Vector3d q = r * Eigen::Vector3d(p.x, p.y, p.z) + t;
    Point o;
    o.x = static_cast<float>(q.x());
    o.y = static_cast<float>(q.y());
    o.z = static_cast<float>(q.z());
    o.remission = p.remission;
    out.points.push_back(o);
  }
  return out;
}

std::vector<float> residual_channel(const RangeImage& current,
                                    const RangeImage& prev_reprojected) {
  if (current.height != prev_reprojected.height ||
      current.width != prev_reprojected.width)
    throw ShapeError("residual_channel: image dimensions differ");

  std::vector<float> d(current.pixels(), 0.0f);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!current.mask[i] || !prev_reprojected.mask[i])
      continue;
    const double r = current.range[i];
    const double rp = prev_reprojected.range[i];
    d[i] = static_cast<float>(std::abs(r - rp) / r);
  }
  return d;
}

std::pair<RangeResidualImage, PixelIndexMap>
assemble_residual_image(const PointCloud& current,
                        const std::vector<std::pair<PointCloud, Pose>>& prev,
                        const ProjectionConfig& cfg, double residual_cap) {
  if (prev.size() > 3)
    throw ShapeError("assemble_residual_image: at most 3 previous scans");

  auto [img, map] = spherical_project(current, cfg);

  RangeResidualImage rri;
  rri.height = cfg.height;
  rri.width = cfg.width;
  const std::size_t n_pixels = img.pixels();
  rri.channels.assign(9 * n_pixels, 0.0f);

  std::copy(img.range.begin(), img.range.end(),
            rri.channels.begin() + kChRange * n_pixels);
  std::copy(img.x.begin(), img.x.end(), rri.channels.begin() + kChX * n_pixels);
  std::copy(img.y.begin(), img.y.end(), rri.channels.begin() + kChY * n_pixels);
  std::copy(img.z.begin(), img.z.end(), rri.channels.begin() + kChZ * n_pixels);
  std::copy(img.remission.begin(), img.remission.end(),
            rri.channels.begin() + kChRemission * n_pixels);
  for (std::size_t i = 0; i < n_pixels; ++i)
    rri.channels[kChMask * n_pixels + i] = img.mask[i] ? 1.0f : 0.0f;

  for (std::size_t j = 0; j < prev.size(); ++j) {
    const PointCloud compensated = compensate_scan(prev[j].first, prev[j].second);
    const auto [prev_img, prev_map] = spherical_project(compensated, cfg);
    std::vector<float> d = residual_channel(img, prev_img);
    if (residual_cap > 0.0)
      for (float& v : d)
        v = std::min(v, static_cast<float>(residual_cap));
    std::copy(d.begin(), d.end(),
              rri.channels.begin() + (kChResidual1 + j) * n_pixels);
  }
  return {std::move(rri), std::move(map)};
}

std::vector<std::int32_t> project_labels(const LabelArray& labels,
                                         const PixelIndexMap& map,
                                         const ProjectionConfig& cfg,
                                         std::int32_t ignore_id) {
  if (labels.size() != map.point_to_pixel.size())
    throw DataError("project_labels: label count " + std::to_string(labels.size()) +
                    " does not match point count " +
                    std::to_string(map.point_to_pixel.size()));

  std::vector<std::int32_t> out(static_cast<std::size_t>(cfg.height) * cfg.width,
                                ignore_id);
  for (std::size_t pix = 0; pix < out.size(); ++pix) {
    const std::int32_t pt = map.pixel_to_point[pix];
    if (pt >= 0)
      out[pix] = labels.semantic[static_cast<std::size_t>(pt)];
  }
  return out;
}

void write_rri(const RangeResidualImage& rri, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open())
    throw IoError("cannot open file for writing: " + path.string());
  const char magic[4] = {'R', 'R', 'I', '1'};
  const std::uint32_t h = static_cast<std::uint32_t>(rri.height);
  const std::uint32_t w = static_cast<std::uint32_t>(rri.width);
  const std::uint32_t reserved = 0;
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&reserved), 4);
  out.write(reinterpret_cast<const char*>(rri.channels.data()),
            static_cast<std::streamsize>(rri.channels.size() * sizeof(float)));
  if (!out)
    throw IoError("failed to write file: " + path.string());
}

RangeResidualImage read_rri(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open())
    throw IoError("cannot open file: " + path.string());
  char magic[4] = {};
  std::uint32_t h = 0, w = 0, reserved = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  if (!in || std::memcmp(magic, "RRI1", 4) != 0)
    throw DataError("not a range residual image dump: " + path.string());

  RangeResidualImage rri;
  rri.height = static_cast<int>(h);
  rri.width = static_cast<int>(w);
  const std::size_t count = 9ull * h * w;
  rri.channels.resize(count);
  in.read(reinterpret_cast<char*>(rri.channels.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in)
    throw DataError("truncated range residual image dump: " + path.string());
  return rri;
}

} // namespace rangeseg
