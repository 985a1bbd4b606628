#pragma once

// Point-cloud files: UTF-8 JSON with keys
//   positions  [[x, y, z], ...]
//   scalars    {name: [P] or [P, k]}
//   vectors    {name: [P, n]}
//   edges      [[i, j], ...]            (optional)
//   targets    {name: number | [P] | [P, k]}  (optional)
// Numbers are written with round-trip precision.
//
// Datasets wrap a list of point clouds: {"kind": ..., "meta": {...}, "samples": [...]}.

#include "ponita/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ponita::io {

using geometry::Matrix;

struct Field {
  enum class Layout { Number, Flat, Table };
  Matrix data;
  Layout layout = Layout::Table;

  static Field number(double v);
  static Field flat(const Eigen::VectorXd& v);
  static Field table(Matrix m);
  bool operator==(const Field& other) const = default;
};

struct PointCloud {
  Matrix positions;
  std::map<std::string, Field> scalars;
  std::map<std::string, Matrix> vectors;
  std::optional<std::vector<std::array<std::uint32_t, 2>>> edges;
  std::map<std::string, Field> targets;

  std::size_t num_points() const { return static_cast<std::size_t>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }
  void validate() const;
  bool operator==(const PointCloud& other) const;
};

std::string to_json(const PointCloud& pc, int indent = -1);
PointCloud from_json(const std::string& text);

void write_point_cloud(const PointCloud& pc, const std::filesystem::path& file);
PointCloud read_point_cloud(const std::filesystem::path& file);

struct Dataset {
  std::string kind;
  std::map<std::string, double> meta;
  std::vector<PointCloud> samples;
};

void write_dataset(const Dataset& ds, const std::filesystem::path& file);
Dataset read_dataset(const std::filesystem::path& file);

}  // namespace ponita::io
