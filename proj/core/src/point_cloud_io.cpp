#include "ponita/point_cloud_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ponita::io {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw std::runtime_error("point cloud: " + what); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from(const json& j, const std::string& what) {
  if (!j.is_array()) bad(what + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) bad(what + " has ragged rows");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

json field_json(const Field& f) {
  switch (f.layout) {
    case Field::Layout::Number:
      return f.data(0, 0);
    case Field::Layout::Flat: {
      json a = json::array();
      for (Eigen::Index i = 0; i < f.data.rows(); ++i) a.push_back(f.data(i, 0));
      return a;
    }
    case Field::Layout::Table:
      break;
  }
  return matrix_json(f.data);
}

Field field_from(const json& j, const std::string& what) {
  if (j.is_number()) return Field::number(j.get<double>());
  if (!j.is_array()) bad(what + " must be a number or an array");
  if (j.empty() || j[0].is_array()) return Field::table(matrix_from(j, what));
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return Field::flat(v);
}

json cloud_json(const PointCloud& pc) {
  pc.validate();
  json j;
  j["positions"] = matrix_json(pc.positions);
  j["scalars"] = json::object();
  for (const auto& [k, f] : pc.scalars) j["scalars"][k] = field_json(f);
  j["vectors"] = json::object();
  for (const auto& [k, m] : pc.vectors) j["vectors"][k] = matrix_json(m);
  if (pc.edges) {
    json e = json::array();
    for (const auto& [r, s] : *pc.edges) e.push_back({r, s});
    j["edges"] = std::move(e);
  }
  if (!pc.targets.empty()) {
    j["targets"] = json::object();
    for (const auto& [k, f] : pc.targets) j["targets"][k] = field_json(f);
  }
  return j;
}

PointCloud cloud_from(const json& j) {
  if (!j.is_object() || !j.contains("positions")) bad("missing positions");
  PointCloud pc;
  pc.positions = matrix_from(j["positions"], "positions");
  if (j.contains("scalars")) {
    for (const auto& [k, v] : j["scalars"].items()) pc.scalars[k] = field_from(v, "scalar " + k);
  }
  if (j.contains("vectors")) {
    for (const auto& [k, v] : j["vectors"].items()) pc.vectors[k] = matrix_from(v, "vector " + k);
  }
  if (j.contains("edges")) {
    std::vector<std::array<std::uint32_t, 2>> edges;
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2) bad("edges must be [i, j] pairs");
      edges.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>()});
    }
    pc.edges = std::move(edges);
  }
  if (j.contains("targets")) {
    for (const auto& [k, v] : j["targets"].items()) pc.targets[k] = field_from(v, "target " + k);
  }
  pc.validate();
  return pc;
}

std::string slurp(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& file, const std::string& text) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  os << text << '\n';
  if (!os) throw std::runtime_error("failed writing " + file.string());
}

}  // namespace

Field Field::number(double v) {
  Field f;
  f.data = Matrix::Constant(1, 1, v);
  f.layout = Layout::Number;
  return f;
}

Field Field::flat(const Eigen::VectorXd& v) {
  Field f;
  f.data = v;
  f.layout = Layout::Flat;
  return f;
}

Field Field::table(Matrix m) {
  Field f;
  f.data = std::move(m);
  f.layout = Layout::Table;
  return f;
}

void PointCloud::validate() const {
  const auto p = positions.rows();
  if (positions.cols() != 2 && positions.cols() != 3) bad("positions must have 2 or 3 columns");
  for (const auto& [k, f] : scalars) {
    if (f.layout == Field::Layout::Number || f.data.rows() != p) bad("scalar " + k + " must have one row per point");
  }
  for (const auto& [k, m] : vectors) {
    if (m.rows() != p || m.cols() != positions.cols()) bad("vector " + k + " must be [P, n]");
  }
  if (edges) {
    for (const auto& [r, s] : *edges) {
      if (r >= p || s >= p) bad("edge index out of range");
    }
  }
}

bool PointCloud::operator==(const PointCloud& o) const {
  return positions == o.positions && scalars == o.scalars && vectors == o.vectors && edges == o.edges &&
         targets == o.targets;
}

std::string to_json(const PointCloud& pc, int indent) { return cloud_json(pc).dump(indent); }

PointCloud from_json(const std::string& text) { return cloud_from(json::parse(text)); }

void write_point_cloud(const PointCloud& pc, const std::filesystem::path& file) { spill(file, to_json(pc, 1)); }

PointCloud read_point_cloud(const std::filesystem::path& file) { return from_json(slurp(file)); }

void write_dataset(const Dataset& ds, const std::filesystem::path& file) {
  json j;
  j["kind"] = ds.kind;
  j["meta"] = json::object();
  for (const auto& [k, v] : ds.meta) j["meta"][k] = v;
  j["samples"] = json::array();
  for (const auto& s : ds.samples) j["samples"].push_back(cloud_json(s));
  spill(file, j.dump());
}

Dataset read_dataset(const std::filesystem::path& file) {
  const json j = json::parse(slurp(file));
  if (!j.is_object() || !j.contains("samples")) throw std::runtime_error(file.string() + ": not a dataset file");
  Dataset ds;
  ds.kind = j.value("kind", std::string());
  if (j.contains("meta")) {
    for (const auto& [k, v] : j["meta"].items()) ds.meta[k] = v.get<double>();
  }
  for (const auto& s : j["samples"]) ds.samples.push_back(cloud_from(s));
  return ds;
}

}  // namespace ponita::io
