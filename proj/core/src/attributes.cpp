#include "ponita/attributes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ponita::attributes {

using geometry::Matrix;
using geometry::PosOnly;
using geometry::PosOri;
using geometry::Pose;
using geometry::Rotation;

namespace {

// atan2 yields -pi for (-0, -1); the attribute range is (-pi, pi].
double wrap_angle(double theta) { return theta <= -std::numbers::pi ? std::numbers::pi : theta; }

// Angle between two vectors in [0, pi], accurate near 0 and pi where arccos of
// the clamped dot product loses half of the significant digits.
double angle_between(const Vector& u, const Vector& v) {
  const double dot = u.dot(v);
  double cross = 0.0;
  if (u.size() == 3) {
    cross = Eigen::Vector3d(u).cross(Eigen::Vector3d(v)).norm();
  } else {
    cross = std::abs(u(0) * v(1) - u(1) * v(0));
  }
  return std::atan2(cross, dot);
}

const PosOri& as_pos_ori(const HPoint& x, int dim, const char* what) {
  const auto* p = std::get_if<PosOri>(&x);
  if (p == nullptr) throw std::invalid_argument(std::string(what) + ": expected a position-orientation point");
  if (p->p.size() != dim) throw geometry::DimensionError(std::string(what) + ": wrong dimension");
  return *p;
}

const Pose& as_pose(const HPoint& x, const char* what) {
  const auto* p = std::get_if<Pose>(&x);
  if (p == nullptr) throw std::invalid_argument(std::string(what) + ": expected a pose");
  return *p;
}

const Vector& position(const HPoint& x) {
  return std::visit([](const auto& v) -> const Vector& { return v.p; }, x);
}

void require_unit(const Vector& o, const char* what) {
  if (std::abs(o.norm() - 1.0) > 1e-8) throw std::invalid_argument(std::string(what) + ": orientation is not unit");
}

Attribute se_attribute(const Vector& t, const Matrix& r) {
  if (t.size() == 2) {
    return Attribute{SpaceTag::SE2, {t(0), t(1), wrap_angle(std::atan2(r(1, 0), r(0, 0)))}};
  }
  Attribute a{SpaceTag::SE3, {t(0), t(1), t(2)}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) a.values.push_back(r(i, j));
  }
  return a;
}

void expect_length(const Attribute& a, std::size_t n) {
  if (a.values.size() != n) {
    std::ostringstream os;
    os << to_string(a.space) << " attribute must have " << n << " values, got " << a.values.size();
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

std::string_view to_string(SpaceTag tag) {
  switch (tag) {
    case SpaceTag::Rn: return "Rn";
    case SpaceTag::R2xS1: return "R2xS1";
    case SpaceTag::SE2: return "SE2";
    case SpaceTag::R3xS2: return "R3xS2";
    case SpaceTag::SE3: return "SE3";
  }
  return "?";
}

double max_abs_diff(const Attribute& a, const Attribute& b) {
  if (a.space != b.space || a.values.size() != b.values.size()) {
    throw std::invalid_argument("max_abs_diff: attributes of different spaces");
  }
  double d = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) d = std::max(d, std::abs(a.values[k] - b.values[k]));
  return d;
}

Attribute attr_rn(const Vector& p_i, const Vector& p_j) {
  if (p_i.size() != p_j.size()) throw geometry::DimensionError("attr_rn: dimension mismatch");
  return Attribute{SpaceTag::Rn, {(p_j - p_i).norm()}};
}

Attribute attr_r2s1(const HPoint& x_i, const HPoint& x_j) {
  const auto& a = as_pos_ori(x_i, 2, "attr_r2s1");
  const auto& b = as_pos_ori(x_j, 2, "attr_r2s1");
  require_unit(a.o, "attr_r2s1");
  require_unit(b.o, "attr_r2s1");
  const Vector d = b.p - a.p;
  // R_{o_i}^{-1} d with R_o = [o, o_perp].
  const double u = a.o(0) * d(0) + a.o(1) * d(1);
  const double v = -a.o(1) * d(0) + a.o(0) * d(1);
  const double cross = a.o(0) * b.o(1) - a.o(1) * b.o(0);
  const double theta = wrap_angle(std::atan2(cross, a.o.dot(b.o)));
  return Attribute{SpaceTag::R2xS1, {u, v, theta}};
}

Attribute attr_r3s2(const HPoint& x_i, const HPoint& x_j) {
  const auto& a = as_pos_ori(x_i, 3, "attr_r3s2");
  const auto& b = as_pos_ori(x_j, 3, "attr_r3s2");
  require_unit(a.o, "attr_r3s2");
  require_unit(b.o, "attr_r3s2");
  const Vector d = b.p - a.p;
  const double along = a.o.dot(d);
  const double across = (d - along * a.o).norm();
  return Attribute{SpaceTag::R3xS2, {along, across, angle_between(a.o, b.o)}};
}

Attribute attr_r3s2_polar(const HPoint& x_i, const HPoint& x_j) {
  const auto& a = as_pos_ori(x_i, 3, "attr_r3s2_polar");
  const auto& b = as_pos_ori(x_j, 3, "attr_r3s2_polar");
  require_unit(a.o, "attr_r3s2_polar");
  require_unit(b.o, "attr_r3s2_polar");
  const Vector d = b.p - a.p;
  const double r = d.norm();
  if (r == 0.0) throw std::domain_error("attr_r3s2_polar: coincident positions, polar angle undefined");
  const double along = a.o.dot(d);
  const double across = (d - along * a.o).norm();
  return Attribute{SpaceTag::R3xS2, {r, std::atan2(across, along), angle_between(a.o, b.o)}};
}

Attribute attr_sen(const HPoint& x_i, const HPoint& x_j) {
  const auto& a = as_pose(x_i, "attr_sen");
  const auto& b = as_pose(x_j, "attr_sen");
  if (a.r.dim() != b.r.dim()) throw geometry::DimensionError("attr_sen: dimension mismatch");
  const Rotation rinv = a.r.inverse();
  return se_attribute(rinv * (b.p - a.p), (rinv * b.r).matrix());
}

Attribute attribute(SpaceTag space, const HPoint& x_i, const HPoint& x_j) {
  switch (space) {
    case SpaceTag::Rn: return attr_rn(position(x_i), position(x_j));
    case SpaceTag::R2xS1: return attr_r2s1(x_i, x_j);
    case SpaceTag::R3xS2: return attr_r3s2(x_i, x_j);
    case SpaceTag::SE2:
    case SpaceTag::SE3: {
      Attribute a = attr_sen(x_i, x_j);
      if (a.space != space) throw geometry::DimensionError("attribute: pose dimension does not match space");
      return a;
    }
  }
  throw std::invalid_argument("attribute: unknown space");
}

HPoint origin(SpaceTag space, int dim) {
  switch (space) {
    case SpaceTag::Rn: return PosOnly{Vector::Zero(dim)};
    case SpaceTag::R2xS1: return PosOri{Vector::Zero(2), geometry::reference_axis(2)};
    case SpaceTag::R3xS2: return PosOri{Vector::Zero(3), geometry::reference_axis(3)};
    case SpaceTag::SE2: return Pose{Vector::Zero(2), Rotation::identity(2)};
    case SpaceTag::SE3: return Pose{Vector::Zero(3), Rotation::identity(3)};
  }
  throw std::invalid_argument("origin: unknown space");
}

HPoint representative_from_attr(const Attribute& a, int dim) {
  const auto& v = a.values;
  switch (a.space) {
    case SpaceTag::Rn: {
      expect_length(a, 1);
      if (!(v[0] >= 0.0)) throw std::invalid_argument("Rn attribute must be a non-negative distance");
      return PosOnly{v[0] * geometry::reference_axis(dim)};
    }
    case SpaceTag::R2xS1:
    case SpaceTag::SE2: {
      expect_length(a, 3);
      if (!(v[2] > -std::numbers::pi && v[2] <= std::numbers::pi)) {
        throw std::invalid_argument("planar attribute angle must lie in (-pi, pi]");
      }
      Vector p(2);
      p << v[0], v[1];
      if (a.space == SpaceTag::SE2) return Pose{p, Rotation::planar(v[2])};
      Vector o(2);
      o << std::cos(v[2]), std::sin(v[2]);
      return PosOri{p, o};
    }
    case SpaceTag::R3xS2: {
      expect_length(a, 3);
      if (!(v[1] >= 0.0)) throw std::invalid_argument("R3xS2 attribute requires b >= 0");
      if (!(v[2] >= 0.0 && v[2] <= std::numbers::pi)) {
        throw std::invalid_argument("R3xS2 attribute requires c in [0, pi]");
      }
      Vector p(3);
      p << v[1], 0.0, v[0];
      Vector o(3);
      o << std::sin(v[2]), 0.0, std::cos(v[2]);
      return PosOri{p, o};
    }
    case SpaceTag::SE3: {
      expect_length(a, 12);
      Vector t(3);
      t << v[0], v[1], v[2];
      Matrix r(3, 3);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) r(i, j) = v[3 + 3 * i + j];
      }
      return Pose{t, Rotation::from_matrix(r, 1e-9)};
    }
  }
  throw std::invalid_argument("representative_from_attr: unknown space");
}

RigidMotion canonical_element(SpaceTag space, const HPoint& x) {
  switch (space) {
    case SpaceTag::Rn: {
      const Vector& p = position(x);
      return RigidMotion{p, Rotation::identity(static_cast<int>(p.size()))};
    }
    case SpaceTag::R2xS1:
    case SpaceTag::R3xS2: {
      const auto& po = as_pos_ori(x, space == SpaceTag::R2xS1 ? 2 : 3, "canonical_element");
      return RigidMotion{po.p, geometry::rotation_from_orientation(po.o)};
    }
    case SpaceTag::SE2:
    case SpaceTag::SE3: {
      const auto& pose = as_pose(x, "canonical_element");
      return RigidMotion{pose.p, pose.r};
    }
  }
  throw std::invalid_argument("canonical_element: unknown space");
}

Attribute attr_via_element(SpaceTag space, const RigidMotion& g_i, const HPoint& x_j) {
  const HPoint y = geometry::act(geometry::inverse(g_i), x_j);
  switch (space) {
    case SpaceTag::Rn: return Attribute{space, {position(y).norm()}};
    case SpaceTag::R2xS1: {
      const auto& po = as_pos_ori(y, 2, "attr_via_element");
      return Attribute{space, {po.p(0), po.p(1), wrap_angle(std::atan2(po.o(1), po.o(0)))}};
    }
    case SpaceTag::R3xS2: {
      const auto& po = as_pos_ori(y, 3, "attr_via_element");
      return Attribute{space,
                       {po.p(2), std::hypot(po.p(0), po.p(1)), std::atan2(std::hypot(po.o(0), po.o(1)), po.o(2))}};
    }
    case SpaceTag::SE2:
    case SpaceTag::SE3: {
      const auto& pose = as_pose(y, "attr_via_element");
      return se_attribute(pose.p, pose.r.matrix());
    }
  }
  throw std::invalid_argument("attr_via_element: unknown space");
}

HPoint random_point(SpaceTag space, std::mt19937_64& rng, int dim, double scale) {
  std::normal_distribution<double> gauss(0.0, scale);
  const int n = (space == SpaceTag::Rn) ? dim : (space == SpaceTag::R2xS1 || space == SpaceTag::SE2) ? 2 : 3;
  Vector p(n);
  for (int k = 0; k < n; ++k) p(k) = gauss(rng);
  switch (space) {
    case SpaceTag::Rn: return PosOnly{p};
    case SpaceTag::R2xS1:
    case SpaceTag::R3xS2: return PosOri{p, geometry::random_unit_vector(n, rng)};
    case SpaceTag::SE2:
    case SpaceTag::SE3: return Pose{p, geometry::random_rotation(n, rng)};
  }
  throw std::invalid_argument("random_point: unknown space");
}

double stabilizer_invariance_check(SpaceTag space, std::size_t samples, std::uint64_t seed, int dim) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const HPoint x_i = random_point(space, rng, dim);
    const HPoint x_j = random_point(space, rng, dim);
    const RigidMotion g_i = canonical_element(space, x_i);
    RigidMotion h = RigidMotion::identity(g_i.dim());
    switch (space) {
      case SpaceTag::Rn:
        h.rotation = geometry::random_rotation(g_i.dim(), rng);
        break;
      case SpaceTag::R3xS2:
        h.rotation = Rotation::axis_angle(Eigen::Vector3d::UnitZ(), angle(rng));
        break;
      case SpaceTag::R2xS1:
      case SpaceTag::SE2:
      case SpaceTag::SE3:
        break;  // trivial stabilizer
    }
    const Attribute a = attr_via_element(space, g_i, x_j);
    const Attribute b = attr_via_element(space, geometry::compose(g_i, h), x_j);
    worst = std::max(worst, max_abs_diff(a, b));
  }
  return worst;
}

}  // namespace ponita::attributes
