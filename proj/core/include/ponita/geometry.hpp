#pragma once

// SE(n) group elements for n = 2, 3 and their action on the homogeneous
// spaces R^n, R^n x S^{n-1} and SE(n) itself. Everything here is double
// precision and value-semantic.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>

namespace ponita::geometry {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An element of SO(n). Construction through the named factories keeps the
/// orthogonality/determinant invariant; `from_matrix` validates it.
class Rotation {
 public:
  static Rotation identity(int n);
  static Rotation from_matrix(const Matrix& m, double tol = 1e-10);
  static Rotation planar(double angle);
  /// Rotation by `angle` about the (not necessarily unit) axis.
  static Rotation axis_angle(const Eigen::Vector3d& axis, double angle);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& other) const;
  Vector operator*(const Vector& v) const;

  /// Signed angle of a 2D rotation in (-pi, pi].
  double planar_angle() const;

 private:
  explicit Rotation(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

/// g = (x, R) acting as p -> R p + x.
struct RigidMotion {
  Vector translation;
  Rotation rotation;

  static RigidMotion identity(int n);
  int dim() const { return rotation.dim(); }
};

RigidMotion compose(const RigidMotion& g, const RigidMotion& h);
RigidMotion inverse(const RigidMotion& g);

struct PosOnly {
  Vector p;
};
struct PosOri {
  Vector p;
  Vector o;
};
struct Pose {
  Vector p;
  Rotation r;
};
using HPoint = std::variant<PosOnly, PosOri, Pose>;

int dim_of(const HPoint& x);
HPoint make_pos_ori(Vector p, Vector o);  // validates |o| = 1

Vector act(const RigidMotion& g, const Vector& p);
HPoint act(const RigidMotion& g, const HPoint& x);

/// e_x in 2D, e_z in 3D: the axis that R_o maps onto o.
Vector reference_axis(int n);

/// A rotation with R * reference_axis(n) = o. In 3D this is the Rodrigues
/// rotation about ref x o; the antipode o = -e_z maps to diag(1, -1, -1).
Rotation rotation_from_orientation(const Vector& o);

/// Haar-uniform sample on SO(n), n in {2, 3}.
Rotation random_rotation(int n, std::mt19937_64& rng);
Rotation random_rotation(int n, std::uint64_t seed);

RigidMotion random_motion(int n, std::mt19937_64& rng, double translation_scale = 1.0);

/// Uniform sample on S^{n-1}.
Vector random_unit_vector(int n, std::mt19937_64& rng);

/// Largest absolute entry-wise difference. Shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(const HPoint& a, const HPoint& b);

}  // namespace ponita::geometry
