#include "ponita/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ponita::geometry {

namespace {

void require_dim(int n) {
  if (n != 2 && n != 3) {
    throw DimensionError("only n = 2 and n = 3 are supported, got n = " + std::to_string(n));
  }
}

void require_same(int a, int b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionError(os.str());
  }
}

}  // namespace

Rotation Rotation::identity(int n) {
  require_dim(n);
  return Rotation(Matrix::Identity(n, n));
}

Rotation Rotation::from_matrix(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) throw DimensionError("rotation matrix must be square");
  require_dim(static_cast<int>(m.rows()));
  const Matrix gram = m.transpose() * m;
  const double ortho = (gram - Matrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    std::ostringstream os;
    os << "matrix is not in SO(n): |R^T R - I|_max = " << ortho << ", det = " << det;
    throw std::invalid_argument(os.str());
  }
  return Rotation(m);
}

Rotation Rotation::planar(double angle) {
  Matrix m(2, 2);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  m << c, -s, s, c;
  return Rotation(m);
}

Rotation Rotation::axis_angle(const Eigen::Vector3d& axis, double angle) {
  const double len = axis.norm();
  if (len == 0.0) throw std::invalid_argument("axis_angle: zero axis");
  return Rotation(Matrix(Eigen::AngleAxisd(angle, axis / len).toRotationMatrix()));
}

Rotation Rotation::operator*(const Rotation& other) const {
  require_same(dim(), other.dim(), "Rotation * Rotation");
  return Rotation(m_ * other.m_);
}

Vector Rotation::operator*(const Vector& v) const {
  require_same(dim(), static_cast<int>(v.size()), "Rotation * Vector");
  return m_ * v;
}

double Rotation::planar_angle() const {
  if (dim() != 2) throw DimensionError("planar_angle requires a 2D rotation");
  return std::atan2(m_(1, 0), m_(0, 0));
}

RigidMotion RigidMotion::identity(int n) {
  return RigidMotion{Vector::Zero(n), Rotation::identity(n)};
}

RigidMotion compose(const RigidMotion& g, const RigidMotion& h) {
  require_same(g.dim(), h.dim(), "compose");
  return RigidMotion{g.rotation * h.translation + g.translation, g.rotation * h.rotation};
}

RigidMotion inverse(const RigidMotion& g) {
  Rotation rinv = g.rotation.inverse();
  Vector t = -(rinv * g.translation);
  return RigidMotion{std::move(t), std::move(rinv)};
}

int dim_of(const HPoint& x) {
  return std::visit([](const auto& v) { return static_cast<int>(v.p.size()); }, x);
}

HPoint make_pos_ori(Vector p, Vector o) {
  require_same(static_cast<int>(p.size()), static_cast<int>(o.size()), "make_pos_ori");
  if (std::abs(o.norm() - 1.0) > 1e-10) {
    throw std::invalid_argument("orientation must have unit norm");
  }
  return PosOri{std::move(p), std::move(o)};
}

Vector act(const RigidMotion& g, const Vector& p) {
  require_same(g.dim(), static_cast<int>(p.size()), "act");
  return g.rotation * p + g.translation;
}

HPoint act(const RigidMotion& g, const HPoint& x) {
  require_same(g.dim(), dim_of(x), "act");
  return std::visit(
      [&](const auto& v) -> HPoint {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, PosOnly>) {
          return PosOnly{act(g, v.p)};
        } else if constexpr (std::is_same_v<V, PosOri>) {
          return PosOri{act(g, v.p), g.rotation * v.o};
        } else {
          return Pose{act(g, v.p), g.rotation * v.r};
        }
      },
      x);
}

Vector reference_axis(int n) {
  require_dim(n);
  Vector e = Vector::Zero(n);
  e(n == 2 ? 0 : 2) = 1.0;
  return e;
}

Rotation rotation_from_orientation(const Vector& o) {
  const int n = static_cast<int>(o.size());
  require_dim(n);
  if (std::abs(o.norm() - 1.0) > 1e-8) {
    throw std::invalid_argument("rotation_from_orientation: orientation is not a unit vector");
  }
  if (n == 2) {
    Matrix m(2, 2);
    m << o(0), -o(1), o(1), o(0);
    return Rotation::from_matrix(m, 1e-8);
  }
  // axis = e_z x o, computed exactly; its norm is sin(theta).
  const Eigen::Vector3d v(-o(1), o(0), 0.0);
  const double s = v.norm();
  const double c = std::clamp(o(2), -1.0, 1.0);
  if (s == 0.0) {
    if (c > 0.0) return Rotation::identity(3);
    Matrix flip = Matrix::Identity(3, 3);
    flip(1, 1) = -1.0;
    flip(2, 2) = -1.0;
    return Rotation::from_matrix(flip);
  }
  return Rotation::axis_angle(v, std::atan2(s, c));
}

Rotation random_rotation(int n, std::mt19937_64& rng) {
  require_dim(n);
  if (n == 2) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    return Rotation::planar(angle(rng));
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Quaterniond q;
  double norm = 0.0;
  do {
    q = Eigen::Quaterniond(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    norm = q.norm();
  } while (norm < 1e-12);
  q.coeffs() /= norm;
  return Rotation::from_matrix(Matrix(q.toRotationMatrix()), 1e-9);
}

Rotation random_rotation(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_rotation(n, rng);
}

RigidMotion random_motion(int n, std::mt19937_64& rng, double translation_scale) {
  std::normal_distribution<double> gauss(0.0, translation_scale);
  Vector t(n);
  for (int i = 0; i < n; ++i) t(i) = gauss(rng);
  return RigidMotion{std::move(t), random_rotation(n, rng)};
}

Vector random_unit_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(n);
  double len = 0.0;
  do {
    for (int i = 0; i < n; ++i) v(i) = gauss(rng);
    len = v.norm();
  } while (len < 1e-12);
  return v / len;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: shape mismatch");
  }
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

double max_abs_diff(const HPoint& a, const HPoint& b) {
  if (a.index() != b.index()) throw std::invalid_argument("max_abs_diff: different point kinds");
  return std::visit(
      [&](const auto& va) -> double {
        using V = std::decay_t<decltype(va)>;
        const auto& vb = std::get<V>(b);
        double d = max_abs_diff(Matrix(va.p), Matrix(vb.p));
        if constexpr (std::is_same_v<V, PosOri>) {
          d = std::max(d, max_abs_diff(Matrix(va.o), Matrix(vb.o)));
        } else if constexpr (std::is_same_v<V, Pose>) {
          d = std::max(d, max_abs_diff(va.r.matrix(), vb.r.matrix()));
        }
        return d;
      },
      a);
}

}  // namespace ponita::geometry
