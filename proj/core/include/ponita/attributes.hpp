#pragma once

// Invariant attributes of point pairs. Each map sends a pair (x_i, x_j) to a
// vector that depends only on the equivalence class {(g x_i, g x_j) | g in SE(n)},
// and `representative_from_attr` inverts the map up to that class.
//
// Conventions:
//   Rn     [dist]                         dist >= 0
//   R2xS1  [u, v, theta]                  (u, v) = R_{o_i}^{-1} (p_j - p_i), theta signed in (-pi, pi]
//   SE2    [u, v, theta]                  relative pose g_i^{-1} g_j
//   R3xS2  [a, b, c]                      a = o_i.d, b = |d - a o_i| >= 0, c = arccos(o_i.o_j)
//   SE3    [t(3), R row-major(9)]         relative pose g_i^{-1} g_j
//
// In 2D the signed angle is kept so that the map stays invertible; its
// absolute value equals arccos(o_i.o_j).

#include "ponita/geometry.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace ponita::attributes {

using geometry::HPoint;
using geometry::RigidMotion;
using geometry::Vector;

enum class SpaceTag { Rn, R2xS1, SE2, R3xS2, SE3 };

std::string_view to_string(SpaceTag tag);

struct Attribute {
  SpaceTag space = SpaceTag::Rn;
  std::vector<double> values;
};

double max_abs_diff(const Attribute& a, const Attribute& b);

Attribute attr_rn(const Vector& p_i, const Vector& p_j);
Attribute attr_r2s1(const HPoint& x_i, const HPoint& x_j);
Attribute attr_r3s2(const HPoint& x_i, const HPoint& x_j);
/// (|d|, arccos(o_i.d/|d|), arccos(o_i.o_j)). Throws when p_i == p_j.
Attribute attr_r3s2_polar(const HPoint& x_i, const HPoint& x_j);
/// Relative pose for SE(2) (tag SE2) or SE(3) (tag SE3).
Attribute attr_sen(const HPoint& x_i, const HPoint& x_j);

/// Dispatch on the space tag. Rn accepts any point kind and uses positions.
Attribute attribute(SpaceTag space, const HPoint& x_i, const HPoint& x_j);

/// The origin x_0 of the homogeneous space; `dim` only matters for Rn.
HPoint origin(SpaceTag space, int dim = 3);

/// A point x with attribute(space, origin(space), x) == a. Throws on
/// attributes that violate their type invariants (e.g. b < 0).
HPoint representative_from_attr(const Attribute& a, int dim = 3);

/// Some group element g with g * origin(space) == x.
RigidMotion canonical_element(SpaceTag space, const HPoint& x);

/// The attribute computed through the relative point g_i^{-1} x_j, for a
/// caller-chosen g_i with g_i x_0 = x_i. Used to check that the choice of
/// g_i within its coset g_i H does not matter.
Attribute attr_via_element(SpaceTag space, const RigidMotion& g_i, const HPoint& x_j);

/// Draws random pairs and random stabilizer elements h and returns the max
/// deviation between attributes computed with g_i and with g_i h.
double stabilizer_invariance_check(SpaceTag space, std::size_t samples, std::uint64_t seed,
                                   int dim = 3);

/// A random point of the kind used by `space` (positions ~ N(0, scale^2)).
HPoint random_point(SpaceTag space, std::mt19937_64& rng, int dim = 3, double scale = 1.0);

}  // namespace ponita::attributes
