#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "stacknov/rng.hpp"

namespace stacknov {

enum class ObjectKind { Cube, Sphere, Cylinder, Capsule, SmallCube };

inline constexpr std::array<ObjectKind, 5> kAllKinds = {
    ObjectKind::Cube, ObjectKind::Sphere, ObjectKind::Cylinder,
    ObjectKind::Capsule, ObjectKind::SmallCube};

inline std::string kind_name(ObjectKind k) {
  switch (k) {
    case ObjectKind::Cube: return "cube";
    case ObjectKind::Sphere: return "sphere";
    case ObjectKind::Cylinder: return "cylinder";
    case ObjectKind::Capsule: return "capsule";
    case ObjectKind::SmallCube: return "small_cube";
  }
  throw std::logic_error("unknown ObjectKind");
}

inline ObjectKind kind_from_name(const std::string& name) {
  for (ObjectKind k : kAllKinds)
    if (kind_name(k) == name) return k;
  throw std::invalid_argument("unknown object kind: " + name);
}

// Local axes / planes of symmetry. `all` subsumes the individual flags.
struct AxisSet {
  bool all = false;
  bool x = false, y = false, z = false;
  static AxisSet every() { return {true, true, true, true}; }
  static AxisSet only_y() { return {false, false, true, false}; }
};

struct PlaneSet {
  bool all = false;
  bool xy = false, xz = false, yz = false;
  static PlaneSet every() { return {true, true, true, true}; }
  static PlaneSet xy_yz() { return {false, true, false, true}; }
};

enum class ContactClass { Face, Line, Point };

// Euler angles, intrinsic X-then-Y-then-Z. R = Rx(x) * Ry(y) * Rz(z).
struct Orientation {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();

  Eigen::Matrix3d matrix() const {
    return (Eigen::AngleAxisd(rotation.x(), Eigen::Vector3d::UnitX()) *
            Eigen::AngleAxisd(rotation.y(), Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(rotation.z(), Eigen::Vector3d::UnitZ()))
        .toRotationMatrix();
  }

  // World-space direction of the object's local +Y axis.
  Eigen::Vector3d local_y_world() const {
    return matrix() * Eigen::Vector3d::UnitY();
  }
};

// Angle in [0, pi] between world +Y and the rotated local +Y axis.
inline double upright_offset(const Eigen::Vector3d& euler) {
  Orientation o{euler};
  double c = o.local_y_world().y();
  return std::acos(std::clamp(c, -1.0, 1.0));
}

inline double upright_offset(const Orientation& o) {
  return upright_offset(o.rotation);
}

struct ObjectSpec {
  ObjectKind kind = ObjectKind::Cube;
  Eigen::Vector3d half_extents = Eigen::Vector3d::Constant(0.5);
  AxisSet rotat_sym = AxisSet::every();
  PlaneSet refl_sym = PlaneSet::every();

  // s = destination cube edge; every theme shares cube's bounding size except
  // small cube, whose edge gives exactly one quarter of cube's volume.
  static ObjectSpec make(ObjectKind kind, double s = 1.0) {
    ObjectSpec spec;
    spec.kind = kind;
    switch (kind) {
      case ObjectKind::Cube:
        spec.half_extents = Eigen::Vector3d::Constant(s / 2);
        break;
      case ObjectKind::Sphere:
        spec.half_extents = Eigen::Vector3d::Constant(s / 2);
        break;
      case ObjectKind::Cylinder:
        spec.half_extents = Eigen::Vector3d(s / 2, s / 2, s / 2);
        spec.rotat_sym = AxisSet::only_y();
        spec.refl_sym = PlaneSet::xy_yz();
        break;
      case ObjectKind::Capsule:
        // Cylinder of radius s/4 with hemispherical caps, total height s.
        spec.half_extents = Eigen::Vector3d(s / 4, s / 2, s / 4);
        spec.rotat_sym = AxisSet::only_y();
        spec.refl_sym = PlaneSet::xy_yz();
        break;
      case ObjectKind::SmallCube:
        spec.half_extents =
            Eigen::Vector3d::Constant(s / 2 * std::pow(4.0, -1.0 / 3.0));
        break;
    }
    return spec;
  }

  // Initial pose: uniformly upright or horizontal, each with a random yaw.
  // Every object samples the same pose distribution (a sphere's pose is
  // mechanically irrelevant but is still logged); yawing the upright pose as
  // well keeps the logged start-rotation features structurally alike across
  // the two regimes instead of making them perfectly separable by a single
  // column.
  Orientation sample_orientation(Rng& rng) const {
    Orientation o;
    if (rng.coin())
      o.rotation = Eigen::Vector3d(0, rng.uniform(0, 2 * M_PI), 0);
    else
      o.rotation = Eigen::Vector3d(M_PI / 2, 0, rng.uniform(0, 2 * M_PI));
    return o;
  }

  // How the object meets the destination top face when placed bottom-down.
  // "Upright" means local Y within pi/4 of world Y (the orientation sampler
  // only produces upright or fully horizontal starts, so this is unambiguous).
  ContactClass contact_class(const Orientation& orient) const {
    bool upright = upright_offset(orient) < M_PI / 4;
    switch (kind) {
      case ObjectKind::Cube:
      case ObjectKind::SmallCube:
        return ContactClass::Face;
      case ObjectKind::Sphere:
        return ContactClass::Point;
      case ObjectKind::Cylinder:
        return upright ? ContactClass::Face : ContactClass::Line;
      case ObjectKind::Capsule:
        return upright ? ContactClass::Point : ContactClass::Line;
    }
    throw std::logic_error("unknown ObjectKind");
  }
};

// Direction of the post-placement release jitter. Fully symmetric objects get
// a uniform direction; objects with a single rotational axis (local Y) get a
// uniform direction in the plane perpendicular to that axis in world space.
// Release nudges are dominated by the lateral motion of the gripper, so the
// unconstrained direction distribution is biased toward the horizontal plane:
// the vertical component of a uniform draw is shrunk by this factor before
// renormalizing. Every unit direction remains reachable.
inline constexpr double kVerticalJitterScale = 0.35;

inline Eigen::Vector3d jitter_direction(const ObjectSpec& spec,
                                        const Orientation& orient, Rng& rng) {
  Eigen::Vector3d v = rng.unit_sphere();
  v.y() *= kVerticalJitterScale;
  v.normalize();
  if (spec.rotat_sym.all) return v;

  // Single rotational axis: the force component along the axis is inert (the
  // object is free to spin about it), so the direction is the raw draw
  // projected onto the perpendicular plane and renormalized. A draw almost
  // parallel to the axis falls back to a fixed perpendicular direction.
  Eigen::Vector3d axis = orient.local_y_world().normalized();
  Eigen::Vector3d planar = v - v.dot(axis) * axis;
  if (planar.norm() < 1e-9)
    planar = axis.unitOrthogonal();
  return planar.normalized();
}

}  // namespace stacknov
