#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "stacknov/object.hpp"
#include "stacknov/rng.hpp"

namespace stacknov {

struct RewardSpec {
  double miss = -1.0;
  double touch = 9.0;
  double stack_base = 1000.0;
  double stack_decrement = 100.0;
  int max_attempts = 10;

  // Reward for success on 1-based attempt k.
  double stack_reward(int attempt) const {
    return stack_base - stack_decrement * (attempt - 1);
  }
};

// Environment knobs. The kappa/epsilon constants are calibration targets, not
// paper values; they are echoed into every run's resolved-config output.
struct EnvConfig {
  double n = 1000.0;                       // action space is [0,n]^2
  Eigen::Vector2d m{500.0, 500.0};         // optimal action coordinates
  double s = 1.0;                          // destination cube edge
  double jitter_max = 1.0;                 // J: jitter magnitude ~ U[0, J]

  // Displacement gains, in units of s per unit of jitter (J = 1 default).
  double kappa_slide = 1.3;                // face contact slide
  double kappa_roll_cylinder = 9.0;       // line contact roll
  double kappa_roll_capsule = 20.0;        // rolls easier than cylinder
  double kappa_roll_point = 30.0;          // point contact: free rolling
  double rest_radius = 3.0;                 // max resting distance, xs
  double cylinder_support_halfwidth = 0.5;  // line-contact tolerance, xs
  double capsule_support_halfwidth = 0.13;  // tightened line-contact tolerance
  double eps_roll = 0.004;                  // point-contact survival cutoff, xJ

  RewardSpec reward;

  void validate() const {
    if (n <= 0) throw std::invalid_argument("EnvConfig: n must be positive");
    for (int d = 0; d < 2; ++d)
      if (m[d] < 0 || m[d] > n)
        throw std::invalid_argument("EnvConfig: m out of [0,n]");
    if (jitter_max <= 0)
      throw std::invalid_argument("EnvConfig: jitter_max must be positive");
    if (kappa_roll_cylinder <= kappa_slide ||
        kappa_roll_capsule <= kappa_roll_cylinder ||
        kappa_roll_point <= kappa_roll_capsule)
      throw std::invalid_argument(
          "EnvConfig: need kappa_slide < kappa_roll_cylinder < "
          "kappa_roll_capsule < kappa_roll_point");
  }
};

struct Observation {
  int height = 1;                           // blocks in the stack, 1 or 2
  Eigen::Vector2d cog{0.0, 0.0};            // stack CoG (X,Z) rel. destination
};

enum class OutcomeClass { Missed, Touched, Stacked };

inline std::string outcome_name(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::Missed: return "missed";
    case OutcomeClass::Touched: return "touched";
    case OutcomeClass::Stacked: return "stacked";
  }
  throw std::logic_error("unknown OutcomeClass");
}

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  OutcomeClass outcome_class = OutcomeClass::Missed;
  Orientation post_orientation;
  double post_offset = 0.0;                 // radians from world upright
  Eigen::Vector3d jitter_applied = Eigen::Vector3d::Zero();
  int attempt = 0;                          // 1-based
  bool episode_done = false;
};

struct OracleResult {
  bool stable = false;
  Eigen::Vector2d final_offset{0.0, 0.0};
  Orientation final_orient;
};

namespace detail {

// Orientation after toppling off a face or line/point contact. Face-contact
// objects tip about the edge nearest the offset; round objects end horizontal.
inline Orientation toppled(const ObjectSpec& spec, const Orientation& orient,
                           const Eigen::Vector2d& offset) {
  Orientation out = orient;
  switch (spec.kind) {
    case ObjectKind::Cube:
    case ObjectKind::SmallCube: {
      if (std::abs(offset.x()) >= std::abs(offset.y()))
        out.rotation.z() += (offset.x() >= 0 ? -1 : 1) * M_PI / 2;
      else
        out.rotation.x() += (offset.y() >= 0 ? 1 : -1) * M_PI / 2;
      break;
    }
    case ObjectKind::Cylinder:
    case ObjectKind::Capsule: {
      if (upright_offset(orient) < M_PI / 4) out.rotation.x() += M_PI / 2;
      break;
    }
    case ObjectKind::Sphere:
      break;
  }
  return out;
}

}  // namespace detail

// Deterministic contact/stability resolution replacing full physics.
// Precondition: the theme footprint overlaps the destination top face.
inline OracleResult stability_oracle(const ObjectSpec& theme,
                                     const Orientation& orient,
                                     const Eigen::Vector2d& offset,
                                     const Eigen::Vector3d& jitter,
                                     const EnvConfig& cfg) {
  const double half = cfg.s / 2;
  OracleResult res;
  res.final_orient = orient;
  auto over_support = [&](const Eigen::Vector2d& off, double hx, double hz) {
    // Tie-break: CoG exactly on the support edge counts as unstable.
    return std::abs(off.x()) < hx && std::abs(off.y()) < hz;
  };

  switch (theme.contact_class(orient)) {
    case ContactClass::Face: {
      if (!over_support(offset, half, half)) {
        res.stable = false;
        res.final_offset = offset;
        break;
      }
      Eigen::Vector2d slid =
          offset + cfg.kappa_slide * Eigen::Vector2d(jitter.x(), jitter.z());
      res.stable = over_support(slid, half, half);
      res.final_offset = slid;
      break;
    }
    case ContactClass::Line: {
      // Contact line runs along the horizontal projection of local Y.
      Eigen::Vector3d axis3 = orient.local_y_world();
      Eigen::Vector2d line(axis3.x(), axis3.z());
      if (line.norm() < 1e-9) line = Eigen::Vector2d(1, 0);
      line.normalize();
      Eigen::Vector2d perp(-line.y(), line.x());

      double kappa_roll, h_perp;
      if (theme.kind == ObjectKind::Capsule) {
        kappa_roll = cfg.kappa_roll_capsule;
        h_perp = cfg.capsule_support_halfwidth * cfg.s;
      } else {
        kappa_roll = cfg.kappa_roll_cylinder;
        h_perp = cfg.cylinder_support_halfwidth * cfg.s;
      }

      auto contained = [&](const Eigen::Vector2d& off) {
        return std::abs(off.dot(line)) < half && std::abs(off.dot(perp)) < h_perp;
      };
      if (!contained(offset)) {
        res.stable = false;
        res.final_offset = offset;
        break;
      }
      Eigen::Vector2d jit_h(jitter.x(), jitter.z());
      double along = jit_h.dot(line);
      double across = jit_h.dot(perp);
      Eigen::Vector2d moved = offset + cfg.kappa_slide * along * line +
                              kappa_roll * across * perp;
      res.stable = contained(moved);
      res.final_offset = moved;
      break;
    }
    case ContactClass::Point: {
      res.stable = over_support(offset, half, half) &&
                   jitter.norm() <= cfg.eps_roll * cfg.jitter_max;
      // A dislodged point contact rolls freely in the direction it was
      // pushed; a surviving one has not moved at all.
      res.final_offset =
          res.stable ? offset
                     : Eigen::Vector2d(offset + cfg.kappa_roll_point *
                                                    Eigen::Vector2d(jitter.x(),
                                                                    jitter.z()));
      break;
    }
  }
  // A displaced theme cannot travel arbitrarily far: friction and the floor
  // around the destination stop it within the rest radius.
  double max_rest = cfg.rest_radius * cfg.s;
  if (!res.stable && res.final_offset.norm() > max_rest)
    res.final_offset *= max_rest / res.final_offset.norm();
  if (!res.stable) res.final_orient = detail::toppled(theme, orient, offset);
  return res;
}

// The stacking environment: place the theme on the destination cube at the
// offset selected by a 2D action, apply a symmetry-constrained release jitter,
// and resolve the result through the stability oracle.
// Randomness is counter-keyed by (episode, attempt) rather than consumed from
// one sequential stream: orientation and jitter direction are additionally
// salted by the theme kind, while the jitter magnitude schedule depends only
// on (seed, episode, attempt). Evaluating different themes under the same
// seed therefore applies the same release-force strengths at the same
// episode coordinates — a paired design (common random numbers) that makes
// cross-object comparisons reflect mechanism rather than sampling noise.
class StackEnv {
 public:
  StackEnv(EnvConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    cfg_.validate();
  }

  // Initial theme orientation, sampled per episode by the theme's symmetry.
  // Destination sits at the origin; observation is the lone destination block.
  Observation reset(const ObjectSpec& theme) {
    theme_ = theme;
    ++episode_;
    Rng rng(keyed_seed(seed_, kOrientStream, kind_salt(), episode_));
    start_orient_ = theme.sample_orientation(rng);
    attempt_ = 0;
    active_ = true;
    return Observation{};
  }

  StepOutcome step(const Eigen::Vector2d& action) {
    if (!active_)
      throw std::logic_error("StackEnv::step called on a terminated episode");
    for (int d = 0; d < 2; ++d)
      if (action[d] < 0 || action[d] > cfg_.n)
        throw std::invalid_argument("action outside [0,n]^2");
    ++attempt_;

    // |a_d - m_d| = n/2 maps to an offset of a full edge length.
    Eigen::Vector2d offset;
    for (int d = 0; d < 2; ++d)
      offset[d] = (action[d] - cfg_.m[d]) / cfg_.n * 2 * cfg_.s;

    // The direction stream is keyed by how the theme meets the destination
    // (face, line, or point) rather than by its kind: themes with the same
    // contact mode draw the same release directions at the same episode
    // coordinates, so their outcome sequences differ only through mechanism.
    std::uint64_t contact_salt =
        static_cast<std::uint64_t>(theme_.contact_class(start_orient_)) + 1;
    Rng dir_rng(keyed_seed(seed_, kDirStream, contact_salt, episode_, attempt_));
    Eigen::Vector3d dir = jitter_direction(theme_, start_orient_, dir_rng);
    // Magnitude is keyed by (episode, attempt) with no theme salt: every
    // theme sees the same release-force strength at the same episode
    // coordinates. The per-step marginal is Uniform[0, J].
    Rng mag_rng(keyed_seed(seed_, kMagStream, episode_, attempt_));
    double mag = mag_rng.uniform(0, cfg_.jitter_max);
    Eigen::Vector3d jitter = mag * dir;

    StepOutcome out;
    out.attempt = attempt_;
    out.jitter_applied = jitter;
    out.post_orientation = start_orient_;

    if (!overlaps_destination(offset)) {
      out.outcome_class = OutcomeClass::Missed;
      out.reward = cfg_.reward.miss;
      out.post_offset = upright_offset(start_orient_);
    } else {
      OracleResult res =
          stability_oracle(theme_, start_orient_, offset, jitter, cfg_);
      out.post_orientation = res.final_orient;
      out.post_offset = upright_offset(res.final_orient);
      if (res.stable) {
        out.outcome_class = OutcomeClass::Stacked;
        out.reward = cfg_.reward.stack_reward(attempt_);
        out.observation.height = 2;
        // Two equal-height blocks: stack CoG is halfway to the theme centre.
        out.observation.cog = res.final_offset / 2;
      } else {
        // Any unstable outcome that started over the destination touched it.
        // Only placements that never overlapped the destination footprint
        // count as misses. A tipped face or line contact ends up leaning
        // against the destination, so the observed scene CoG shifts toward
        // where it came to rest (rolls carry it much farther than slides). A
        // failed point contact rolls clear of the scene and is retrieved for
        // the next attempt, so the observation shows the destination alone.
        out.outcome_class = OutcomeClass::Touched;
        out.reward = cfg_.reward.touch;
        if (theme_.contact_class(start_orient_) != ContactClass::Point)
          out.observation.cog = res.final_offset / 2;
      }
    }

    if (out.outcome_class == OutcomeClass::Stacked ||
        attempt_ >= cfg_.reward.max_attempts) {
      active_ = false;
      out.episode_done = true;
    }
    return out;
  }

  const Orientation& start_orientation() const { return start_orient_; }
  const EnvConfig& config() const { return cfg_; }
  bool active() const { return active_; }
  int attempt() const { return attempt_; }

 private:
  // Per-axis footprint test against the destination top face.
  bool overlaps_destination(const Eigen::Vector2d& offset) const {
    const double half = cfg_.s / 2;
    Eigen::Vector2d fw = footprint_halfwidth();
    return std::abs(offset.x()) < half + fw.x() &&
           std::abs(offset.y()) < half + fw.y();
  }

  Eigen::Vector2d footprint_halfwidth() const {
    switch (theme_.contact_class(start_orient_)) {
      case ContactClass::Face:
        return {theme_.half_extents.x(), theme_.half_extents.z()};
      case ContactClass::Line: {
        Eigen::Vector3d axis3 = start_orient_.local_y_world();
        Eigen::Vector2d line(axis3.x(), axis3.z());
        if (line.norm() < 1e-9) line = Eigen::Vector2d(1, 0);
        line.normalize();
        double len = theme_.half_extents.y();
        return {std::abs(line.x()) * len, std::abs(line.y()) * len};
      }
      case ContactClass::Point:
        return {0.0, 0.0};
    }
    throw std::logic_error("unknown ContactClass");
  }

  std::uint64_t kind_salt() const {
    return static_cast<std::uint64_t>(theme_.kind) + 1;
  }

  static constexpr std::uint64_t kOrientStream = 0x6f7269656e74ull;
  static constexpr std::uint64_t kDirStream = 0x646972ull;
  static constexpr std::uint64_t kMagStream = 0x6d6167ull;

  EnvConfig cfg_;
  std::uint64_t seed_;
  ObjectSpec theme_;
  Orientation start_orient_;
  std::uint64_t episode_ = 0;
  int attempt_ = 0;
  bool active_ = false;
};

}  // namespace stacknov
