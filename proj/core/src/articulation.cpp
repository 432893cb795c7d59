#include "mfk/articulation.hpp"

#include <cmath>

#include "mfk/lm.hpp"
#include "mfk/rigid.hpp"

namespace mfk {

namespace {

constexpr double kDeg = M_PI / 180.0;

RigidTransform relative_motion(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  MarkerCorrespondence c;
  c.canonical = from;
  c.observed = to;
  return kabsch(c);
}

Vec3 centroid(const PartObservationSet& obs) {
  Vec3 c = Vec3::Zero();
  std::size_t n = 0;
  for (const auto& state : obs.states) {
    for (const auto& p : state) {
      c += p;
      ++n;
    }
  }
  return c / static_cast<double>(n);
}

}  // namespace

void JointSpec::validate() const {
  if (std::abs(axis.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "joint axis must be unit length");
  }
  if ((kind == JointKind::Revolute) != pivot.has_value()) {
    throw Error(ErrorCode::InvalidArgument, "pivot present iff joint is revolute");
  }
}

void PartObservationSet::validate() const {
  if (states.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "need >=2 observed states");
  }
  const std::size_t n = states.front().size();
  if (n < 3) {
    throw Error(ErrorCode::InvalidArgument, "need >=3 corners per state");
  }
  for (const auto& s : states) {
    if (s.size() != n) {
      throw Error(ErrorCode::LengthMismatch, "corner count differs across states");
    }
  }
}

JointSpec fit_sliding(const PartObservationSet& obs) {
  obs.validate();
  const std::size_t ns = obs.states.size();

  double max_disp = 0.0;
  for (std::size_t t = 0; t < ns; ++t) {
    for (std::size_t u = t + 1; u < ns; ++u) {
      for (std::size_t i = 0; i < obs.states[t].size(); ++i) {
        max_disp = std::max(max_disp, (obs.states[u][i] - obs.states[t][i]).norm());
      }
    }
  }
  if (max_disp < 1e-3) {
    throw Error(ErrorCode::NoDisplacement, "max corner displacement below 1 mm");
  }

  for (std::size_t t = 0; t < ns; ++t) {
    for (std::size_t u = t + 1; u < ns; ++u) {
      const RigidTransform rel = relative_motion(obs.states[t], obs.states[u]);
      if (rotation_angle(rel) >= 0.5 * kDeg) {
        throw Error(ErrorCode::RotationDetected, "states are not related by pure translation");
      }
    }
  }

  Vec3 mean = Vec3::Zero();
  for (std::size_t t = 0; t < ns; ++t) {
    for (std::size_t u = t + 1; u < ns; ++u) {
      for (std::size_t i = 0; i < obs.states[t].size(); ++i) {
        mean += obs.states[u][i] - obs.states[t][i];
      }
    }
  }
  const double norm = mean.norm();
  if (norm < 1e-9) {
    throw Error(ErrorCode::NoDisplacement, "displacements cancel; no stable direction");
  }

  JointSpec out;
  out.kind = JointKind::Sliding;
  out.axis = mean / norm;
  return out;
}

namespace {

struct PairList {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (later, earlier)
};

PairList all_pairs(std::size_t n) {
  PairList p;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t u = t + 1; u < n; ++u) p.pairs.push_back({u, t});
  return p;
}

}  // namespace

RevoluteFit fit_revolute(const PartObservationSet& obs) {
  obs.validate();
  const std::size_t ns = obs.states.size();
  const std::size_t nc = obs.states.front().size();

  // relative motions vs the first state drive the initialization
  std::vector<RigidTransform> rel0(ns);
  rel0[0] = RigidTransform::identity();
  double best_angle = 0.0;
  std::size_t best_t = 0, best_u = 0;
  for (std::size_t t = 1; t < ns; ++t) rel0[t] = relative_motion(obs.states[0], obs.states[t]);
  for (std::size_t t = 0; t < ns; ++t) {
    for (std::size_t u = t + 1; u < ns; ++u) {
      const double a = rotation_angle(relative_motion(obs.states[t], obs.states[u]));
      if (a > best_angle) {
        best_angle = a;
        best_t = t;
        best_u = u;
      }
    }
  }
  if (best_angle < 2.0 * kDeg) {
    throw Error(ErrorCode::InsufficientRotation, "max relative rotation below 2 deg");
  }

  const RigidTransform widest = relative_motion(obs.states[best_t], obs.states[best_u]);
  Eigen::AngleAxisd widest_aa(widest.rotation);
  Vec3 axis = widest_aa.axis();

  // pivot: stacked (I - R_rel) p = t_rel over all pairs, min-norm lsq; the
  // axis direction is unobservable and fixed by the gauge below
  const PairList pl = all_pairs(ns);
  Eigen::MatrixXd a(3 * pl.pairs.size(), 3);
  Eigen::VectorXd b(3 * pl.pairs.size());
  for (std::size_t k = 0; k < pl.pairs.size(); ++k) {
    const auto [u, t] = pl.pairs[k];
    const RigidTransform rel = relative_motion(obs.states[t], obs.states[u]);
    a.block<3, 3>(3 * k, 0) = Mat3::Identity() - rel.rotation_matrix();
    b.segment<3>(3 * k) = rel.translation;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-6);
  Vec3 pivot = svd.solve(b);

  // per-state angle init: twist of the relative rotation about the axis
  std::vector<double> angles(ns, 0.0);
  for (std::size_t t = 1; t < ns; ++t) {
    const Quat q = rel0[t].rotation;
    const double proj = q.vec().dot(axis);
    angles[t] = 2.0 * std::atan2(proj, q.w());
  }

  // joint refinement over axis, pivot, angles[1..]
  Eigen::VectorXd x(6 + ns - 1);
  x.segment<3>(0) = axis;
  x.segment<3>(3) = pivot;
  for (std::size_t t = 1; t < ns; ++t) x[6 + t - 1] = angles[t];

  auto residuals = [&](const Eigen::VectorXd& v) {
    const Vec3 ax = v.segment<3>(0).normalized();
    const Vec3 pv = v.segment<3>(3);
    Eigen::VectorXd r(3 * pl.pairs.size() * nc);
    std::size_t row = 0;
    for (const auto& [u, t] : pl.pairs) {
      const double su = u == 0 ? 0.0 : v[6 + u - 1];
      const double st = t == 0 ? 0.0 : v[6 + t - 1];
      const Mat3 rot = Eigen::AngleAxisd(su - st, ax).toRotationMatrix();
      for (std::size_t i = 0; i < nc; ++i) {
        const Vec3 moved = rot * (obs.states[t][i] - pv) + pv;
        r.segment<3>(row) = obs.states[u][i] - moved;
        row += 3;
      }
    }
    return r;
  };

  LmOptions opt;
  opt.max_iterations = 200;
  opt.gradient_tol = 1e-12;
  const LmResult res = lm_minimize(residuals, x, opt);
  if (res.gradient_norm > 1e-6) {
    throw Error(ErrorCode::NonConvergence, "revolute fit gradient above 1e-6 at iteration cap");
  }

  RevoluteFit out;
  out.objective = 2.0 * res.cost;
  Vec3 fit_axis = res.x.segment<3>(0).normalized();
  Vec3 fit_pivot = res.x.segment<3>(3);
  out.states.assign(ns, 0.0);
  for (std::size_t t = 1; t < ns; ++t) out.states[t] = res.x[6 + t - 1];

  // sign convention: first motion away from the initial state is positive
  for (std::size_t t = 1; t < ns; ++t) {
    if (std::abs(out.states[t]) > 1e-12) {
      if (out.states[t] < 0.0) {
        fit_axis = -fit_axis;
        for (auto& s : out.states) s = -s;
      }
      break;
    }
  }

  // gauge: pivot moved to the axis point nearest the corner centroid
  const Vec3 c = centroid(obs);
  fit_pivot += fit_axis * fit_axis.dot(c - fit_pivot);

  out.joint.kind = JointKind::Revolute;
  out.joint.axis = fit_axis;
  out.joint.pivot = fit_pivot;
  out.joint.validate();
  return out;
}

RigidTransform joint_transform(const JointSpec& joint, double s) {
  joint.validate();
  if (joint.kind == JointKind::Sliding) {
    return RigidTransform(Quat::Identity(), s * joint.axis);
  }
  const Mat3 r = Eigen::AngleAxisd(s, joint.axis).toRotationMatrix();
  return RigidTransform(Quat(r), *joint.pivot - r * *joint.pivot);
}

PartStateResult part_state(const RigidTransform& base_pose, const RigidTransform& part_pose,
                           const JointSpec& joint, const PartStateOptions& opt) {
  joint.validate();
  const RigidTransform rel = compose(inverse(base_pose), part_pose);

  PartStateResult out;
  if (joint.kind == JointKind::Sliding) {
    out.value = rel.translation.dot(joint.axis);
  } else {
    // twist of the relative rotation about the joint axis
    const Quat q = rel.rotation;
    const double proj = q.vec().dot(joint.axis);
    out.value = 2.0 * std::atan2(proj, q.w());
    if (out.value > M_PI) out.value -= 2.0 * M_PI;
    if (out.value <= -M_PI) out.value += 2.0 * M_PI;
  }

  const RigidTransform unexplained = compose(inverse(joint_transform(joint, out.value)), rel);
  out.residual_rotation = rotation_angle(unexplained);
  out.residual_translation = unexplained.translation.norm();
  if (out.residual_rotation > opt.rotation_tol ||
      out.residual_translation > opt.translation_tol) {
    throw Error(ErrorCode::ModelViolation, "part motion not explained by the fitted joint");
  }
  return out;
}

}  // namespace mfk
