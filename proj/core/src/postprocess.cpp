#include "mfk/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfk/errors.hpp"

namespace mfk {

void TrackGap::validate(std::size_t frames) const {
  if (t0 < 0 || t1 < t0 - 1 || t1 >= static_cast<std::int64_t>(frames)) {
    throw Error(ErrorCode::InvalidArgument, "gap [" + std::to_string(t0) + ", " +
                                                std::to_string(t1) +
                                                "] out of range");
  }
}

double marker_confidence(int n_views, double rms_px) {
  if (n_views <= 0) return 0.0;
  const double views = static_cast<double>(n_views);
  return views / (views + 3.0) / (1.0 + std::max(0.0, rms_px));
}

RigidTransform blend_pose(const RigidTransform& a, const RigidTransform& b,
                          double alpha) {
  RigidTransform out;
  out.translation = (1.0 - alpha) * a.translation + alpha * b.translation;
  out.rotation = a.rotation.slerp(alpha, b.rotation);
  return out;
}

namespace {

// weighted chordal mean with signs aligned to the heaviest sample
Quat mean_quat(const std::vector<Quat>& qs, const std::vector<double>& ws) {
  std::size_t heaviest = 0;
  for (std::size_t i = 1; i < ws.size(); ++i) {
    if (ws[i] > ws[heaviest]) heaviest = i;
  }
  Eigen::Vector4d acc = Eigen::Vector4d::Zero();
  const Quat& ref = qs[heaviest];
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const double sign = ref.coeffs().dot(qs[i].coeffs()) < 0.0 ? -1.0 : 1.0;
    acc += sign * ws[i] * qs[i].coeffs();
  }
  Quat out;
  out.coeffs() = acc;
  out.normalize();
  return out;
}

}  // namespace

FusedWrist fuse_wrist(const std::vector<std::optional<RigidTransform>>& marker,
                      const std::vector<double>& confidence,
                      const std::vector<RigidTransform>& mocap,
                      const WristFusionOptions& options) {
  const std::size_t n = mocap.size();
  if (marker.size() != n || confidence.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "stream lengths differ");
  }
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty streams");
  if (options.max_smoothing_radius < 0) {
    throw Error(ErrorCode::InvalidArgument, "negative smoothing radius");
  }

  std::vector<double> conf(n, 0.0);
  std::vector<std::int64_t> anchors;
  for (std::size_t t = 0; t < n; ++t) {
    if (marker[t].has_value()) {
      conf[t] = std::clamp(confidence[t], 0.0, 1.0);
    }
    if (conf[t] > 0.0) anchors.push_back(static_cast<std::int64_t>(t));
  }

  FusedWrist out;
  out.poses.resize(n);
  out.offsets_weight.assign(n, 0.0);
  if (anchors.empty()) {
    out.poses = mocap;
    out.no_anchor = true;
    return out;
  }

  // world-frame corrections at anchors
  std::vector<RigidTransform> offset(n);
  for (const auto a : anchors) {
    const auto t = static_cast<std::size_t>(a);
    offset[t] = compose(*marker[t], inverse(mocap[t]));
  }

  for (std::size_t t = 0; t < n; ++t) {
    const auto ti = static_cast<std::int64_t>(t);
    const double c = conf[t];
    const int radius = static_cast<int>(
        std::lround(options.max_smoothing_radius * (1.0 - c)));

    std::vector<Quat> qs;
    std::vector<double> ws;
    Vec3 tr = Vec3::Zero();
    double total = 0.0;
    const auto lo = std::lower_bound(anchors.begin(), anchors.end(), ti - radius);
    for (auto it = lo; it != anchors.end() && *it <= ti + radius; ++it) {
      const auto s = static_cast<std::size_t>(*it);
      const double kernel = 1.0 - std::abs(static_cast<double>(*it - ti)) /
                                      static_cast<double>(radius + 1);
      const double w = conf[s] * kernel;
      if (w <= 0.0) continue;
      qs.push_back(offset[s].rotation);
      ws.push_back(w);
      tr += w * offset[s].translation;
      total += w;
    }

    RigidTransform estimate;
    if (total > 0.0) {
      estimate.translation = tr / total;
      estimate.rotation = mean_quat(qs, ws);
    } else {
      // hold the nearest anchored correction rigidly
      const auto it = std::lower_bound(anchors.begin(), anchors.end(), ti);
      std::int64_t nearest;
      if (it == anchors.end()) {
        nearest = anchors.back();
        out.no_anchor = true;  // untracked run reaches the sequence end
      } else if (it == anchors.begin()) {
        nearest = anchors.front();
        if (*it != ti) out.no_anchor = true;
      } else {
        const std::int64_t after = *it, before = *(it - 1);
        nearest = (after - ti) < (ti - before) ? after : before;
      }
      estimate = offset[static_cast<std::size_t>(nearest)];
    }
    out.offsets_weight[t] = total;
    out.poses[t] = compose(estimate, mocap[t]);
  }
  return out;
}

GapFill fill_object_gap(const TrackGap& gap,
                        const std::vector<std::vector<RigidTransform>>& joints,
                        const std::vector<std::optional<RigidTransform>>& object,
                        const MeshDistanceGrid& surface,
                        const GapFillOptions& options) {
  const std::size_t n = object.size();
  gap.validate(n);
  if (joints.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "joint stream length differs");
  }
  GapFill out;
  if (gap.length() == 0) return out;

  const std::int64_t b0 = gap.t0 - 1, b1 = gap.t1 + 1;
  const bool has0 = b0 >= 0 && object[static_cast<std::size_t>(b0)].has_value();
  const bool has1 =
      b1 < static_cast<std::int64_t>(n) && object[static_cast<std::size_t>(b1)].has_value();
  if (!has0 && !has1) {
    throw Error(ErrorCode::MissingBoundary, "no boundary pose on either side");
  }
  out.no_anchor = !(has0 && has1);

  const auto closest_joint = [&](std::int64_t frame) -> std::pair<int, double> {
    const auto f = static_cast<std::size_t>(frame);
    const auto& pose = *object[f];
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < joints[f].size(); ++j) {
      const double d = surface.distance(joints[f][j].translation, pose);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    return {best, best_d};
  };

  int joint = -1;
  if (has0 && has1) {
    const auto [j0, d0] = closest_joint(b0);
    const auto [j1, d1] = closest_joint(b1);
    if (j0 >= 0 && j0 == j1 && d0 <= options.proximity_radius &&
        d1 <= options.proximity_radius) {
      joint = j0;
    }
  } else {
    const auto [j, d] = closest_joint(has0 ? b0 : b1);
    if (j >= 0 && d <= options.proximity_radius) joint = j;
  }

  if (joint < 0) {
    out.method = FillMethod::Interpolation;
    out.no_nearby_joint = true;
    if (has0 && has1) {
      out.poses = baseline_interpolate(gap, object);
    } else {
      const auto& held = *object[static_cast<std::size_t>(has0 ? b0 : b1)];
      out.poses.assign(static_cast<std::size_t>(gap.length()), held);
    }
    return out;
  }

  out.method = FillMethod::JointAttachment;
  out.joint = joint;
  const auto ju = static_cast<std::size_t>(joint);
  std::optional<RigidTransform> rel0, rel1;
  if (has0) {
    rel0 = compose(inverse(joints[static_cast<std::size_t>(b0)][ju]),
                   *object[static_cast<std::size_t>(b0)]);
  }
  if (has1) {
    rel1 = compose(inverse(joints[static_cast<std::size_t>(b1)][ju]),
                   *object[static_cast<std::size_t>(b1)]);
  }
  out.poses.reserve(static_cast<std::size_t>(gap.length()));
  for (std::int64_t t = gap.t0; t <= gap.t1; ++t) {
    RigidTransform rel;
    if (rel0 && rel1) {
      const double alpha = static_cast<double>(t - b0) / static_cast<double>(b1 - b0);
      rel = blend_pose(*rel0, *rel1, alpha);
    } else {
      rel = rel0 ? *rel0 : *rel1;
    }
    out.poses.push_back(compose(joints[static_cast<std::size_t>(t)][ju], rel));
  }
  return out;
}

std::vector<RigidTransform> baseline_interpolate(
    const TrackGap& gap, const std::vector<std::optional<RigidTransform>>& object) {
  gap.validate(object.size());
  std::vector<RigidTransform> out;
  if (gap.length() == 0) return out;
  const std::int64_t b0 = gap.t0 - 1, b1 = gap.t1 + 1;
  if (b0 < 0 || !object[static_cast<std::size_t>(b0)].has_value()) {
    throw Error(ErrorCode::MissingBoundary, "missing pose before gap");
  }
  if (b1 >= static_cast<std::int64_t>(object.size()) ||
      !object[static_cast<std::size_t>(b1)].has_value()) {
    throw Error(ErrorCode::MissingBoundary, "missing pose after gap");
  }
  const auto& p0 = *object[static_cast<std::size_t>(b0)];
  const auto& p1 = *object[static_cast<std::size_t>(b1)];
  out.reserve(static_cast<std::size_t>(gap.length()));
  for (std::int64_t t = gap.t0; t <= gap.t1; ++t) {
    const double alpha = static_cast<double>(t - b0) / static_cast<double>(b1 - b0);
    out.push_back(blend_pose(p0, p1, alpha));
  }
  return out;
}

std::vector<double> jerk_profile(const std::vector<Vec3>& positions, double rate) {
  if (positions.size() < 4) {
    throw Error(ErrorCode::TooShort, "need at least 4 frames");
  }
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "rate must be positive");
  std::vector<double> out;
  if (positions.size() < 5) return out;
  const double scale = rate * rate * rate / 2.0;
  out.reserve(positions.size() - 4);
  for (std::size_t t = 2; t + 2 < positions.size(); ++t) {
    const Vec3 d = positions[t + 2] - 2.0 * positions[t + 1] +
                   2.0 * positions[t - 1] - positions[t - 2];
    out.push_back(d.norm() * scale);
  }
  return out;
}

std::vector<DropRecoverRow> drop_and_recover(
    const std::vector<std::vector<RigidTransform>>& joints,
    const std::vector<RigidTransform>& object, const MeshDistanceGrid& surface,
    const std::vector<std::size_t>& windows, const GapFillOptions& options) {
  const std::size_t n = object.size();
  if (joints.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "joint stream length differs");
  }
  if (windows.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no gap windows given");
  }
  const std::size_t w_max = *std::max_element(windows.begin(), windows.end());
  if (w_max == 0 || n < w_max + 2) {
    throw Error(ErrorCode::InvalidArgument, "stream too short for widest window");
  }

  std::vector<std::optional<RigidTransform>> working(object.begin(), object.end());
  std::vector<DropRecoverRow> rows;
  rows.reserve(windows.size());
  for (const auto w : windows) {
    DropRecoverRow row;
    row.window = w;
    int cases = 0;
    for (const double fraction : {0.25, 0.5, 0.75}) {
      const auto center = static_cast<std::int64_t>(fraction * static_cast<double>(n));
      TrackGap gap;
      gap.t0 = center - static_cast<std::int64_t>(w) / 2;
      gap.t1 = gap.t0 + static_cast<std::int64_t>(w) - 1;
      if (gap.t0 < 1 || gap.t1 + 1 >= static_cast<std::int64_t>(n)) continue;
      for (std::int64_t t = gap.t0; t <= gap.t1; ++t) {
        working[static_cast<std::size_t>(t)].reset();
      }
      const auto fill = fill_object_gap(gap, joints, working, surface, options);
      const auto base = baseline_interpolate(gap, working);
      for (std::int64_t t = gap.t0; t <= gap.t1; ++t) {
        const auto k = static_cast<std::size_t>(t - gap.t0);
        const auto& truth = object[static_cast<std::size_t>(t)];
        row.fill_translation += (fill.poses[k].translation - truth.translation).norm();
        row.fill_rotation += angular_distance(fill.poses[k], truth);
        row.baseline_translation +=
            (base[k].translation - truth.translation).norm();
        row.baseline_rotation += angular_distance(base[k], truth);
      }
      for (std::int64_t t = gap.t0; t <= gap.t1; ++t) {
        working[static_cast<std::size_t>(t)] = object[static_cast<std::size_t>(t)];
      }
      ++cases;
    }
    if (cases == 0) {
      throw Error(ErrorCode::InvalidArgument, "no gap placement fits the stream");
    }
    const double denom = static_cast<double>(cases) * static_cast<double>(w);
    row.fill_translation /= denom;
    row.fill_rotation /= denom;
    row.baseline_translation /= denom;
    row.baseline_rotation /= denom;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mfk
