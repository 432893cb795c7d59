#include "mfk/skeleton.hpp"

#include <cmath>

namespace mfk {

void BodySkeleton::validate() const {
  if (joints.size() != kJoints) {
    throw Error(ErrorCode::DimensionMismatch, "body skeleton must have 23 joints");
  }
  if (joints[0].parent != -1) {
    throw Error(ErrorCode::InvalidArgument, "joint 0 must be the root");
  }
  for (std::size_t j = 1; j < joints.size(); ++j) {
    if (joints[j].parent < 0 || joints[j].parent >= static_cast<int>(j)) {
      throw Error(ErrorCode::InvalidArgument, "joints must be topologically ordered");
    }
    if (!joints[j].offset.allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "joint offset not finite");
    }
  }
  for (const auto& m : markers) {
    if (m.joint < 0 || m.joint >= static_cast<int>(joints.size())) {
      throw Error(ErrorCode::InvalidArgument, "marker attached to unknown joint");
    }
  }
}

int BodySkeleton::joint_index(const std::string& name) const {
  for (std::size_t j = 0; j < joints.size(); ++j) {
    if (joints[j].name == name) return static_cast<int>(j);
  }
  return -1;
}

namespace {

// square fiducial of the given edge at a local center, tilted by an
// axis-angle so placements are never coplanar across one part
std::array<Vec3, 4> flat_marker(const Vec3& center, const Vec3& tilt, double edge = 0.04) {
  const Mat3 r = rodrigues(tilt);
  const double h = edge / 2.0;
  return {center + r * Vec3(-h, -h, 0), center + r * Vec3(h, -h, 0),
          center + r * Vec3(h, h, 0), center + r * Vec3(-h, h, 0)};
}

void add_part_markers(BodySkeleton& s, const std::string& joint, int count,
                      const Vec3& around, double spread) {
  const int j = s.joint_index(joint);
  for (int m = 0; m < count; ++m) {
    const double phi = 2.0 * M_PI * m / count;
    const Vec3 center = around + spread * Vec3(0.3 * std::cos(phi), std::sin(phi),
                                               0.5 * std::cos(phi + 0.7));
    const Vec3 tilt(0.6 * std::sin(phi), 0.6 * std::cos(phi), 0.3 * std::sin(2 * phi));
    s.markers.push_back({j, flat_marker(center, tilt)});
  }
}

}  // namespace

BodySkeleton BodySkeleton::standard() {
  BodySkeleton s;
  auto add = [&s](const std::string& name, const std::string& parent, const Vec3& off) {
    const int p = parent.empty() ? -1 : s.joint_index(parent);
    s.joints.push_back({name, p, off});
  };
  add("pelvis", "", {0, 0, 0});
  add("spine1", "pelvis", {0, 0, 0.10});
  add("spine2", "spine1", {0, 0, 0.11});
  add("spine3", "spine2", {0, 0, 0.11});
  add("chest", "spine3", {0, 0, 0.12});
  add("neck", "chest", {0, 0, 0.10});
  add("head", "neck", {0, 0, 0.09});
  add("right_shoulder", "chest", {0, -0.08, 0.10});
  add("right_upper_arm", "right_shoulder", {0, -0.13, 0});
  add("right_forearm", "right_upper_arm", {0, -0.28, 0});
  add("right_hand", "right_forearm", {0, -0.26, 0});
  add("left_shoulder", "chest", {0, 0.08, 0.10});
  add("left_upper_arm", "left_shoulder", {0, 0.13, 0});
  add("left_forearm", "left_upper_arm", {0, 0.28, 0});
  add("left_hand", "left_forearm", {0, 0.26, 0});
  // foot and toe joints sit at sole level so the ground band can hold both
  add("right_upper_leg", "pelvis", {0, -0.09, -0.02});
  add("right_lower_leg", "right_upper_leg", {0, 0, -0.44});
  add("right_foot", "right_lower_leg", {0, 0, -0.46});
  add("right_toe", "right_foot", {0.16, 0, 0});
  add("left_upper_leg", "pelvis", {0, 0.09, -0.02});
  add("left_lower_leg", "left_upper_leg", {0, 0, -0.44});
  add("left_foot", "left_lower_leg", {0, 0, -0.46});
  add("left_toe", "left_foot", {0.16, 0, 0});

  add_part_markers(s, "chest", 4, {0.05, 0, 0.05}, 0.08);
  add_part_markers(s, "right_hand", 3, {0.02, -0.03, 0.02}, 0.03);
  add_part_markers(s, "left_hand", 3, {0.02, 0.03, 0.02}, 0.03);
  add_part_markers(s, "right_upper_arm", 3, {0.03, -0.14, 0}, 0.04);
  add_part_markers(s, "left_upper_arm", 3, {0.03, 0.14, 0}, 0.04);
  add_part_markers(s, "right_forearm", 3, {0.02, -0.13, 0}, 0.035);
  add_part_markers(s, "left_forearm", 3, {0.02, 0.13, 0}, 0.035);
  add_part_markers(s, "right_upper_leg", 3, {0.05, 0, -0.22}, 0.05);
  add_part_markers(s, "left_upper_leg", 3, {0.05, 0, -0.22}, 0.05);
  add_part_markers(s, "right_lower_leg", 3, {0.04, 0, -0.22}, 0.04);
  add_part_markers(s, "left_lower_leg", 3, {0.04, 0, -0.22}, 0.04);

  s.validate();
  return s;
}

std::vector<std::string> BodySkeleton::ground_joint_names() {
  return {"right_foot", "right_toe", "left_foot", "left_toe"};
}

BodyFk fk_body(const BodySkeleton& skel, const Eigen::MatrixX3d& angles,
               const RigidTransform& root) {
  if (angles.rows() != static_cast<Eigen::Index>(skel.joints.size()) || angles.cols() != 3) {
    throw Error(ErrorCode::DimensionMismatch, "angle matrix must be joints x 3");
  }
  BodyFk out;
  out.joint_poses.resize(skel.joints.size());
  for (std::size_t j = 0; j < skel.joints.size(); ++j) {
    const RigidTransform& parent =
        skel.joints[j].parent < 0 ? root : out.joint_poses[skel.joints[j].parent];
    const RigidTransform local(Quat(rodrigues(angles.row(j).transpose())),
                               skel.joints[j].offset);
    out.joint_poses[j] = compose(parent, local);
  }
  out.marker_corners.resize(skel.markers.size());
  for (std::size_t m = 0; m < skel.markers.size(); ++m) {
    const RigidTransform& part = out.joint_poses[skel.markers[m].joint];
    for (int c = 0; c < 4; ++c) {
      out.marker_corners[m][c] = part.apply(skel.markers[m].corners[c]);
    }
  }
  return out;
}

void HandSkeleton::validate() const {
  if (segments.size() != kSegments ||
      scales.size() != static_cast<Eigen::Index>(segments.size()) ||
      offsets.rows() != static_cast<Eigen::Index>(segments.size())) {
    throw Error(ErrorCode::DimensionMismatch, "hand skeleton must have 20 segments");
  }
  for (std::size_t j = 1; j < segments.size(); ++j) {
    if (segments[j].parent < 0 || segments[j].parent >= static_cast<int>(j)) {
      throw Error(ErrorCode::InvalidArgument, "segments must be topologically ordered");
    }
  }
  constexpr double tol = 1e-12;
  for (Eigen::Index i = 0; i < scales.size(); ++i) {
    if (scales[i] < kScaleMin - tol || scales[i] > kScaleMax + tol) {
      throw Error(ErrorCode::ConstraintViolation, "segment scale outside [0.8, 1.2]");
    }
  }
  if (offsets.cwiseAbs().maxCoeff() > kOffsetBound + tol) {
    throw Error(ErrorCode::ConstraintViolation, "segment offset above 0.01 m");
  }
}

namespace {

void add_finger(std::vector<HandSegment>& segs, const std::string& finger,
                const std::vector<Vec3>& chain) {
  int parent = 0;  // wrist
  for (std::size_t i = 0; i < chain.size(); ++i) {
    segs.push_back({finger + "_" + std::to_string(i), parent, chain[i]});
    parent = static_cast<int>(segs.size()) - 1;
  }
}

}  // namespace

HandSkeleton HandSkeleton::standard(bool left) {
  HandSkeleton s;
  s.segments.push_back({"wrist", -1, {0, 0, 0}});
  add_finger(s.segments, "thumb",
             {{0.025, 0.030, -0.005}, {0.034, 0.020, 0.0}, {0.030, 0.014, 0.0}});
  add_finger(s.segments, "index",
             {{0.095, 0.025, 0.0}, {0.040, 0, 0}, {0.025, 0, 0}, {0.024, 0, 0}});
  add_finger(s.segments, "middle",
             {{0.098, 0.000, 0.0}, {0.044, 0, 0}, {0.028, 0, 0}, {0.026, 0, 0}});
  add_finger(s.segments, "ring",
             {{0.093, -0.022, 0.0}, {0.040, 0, 0}, {0.027, 0, 0}, {0.025, 0, 0}});
  add_finger(s.segments, "little",
             {{0.085, -0.042, 0.0}, {0.032, 0, 0}, {0.021, 0, 0}, {0.021, 0, 0}});
  if (left) {
    for (auto& seg : s.segments) seg.base_offset.y() = -seg.base_offset.y();
  }
  s.scales = Eigen::VectorXd::Ones(kSegments);
  s.offsets = Eigen::MatrixX3d::Zero(kSegments, 3);

  const double side = left ? -1.0 : 1.0;
  auto square = [side](const Vec3& c, const Vec3& tilt) {
    const Mat3 r = rodrigues(tilt);
    const double h = 0.015;
    std::array<Vec3, 4> out = {c + r * Vec3(-h, -h, 0), c + r * Vec3(h, -h, 0),
                               c + r * Vec3(h, h, 0), c + r * Vec3(-h, h, 0)};
    for (auto& p : out) p.y() *= side;
    return out;
  };
  s.wrist_markers[0] = square({0.010, 0.022, 0.018}, {0.3, 0.1, 0});
  s.wrist_markers[1] = square({0.012, -0.020, 0.016}, {-0.25, 0.15, 0.1});
  s.wrist_markers[2] = square({-0.030, 0.000, 0.022}, {0, -0.3, 0.2});

  s.validate();
  return s;
}

std::array<int, 5> HandSkeleton::fingertip_segments() {
  // wrist is 0; thumb occupies 1..3, then 4-segment chains
  return {3, 7, 11, 15, 19};
}

HandFk fk_hand(const HandSkeleton& skel, const Eigen::MatrixX3d& angles,
               const RigidTransform& root) {
  if (angles.rows() != static_cast<Eigen::Index>(skel.segments.size()) || angles.cols() != 3) {
    throw Error(ErrorCode::DimensionMismatch, "angle matrix must be segments x 3");
  }
  HandFk out;
  out.segment_poses.resize(skel.segments.size());
  for (std::size_t j = 0; j < skel.segments.size(); ++j) {
    const RigidTransform& parent =
        skel.segments[j].parent < 0 ? root : out.segment_poses[skel.segments[j].parent];
    const Vec3 offset =
        skel.scales[j] * skel.segments[j].base_offset + skel.offsets.row(j).transpose();
    const RigidTransform local(Quat(rodrigues(angles.row(j).transpose())), offset);
    out.segment_poses[j] = compose(parent, local);
  }
  const auto tips = HandSkeleton::fingertip_segments();
  for (std::size_t f = 0; f < tips.size(); ++f) {
    out.fingertips[f] = out.segment_poses[tips[f]].translation;
  }
  return out;
}

}  // namespace mfk
