#include "mfk/generator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "mfk/errors.hpp"
#include "mfk/lm.hpp"
#include "mfk/mesh.hpp"
#include "mfk/postprocess.hpp"
#include "mfk/rigid.hpp"

namespace mfk {

void RigSpec::validate() const {
  if (cameras < 1 || radius <= 0.0 || ring_heights.empty() || focal_px <= 0.0 ||
      width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidSpec, "camera rig spec out of range");
  }
}

std::vector<CameraModel> make_rig(const RigSpec& spec) {
  spec.validate();
  const int rings = static_cast<int>(spec.ring_heights.size());
  const int per_ring = (spec.cameras + rings - 1) / rings;

  std::vector<CameraModel> rig;
  rig.reserve(spec.cameras);
  Mat3 k = Mat3::Identity();
  k(0, 0) = k(1, 1) = spec.focal_px;
  k(0, 2) = spec.width / 2.0;
  k(1, 2) = spec.height / 2.0;

  for (int i = 0; i < spec.cameras; ++i) {
    const int ring = i / per_ring;
    const int slot = i % per_ring;
    // rings are staggered by half a slot so columns of cameras never align
    const double phi = 2.0 * M_PI * (slot + 0.5 * ring) / per_ring;
    const Vec3 c(spec.radius * std::cos(phi), spec.radius * std::sin(phi),
                 spec.ring_heights[ring]);

    const Vec3 forward = (spec.look_at - c).normalized();
    Vec3 right = forward.cross(Vec3(0.0, 0.0, 1.0));
    if (right.norm() < 1e-9) {
      right = Vec3(1.0, 0.0, 0.0);
    } else {
      right.normalize();
    }
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();

    rig.emplace_back(i, k, RigidTransform(Quat(r), -(r * c)), spec.width, spec.height);
  }
  return rig;
}

SmoothSignal::SmoothSignal(Rng& rng, double amplitude, double max_frequency_hz,
                           int terms, double min_frequency_hz) {
  if (min_frequency_hz <= 0.0) min_frequency_hz = 0.15 * max_frequency_hz;
  min_frequency_hz = std::min(min_frequency_hz, max_frequency_hz);
  terms_.resize(static_cast<std::size_t>(std::max(1, terms)));
  double total = 0.0;
  for (auto& term : terms_) {
    term.amplitude = rng.uniform(0.4, 1.0);
    term.frequency = rng.uniform(min_frequency_hz, max_frequency_hz);
    term.phase = rng.uniform(0.0, 2.0 * M_PI);
    total += term.amplitude;
  }
  for (auto& term : terms_) term.amplitude *= amplitude / total;
}

double SmoothSignal::operator()(double t) const {
  double v = 0.0;
  for (const auto& term : terms_) {
    v += term.amplitude * std::sin(2.0 * M_PI * term.frequency * t + term.phase);
  }
  return v;
}

SmoothPose::SmoothPose(Rng& rng, const Vec3& center, double translation_amplitude,
                       double rotation_amplitude, double max_frequency_hz)
    : center_(center),
      tx_(rng, translation_amplitude, max_frequency_hz),
      ty_(rng, translation_amplitude, max_frequency_hz),
      tz_(rng, 0.6 * translation_amplitude, max_frequency_hz),
      rx_(rng, rotation_amplitude, max_frequency_hz),
      ry_(rng, rotation_amplitude, max_frequency_hz),
      rz_(rng, rotation_amplitude, max_frequency_hz) {}

RigidTransform SmoothPose::operator()(double t) const {
  const Vec3 rv(rx_(t), ry_(t), rz_(t));
  return RigidTransform(Quat(rodrigues(rv)),
                        center_ + Vec3(tx_(t), ty_(t), tz_(t)));
}

std::vector<CornerDetection> split_detections(const std::vector<DetectionRecord>& records) {
  std::vector<CornerDetection> out;
  out.reserve(records.size() * 4);
  for (const auto& r : records) {
    for (int c = 0; c < 4; ++c) {
      CornerDetection d;
      d.frame = static_cast<int>(r.frame);
      d.camera_id = r.camera_id;
      d.marker_id = r.marker_id;
      d.corner_index = c;
      d.pixel = r.corners[static_cast<std::size_t>(c)];
      out.push_back(d);
    }
  }
  return out;
}

namespace {

void sort_detections(std::vector<DetectionRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const DetectionRecord& a, const DetectionRecord& b) {
              return std::tie(a.frame, a.camera_id, a.marker_id) <
                     std::tie(b.frame, b.camera_id, b.marker_id);
            });
}

std::string hash_text(const std::ostringstream& text) { return config_hash_hex(text.str()); }

}  // namespace

void detect_square(int marker_id, const std::array<Vec3, 4>& corners, const Vec3& normal,
                   const std::vector<CameraModel>& rig, std::int64_t frame,
                   double noise_px, Rng& rng, std::vector<DetectionRecord>& out) {
  const Vec3 center =
      0.25 * (corners[0] + corners[1] + corners[2] + corners[3]);
  for (const auto& cam : rig) {
    if (normal.dot(cam.center() - center) <= 1e-9) continue;
    DetectionRecord rec;
    rec.frame = frame;
    rec.camera_id = cam.id;
    rec.marker_id = marker_id;
    bool ok = true;
    for (std::size_t c = 0; c < 4; ++c) {
      Vec2 px;
      try {
        px = cam.project(corners[c]);
      } catch (const Error&) {
        ok = false;
        break;
      }
      if (px.x() < 0.0 || px.x() > cam.width || px.y() < 0.0 || px.y() > cam.height) {
        ok = false;
        break;
      }
      if (noise_px > 0.0) {
        px += Vec2(rng.gaussian(0.0, noise_px), rng.gaussian(0.0, noise_px));
      }
      rec.corners[c] = px;
    }
    if (ok) out.push_back(rec);
  }
}

void detect_cube(const MarkerCube& cube, const RigidTransform& host_pose,
                 const std::vector<CameraModel>& rig, std::int64_t frame,
                 double noise_px, Rng& rng, std::vector<DetectionRecord>& out) {
  const RigidTransform cube_to_world = compose(host_pose, cube.mount);
  for (int face = 0; face < MarkerCube::kFaces; ++face) {
    std::array<Vec3, 4> corners;
    for (int c = 0; c < MarkerCube::kCornersPerFace; ++c) {
      corners[static_cast<std::size_t>(c)] =
          cube_to_world.apply(cube.corner_local(face, c));
    }
    const Vec3 normal = cube_to_world.rotation * cube.face_normal_local(face);
    detect_square(cube.id * MarkerCube::kFaces + face, corners, normal, rig, frame,
                  noise_px, rng, out);
  }
}

// --- object tracking ---

void TrackingSpec::validate() const {
  rig.validate();
  if (frames < 1 || camera_rate <= 0.0 || noise_px < 0.0 || cubes < 1 || cubes > 4) {
    throw Error(ErrorCode::InvalidSpec, "tracking spec out of range");
  }
}

TrackingScenario generate_object_tracking(const TrackingSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  TrackingScenario sc;
  sc.session.rig = make_rig(spec.rig);
  sc.session.camera_rate = spec.camera_rate;
  sc.session.mocap_rate = spec.camera_rate;

  const Vec3 half(0.15, 0.11, 0.08);
  const double edge = 0.06;
  ObjectSpec obj;
  obj.name = "crate";
  obj.mesh = make_box(2.0 * half);
  ObjectPart body;
  body.part = "body";
  body.kind = "fixed";

  const std::vector<RigidTransform> mounts = {
      RigidTransform(Quat::Identity(), Vec3(0.0, 0.0, half.z() + edge / 2)),
      RigidTransform(Quat(rodrigues(Vec3(0.0, M_PI / 2, 0.0))),
                     Vec3(half.x() + edge / 2, 0.0, 0.0)),
      RigidTransform(Quat(rodrigues(Vec3(M_PI / 2, 0.0, 0.0))),
                     Vec3(0.0, -(half.y() + edge / 2), 0.0)),
      RigidTransform(Quat(rodrigues(Vec3(0.0, -M_PI / 2, 0.0))),
                     Vec3(-(half.x() + edge / 2), 0.0, 0.0)),
  };
  for (int i = 0; i < spec.cubes; ++i) {
    body.cubes.emplace_back(i, edge, mounts[static_cast<std::size_t>(i)]);
  }
  obj.parts.push_back(body);
  sc.session.objects.push_back(obj);

  SmoothPose path(rng, Vec3(0.0, 0.0, 1.2), 0.45, 1.2, 0.4);
  sc.truth.reserve(static_cast<std::size_t>(spec.frames));
  for (int t = 0; t < spec.frames; ++t) {
    const RigidTransform pose = path(t / spec.camera_rate);
    sc.truth.push_back(pose);
    for (const auto& cube : sc.session.objects[0].parts[0].cubes) {
      detect_cube(cube, pose, sc.session.rig, t, spec.noise_px, rng,
                  sc.session.detections);
    }
    PoseRecord pr;
    pr.frame = t;
    pr.object = obj.name;
    pr.pose = pose;
    sc.session.poses.push_back(pr);
  }
  sort_detections(sc.session.detections);

  std::ostringstream cfg;
  cfg << "tracking seed=" << spec.seed << " frames=" << spec.frames
      << " cameras=" << spec.rig.cameras << " cubes=" << spec.cubes
      << " noise_px=" << spec.noise_px;
  sc.session.provenance.seed = spec.seed;
  sc.session.provenance.config_hash = hash_text(cfg);
  sc.session.validate();
  return sc;
}

// --- articulated object ---

void ArticulatedSpec::validate() const {
  rig.validate();
  if (frames < 2 || camera_rate <= 0.0 || noise_px < 0.0) {
    throw Error(ErrorCode::InvalidSpec, "articulated spec out of range");
  }
}

ArticulatedScenario generate_articulated_object(const ArticulatedSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  ArticulatedScenario sc;
  sc.session.rig = make_rig(spec.rig);
  sc.session.camera_rate = spec.camera_rate;
  sc.session.mocap_rate = spec.camera_rate;

  sc.joint.kind = spec.kind;
  if (spec.kind == JointKind::Revolute) {
    sc.joint.axis = Vec3(0.12, -0.08, 0.99).normalized();
    sc.joint.pivot = Vec3(0.24, -0.15, 0.05);
  } else {
    sc.joint.axis = Vec3(0.92, 0.15, 0.08).normalized();
    sc.joint.pivot.reset();
  }

  const double edge = 0.06;
  ObjectSpec obj;
  obj.name = "cabinet";
  obj.mesh = make_box(Vec3(0.5, 0.35, 0.6));
  ObjectPart base;
  base.part = "base";
  base.kind = "fixed";
  base.cubes.emplace_back(
      0, edge, RigidTransform(Quat::Identity(), Vec3(0.0, 0.0, 0.33)));
  base.cubes.emplace_back(
      1, edge,
      RigidTransform(Quat(rodrigues(Vec3(0.0, M_PI / 2, 0.0))), Vec3(0.28, 0.0, 0.1)));
  ObjectPart part;
  part.part = "door";
  part.kind = spec.kind == JointKind::Revolute ? "revolute" : "sliding";
  part.axis = sc.joint.axis;
  part.pivot = sc.joint.pivot;
  part.cubes.emplace_back(
      2, edge,
      RigidTransform(Quat(rodrigues(Vec3(M_PI / 2, 0.0, 0.0))), Vec3(0.1, -0.21, 0.12)));
  part.cubes.emplace_back(
      3, edge,
      RigidTransform(Quat(rodrigues(Vec3(M_PI / 2, 0.0, 0.2))), Vec3(-0.08, -0.21, -0.1)));
  obj.parts.push_back(base);
  obj.parts.push_back(part);
  sc.session.objects.push_back(obj);

  const double span = spec.kind == JointKind::Revolute ? 1.2 : 0.32;
  SmoothPose base_path(rng, Vec3(0.0, 0.3, 0.9), 0.08, 0.25, 0.2);
  SmoothSignal wiggle(rng, 0.04 * span, 0.8);

  for (int t = 0; t < spec.frames; ++t) {
    const double time = t / spec.camera_rate;
    const double u = spec.frames > 1 ? static_cast<double>(t) / (spec.frames - 1) : 0.0;
    const double s = span * u + wiggle(time);
    const RigidTransform base_pose = base_path(time);
    const RigidTransform part_pose = compose(base_pose, joint_transform(sc.joint, s));

    sc.base_truth.push_back(base_pose);
    sc.state_truth.push_back(s);
    for (const auto& cube : obj.parts[0].cubes) {
      detect_cube(cube, base_pose, sc.session.rig, t, spec.noise_px, rng,
                  sc.session.detections);
    }
    for (const auto& cube : obj.parts[1].cubes) {
      detect_cube(cube, part_pose, sc.session.rig, t, spec.noise_px, rng,
                  sc.session.detections);
    }

    PoseRecord pr;
    pr.frame = t;
    pr.object = obj.name;
    pr.pose = base_pose;
    pr.states = {s};
    sc.session.poses.push_back(pr);
  }
  sort_detections(sc.session.detections);

  std::ostringstream cfg;
  cfg << "articulated seed=" << spec.seed << " frames=" << spec.frames
      << " cameras=" << spec.rig.cameras
      << " kind=" << (spec.kind == JointKind::Revolute ? "revolute" : "sliding")
      << " noise_px=" << spec.noise_px;
  sc.session.provenance.seed = spec.seed;
  sc.session.provenance.config_hash = hash_text(cfg);
  sc.session.validate();
  return sc;
}

PartObservationSet make_part_observations(const JointSpec& joint,
                                          const std::vector<double>& states,
                                          const std::vector<MarkerCube>& cubes,
                                          double noise_m, Rng& rng) {
  joint.validate();
  if (states.size() < 2 || cubes.empty() || noise_m < 0.0) {
    throw Error(ErrorCode::InvalidSpec, "need >=2 states and >=1 cube");
  }
  PartObservationSet obs;
  obs.states.reserve(states.size());
  for (double s : states) {
    const RigidTransform t = joint_transform(joint, s);
    std::vector<Vec3> pts;
    for (const auto& cube : cubes) {
      for (const auto& c : cube.corners_host()) {
        Vec3 p = t.apply(c);
        if (noise_m > 0.0) {
          p += Vec3(rng.gaussian(0.0, noise_m), rng.gaussian(0.0, noise_m),
                    rng.gaussian(0.0, noise_m));
        }
        pts.push_back(p);
      }
    }
    obs.states.push_back(std::move(pts));
  }
  obs.validate();
  return obs;
}

// --- body range of motion ---

void BodyRomSpec::validate() const {
  if (frames < 2 || rate <= 0.0 || noise_m < 0.0 || offset_perturbation < 0.0) {
    throw Error(ErrorCode::InvalidSpec, "body rom spec out of range");
  }
}

std::vector<int> observable_offset_joints(const BodySkeleton& skel) {
  std::vector<int> subtree_markers(skel.joints.size(), 0);
  for (const auto& m : skel.markers) {
    int j = m.joint;
    while (j >= 0) {
      ++subtree_markers[static_cast<std::size_t>(j)];
      j = skel.joints[static_cast<std::size_t>(j)].parent;
    }
  }
  std::vector<int> out;
  for (std::size_t j = 1; j < skel.joints.size(); ++j) {
    if (subtree_markers[j] > 0) out.push_back(static_cast<int>(j));
  }
  return out;
}

namespace {

struct JointSignal {
  SmoothSignal x, y, z;
  double y_base = 0.0;

  Vec3 at(double t) const { return Vec3(x(t), y_base + y(t), z(t)); }
};

// rom signals keep every component above a quarter hertz: slower terms do not
// complete a cycle inside a five second clip, and two adjacent joints ramping
// together mix their offset columns into one long shallow valley
constexpr double kRomFloorHz = 0.25;

JointSignal make_signal(Rng& rng, double ax, double ay, double az, double f,
                        double y_base = 0.0) {
  return JointSignal{SmoothSignal(rng, ax, f, 3, kRomFloorHz),
                     SmoothSignal(rng, ay, f, 3, kRomFloorHz),
                     SmoothSignal(rng, az, f, 3, kRomFloorHz), y_base};
}

// reflection through the xz plane flips rotation vectors this way
Vec3 mirror_rotation(const Vec3& v) { return Vec3(-v.x(), v.y(), -v.z()); }

}  // namespace

BodyRomScenario generate_body_rom(const BodyRomSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  BodyRomScenario sc;
  sc.truth = BodySkeleton::standard();
  const auto& skel = sc.truth;
  const std::size_t joints = skel.joints.size();

  auto idx = [&](const char* name) {
    const int j = skel.joint_index(name);
    if (j < 0) throw Error(ErrorCode::InvalidArgument, "missing joint");
    return j;
  };
  const int r_up = idx("right_upper_leg"), r_lo = idx("right_lower_leg");
  const int r_foot = idx("right_foot"), r_toe = idx("right_toe");
  const int l_up = idx("left_upper_leg"), l_lo = idx("left_lower_leg");
  const int l_foot = idx("left_foot"), l_toe = idx("left_toe");

  // every joint gets an independent 3-axis wobble; single-axis motion would
  // leave the offset component along that axis to trade against the marker
  // placements. The left leg mirrors the right so both feet stay at the
  // same height, and the ankles unwind the leg chain to keep feet level.
  std::vector<JointSignal> sig(joints);
  for (std::size_t j = 0; j < joints; ++j) {
    const std::string& name = skel.joints[j].name;
    if (j == 0) {
      // the pelvis holds still. Root tilt would split the mirrored feet
      // heights by twice the foot y-excursion times the angle and push
      // truth itself outside the ground band; whole-body motion comes from
      // the per-frame rig alignment instead. A common shift of the three
      // root children is invisible regardless of root motion (the free
      // per-frame translation absorbs it), so root rotation would buy no
      // identifiability: consumers compare root children offsets up to
      // that shared shift.
      continue;
    }
    if (static_cast<int>(j) == r_foot || static_cast<int>(j) == r_toe ||
        static_cast<int>(j) == l_foot || static_cast<int>(j) == l_toe ||
        static_cast<int>(j) == l_up || static_cast<int>(j) == l_lo) {
      continue;  // feet and left leg are derived
    }
    // generous excursions on purpose: small rotations would let marker
    // placements and neighboring offsets absorb offset errors to first
    // order, flattening the fit along see-saw directions. Every joint of a
    // chain moves in its own frequency band so neighboring levels never
    // wiggle in lockstep
    if (static_cast<int>(j) == r_up) {
      sig[j] = make_signal(rng, 0.30, 0.45, 0.25, 0.5);
    } else if (static_cast<int>(j) == r_lo) {
      sig[j] = make_signal(rng, 0.10, 0.40, 0.08, 0.66, 0.45);
    } else if (name.find("upper_arm") != std::string::npos) {
      sig[j] = make_signal(rng, 0.45, 0.50, 0.35, 0.6);
    } else if (name.find("forearm") != std::string::npos) {
      sig[j] = make_signal(rng, 0.25, 0.55, 0.20, 0.72, 0.30);
    } else if (name.find("hand") != std::string::npos) {
      sig[j] = make_signal(rng, 0.30, 0.30, 0.25, 0.84);
    } else if (name.find("shoulder") != std::string::npos) {
      sig[j] = make_signal(rng, 0.35, 0.40, 0.30, 0.5);
    } else if (name == "spine1") {
      sig[j] = make_signal(rng, 0.32, 0.35, 0.30, 0.40);
    } else if (name == "spine2") {
      sig[j] = make_signal(rng, 0.32, 0.35, 0.30, 0.48);
    } else if (name == "spine3") {
      sig[j] = make_signal(rng, 0.32, 0.35, 0.30, 0.56);
    } else if (name == "chest") {
      sig[j] = make_signal(rng, 0.32, 0.35, 0.30, 0.64);
    } else {  // neck, head
      sig[j] = make_signal(rng, 0.32, 0.35, 0.30, 0.45);
    }
  }
  SmoothSignal yaw(rng, 2.2, 0.12);
  SmoothSignal walk_x(rng, 1.2, 0.18);
  SmoothSignal walk_y(rng, 1.2, 0.18);

  sc.init = sc.truth;
  const std::vector<int> observable = observable_offset_joints(skel);
  sc.perturbed_joints = observable;
  if (spec.offset_perturbation > 0.0) {
    for (int j : observable) {
      Vec3 dir(rng.gaussian(), rng.gaussian(), rng.gaussian());
      while (dir.norm() < 1e-6) {
        dir = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
      }
      sc.init.joints[static_cast<std::size_t>(j)].offset +=
          spec.offset_perturbation * dir.normalized();
    }
  }

  const double mid_band = 0.005;  // half the default ground tolerance
  sc.frames.reserve(static_cast<std::size_t>(spec.frames));
  sc.alignments.reserve(static_cast<std::size_t>(spec.frames));
  for (int t = 0; t < spec.frames; ++t) {
    const double time = t / spec.rate;
    Eigen::MatrixX3d angles = Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(joints), 3);
    for (std::size_t j = 0; j < joints; ++j) {
      angles.row(static_cast<Eigen::Index>(j)) = sig[j].at(time).transpose();
    }
    angles.row(l_up) = mirror_rotation(angles.row(r_up).transpose()).transpose();
    angles.row(l_lo) = mirror_rotation(angles.row(r_lo).transpose()).transpose();
    // ankles unwind the whole chain above them, root included, so the foot
    // segments (and the toes hanging off them) stay level
    const Mat3 root_r = rodrigues(angles.row(0).transpose());
    const Mat3 chain_r = root_r * rodrigues(angles.row(r_up).transpose()) *
                         rodrigues(angles.row(r_lo).transpose());
    const Mat3 chain_l = root_r * rodrigues(angles.row(l_up).transpose()) *
                         rodrigues(angles.row(l_lo).transpose());
    angles.row(r_foot) = log_rotation(chain_r.transpose()).transpose();
    angles.row(l_foot) = log_rotation(chain_l.transpose()).transpose();

    const BodyFk fk = fk_body(sc.truth, angles);
    const double ground_z =
        fk.joint_poses[static_cast<std::size_t>(r_foot)].translation.z();

    const RigidTransform align(
        Quat(rodrigues(Vec3(0.0, 0.0, yaw(time)))),
        Vec3(walk_x(time), walk_y(time), mid_band - ground_z));
    sc.alignments.push_back(align);

    BodyCalibrationFrame frame;
    frame.angles = angles;
    frame.observed.resize(skel.markers.size());
    for (std::size_t m = 0; m < skel.markers.size(); ++m) {
      std::array<Vec3, 4> corners;
      for (std::size_t c = 0; c < 4; ++c) {
        Vec3 p = align.apply(fk.marker_corners[m][c]);
        if (spec.noise_m > 0.0) {
          p += Vec3(rng.gaussian(0.0, spec.noise_m), rng.gaussian(0.0, spec.noise_m),
                    rng.gaussian(0.0, spec.noise_m));
        }
        corners[c] = p;
      }
      frame.observed[m] = corners;
    }
    sc.frames.push_back(std::move(frame));
  }
  return sc;
}

// --- hand touch protocol ---

void HandProtocolSpec::validate() const {
  if (scale_spread < 0.0 || scale_spread > 0.19 || offset_spread < 0.0 ||
      offset_spread > HandSkeleton::kOffsetBound || marker_spread < 0.0 ||
      touch_noise_m < 0.0) {
    throw Error(ErrorCode::InvalidSpec, "hand protocol spec out of range");
  }
}

namespace {

struct HandIkProblem {
  const HandSkeleton* skel;
  std::vector<Vec3> targets;
  std::vector<int> fingers;  // 1-based
  Vec3 hover{0.0, 0.0, 0.0};
  Vec3 base_orientation{0.0, 0.0, 0.0};
  Eigen::MatrixX3d neutral;

  static constexpr int kDim = 6 + HandSkeleton::kSegments * 3;

  void unpack(const Eigen::VectorXd& x, RigidTransform& wrist,
              Eigen::MatrixX3d& angles) const {
    wrist = RigidTransform(Quat(rodrigues(x.segment<3>(0))), x.segment<3>(3));
    angles.resize(HandSkeleton::kSegments, 3);
    for (int j = 0; j < HandSkeleton::kSegments; ++j) {
      angles.row(j) = x.segment<3>(6 + 3 * j).transpose();
    }
  }

  Eigen::VectorXd tips_only(const Eigen::VectorXd& x) const {
    RigidTransform wrist;
    Eigen::MatrixX3d angles;
    unpack(x, wrist, angles);
    const HandFk fk = fk_hand(*skel, angles, wrist);
    Eigen::VectorXd r(3 * static_cast<int>(targets.size()));
    for (std::size_t k = 0; k < targets.size(); ++k) {
      r.segment<3>(3 * static_cast<Eigen::Index>(k)) =
          fk.fingertips[static_cast<std::size_t>(fingers[k] - 1)] - targets[k];
    }
    return r;
  }

  Eigen::VectorXd regularized(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd tips = tips_only(x);
    Eigen::VectorXd r(tips.size() + 6 + HandSkeleton::kSegments * 3);
    r.head(tips.size()) = tips;
    Eigen::Index i = tips.size();
    r.segment<3>(i) = 0.05 * (x.segment<3>(0) - base_orientation);
    r.segment<3>(i + 3) = 0.25 * (x.segment<3>(3) - hover);
    i += 6;
    for (int j = 0; j < HandSkeleton::kSegments; ++j) {
      r.segment<3>(i + 3 * j) =
          0.03 * (x.segment<3>(6 + 3 * j) - neutral.row(j).transpose());
    }
    return r;
  }
};

Eigen::MatrixX3d neutral_hand_angles() {
  Eigen::MatrixX3d a = Eigen::MatrixX3d::Zero(HandSkeleton::kSegments, 3);
  // thumb chain 1..3, then four 4-segment chains
  for (int j = 1; j <= 3; ++j) a(j, 1) = 0.35;
  for (int f = 0; f < 4; ++f) {
    const int base = 4 + 4 * f;
    a(base, 1) = 0.05;
    a(base + 1, 1) = 0.5;
    a(base + 2, 1) = 0.45;
    a(base + 3, 1) = 0.3;
  }
  return a;
}

}  // namespace

HandProtocolScenario generate_hand_protocol(const HandProtocolSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  HandProtocolScenario sc;
  sc.truth = HandSkeleton::standard(spec.left);
  sc.init = HandSkeleton::standard(spec.left);
  for (int j = 1; j < HandSkeleton::kSegments; ++j) {
    sc.truth.scales[j] = 1.0 + rng.uniform(-spec.scale_spread, spec.scale_spread);
    for (int c = 0; c < 3; ++c) {
      sc.truth.offsets(j, c) = rng.uniform(-spec.offset_spread, spec.offset_spread);
    }
  }
  for (auto& marker : sc.truth.wrist_markers) {
    for (auto& corner : marker) {
      corner += Vec3(rng.uniform(-spec.marker_spread, spec.marker_spread),
                     rng.uniform(-spec.marker_spread, spec.marker_spread),
                     rng.uniform(-spec.marker_spread, spec.marker_spread));
    }
  }
  sc.truth.validate();

  sc.structure = CalibrationStructure::standard(
      RigidTransform(Quat(rodrigues(Vec3(0.0, 0.0, 0.15))), Vec3(0.04, -0.02, 0.0)));

  Vec3 centroid = Vec3::Zero();
  for (const auto& c : sc.structure.corners) centroid += c;
  centroid /= static_cast<double>(sc.structure.corners.size());

  HandIkProblem ik;
  ik.skel = &sc.truth;
  ik.hover = centroid + Vec3(-0.14, spec.left ? 0.10 : -0.10, 0.08);
  ik.base_orientation = Vec3(0.0, -0.8, spec.left ? -0.5 : 0.5);
  ik.neutral = neutral_hand_angles();

  Eigen::VectorXd warm(HandIkProblem::kDim);
  warm.setZero();
  warm.segment<3>(0) = ik.base_orientation;
  warm.segment<3>(3) = ik.hover;
  for (int j = 0; j < HandSkeleton::kSegments; ++j) {
    warm.segment<3>(6 + 3 * j) = ik.neutral.row(j).transpose();
  }

  const auto protocol = standard_hand_protocol(spec.left);
  for (const auto& step : protocol) {
    ik.targets.clear();
    ik.fingers = step.fingers;
    for (int c : step.corners) {
      Vec3 target = sc.structure.corners[static_cast<std::size_t>(c - 1)];
      if (spec.touch_noise_m > 0.0) {
        target += Vec3(rng.gaussian(0.0, spec.touch_noise_m),
                       rng.gaussian(0.0, spec.touch_noise_m),
                       rng.gaussian(0.0, spec.touch_noise_m));
      }
      ik.targets.push_back(target);
    }

    LmOptions coarse;
    coarse.max_iterations = 150;
    Eigen::VectorXd x;
    double best = -1.0;
    for (int attempt = 0; attempt < 5; ++attempt) {
      Eigen::VectorXd x0 = warm;
      if (attempt > 0) {
        for (int i = 0; i < x0.size(); ++i) x0[i] += rng.gaussian(0.0, 0.12);
      }
      const LmResult stage_a = lm_minimize(
          [&](const Eigen::VectorXd& v) { return ik.regularized(v); }, x0, coarse);
      LmOptions fine;
      fine.max_iterations = 250;
      fine.gradient_tol = 1e-16;
      fine.step_tol = 1e-16;
      const LmResult stage_b = lm_minimize(
          [&](const Eigen::VectorXd& v) { return ik.tips_only(v); }, stage_a.x, fine);
      const double err = ik.tips_only(stage_b.x).lpNorm<Eigen::Infinity>();
      if (best < 0.0 || err < best) {
        best = err;
        x = stage_b.x;
      }
      if (best < 1e-10) break;
    }
    if (best > 1e-8) {
      throw Error(ErrorCode::NonConvergence, "touch pose out of reach");
    }
    warm = x;

    HandTouchEvent event;
    event.corners = step.corners;
    event.fingers = step.fingers;
    RigidTransform wrist;
    ik.unpack(x, wrist, event.glove_angles);
    for (std::size_t m = 0; m < 3; ++m) {
      for (std::size_t c = 0; c < 4; ++c) {
        event.observed_wrist[m][c] = wrist.apply(sc.truth.wrist_markers[m][c]);
      }
    }
    event.mocap_wrist = wrist.translation;
    sc.events.push_back(std::move(event));
  }
  return sc;
}

// --- carried object ---

void CarriedObjectSpec::validate() const {
  if (frames < 8 || rate <= 0.0) {
    throw Error(ErrorCode::InvalidSpec, "carried object spec out of range");
  }
}

CarriedObjectScenario generate_carried_object(const CarriedObjectSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const BodySkeleton skel = BodySkeleton::standard();
  const std::size_t joints = skel.joints.size();

  CarriedObjectScenario sc;
  sc.mesh = make_box(Vec3(0.22, 0.16, 0.10));
  sc.carrying_joint = skel.joint_index("right_hand");

  std::vector<JointSignal> sig(joints);
  for (std::size_t j = 1; j < joints; ++j) {
    const std::string& name = skel.joints[j].name;
    if (name.find("arm") != std::string::npos || name.find("hand") != std::string::npos) {
      sig[j] = make_signal(rng, 0.35, 0.45, 0.25, 0.6);
    } else {
      sig[j] = make_signal(rng, 0.08, 0.10, 0.08, 0.4);
    }
  }
  SmoothPose root_path(rng, Vec3(0.0, 0.0, 1.0), 0.45, 0.6, 0.35);
  const RigidTransform grip(Quat(rodrigues(Vec3(0.0, 0.0, 0.4))), Vec3(0.0, 0.0, 0.13));

  sc.joints.reserve(static_cast<std::size_t>(spec.frames));
  sc.object.reserve(static_cast<std::size_t>(spec.frames));
  for (int t = 0; t < spec.frames; ++t) {
    const double time = t / spec.rate;
    Eigen::MatrixX3d angles = Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(joints), 3);
    for (std::size_t j = 1; j < joints; ++j) {
      angles.row(static_cast<Eigen::Index>(j)) = sig[j].at(time).transpose();
    }
    const RigidTransform root = root_path(time);
    const BodyFk fk = fk_body(skel, angles, root);
    sc.joints.push_back(fk.joint_poses);
    sc.object.push_back(
        compose(fk.joint_poses[static_cast<std::size_t>(sc.carrying_joint)], grip));
  }
  return sc;
}

// --- wrist fusion stream ---

void WristFusionSpec::validate() const {
  if (frames < 16 || rate <= 0.0 || jitter_m < 0.0 || drift_m < 0.0 ||
      gap_fraction < 0.0 || gap_fraction > 0.6) {
    throw Error(ErrorCode::InvalidSpec, "wrist fusion spec out of range");
  }
}

WristFusionScenario generate_wrist_fusion(const WristFusionSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  WristFusionScenario sc;
  SmoothPose truth_path(rng, Vec3(0.2, -0.1, 1.1), 0.35, 1.0, 2.2);
  SmoothPose drift_path(rng, Vec3::Zero(), spec.drift_m, 0.06, 0.05);

  const std::size_t n = static_cast<std::size_t>(spec.frames);
  std::vector<bool> gap(n, false);
  const int gap_runs = 3;
  const int run_len =
      static_cast<int>(spec.gap_fraction * spec.frames / gap_runs);
  if (run_len > 0) {
    const int margin = std::max(4, run_len / 2);
    for (int g = 0; g < gap_runs; ++g) {
      const int lo = margin + g * (spec.frames - 2 * margin) / gap_runs;
      const int hi = margin + (g + 1) * (spec.frames - 2 * margin) / gap_runs - run_len;
      if (hi <= lo) continue;
      const int start = static_cast<int>(rng.uniform_int(lo, hi));
      for (int t = start; t < start + run_len && t < spec.frames; ++t) {
        gap[static_cast<std::size_t>(t)] = true;
      }
    }
  }

  sc.truth.reserve(n);
  sc.mocap.reserve(n);
  sc.marker.resize(n);
  sc.confidence.assign(n, 0.0);
  for (int t = 0; t < spec.frames; ++t) {
    const double time = t / spec.rate;
    const RigidTransform truth = truth_path(time);
    sc.truth.push_back(truth);
    sc.mocap.push_back(compose(drift_path(time), truth));

    if (gap[static_cast<std::size_t>(t)]) continue;
    const Vec3 jitter(rng.gaussian(0.0, spec.jitter_m), rng.gaussian(0.0, spec.jitter_m),
                      rng.gaussian(0.0, spec.jitter_m));
    const Vec3 rot_jitter(rng.gaussian(0.0, 1.5 * spec.jitter_m),
                          rng.gaussian(0.0, 1.5 * spec.jitter_m),
                          rng.gaussian(0.0, 1.5 * spec.jitter_m));
    sc.marker[static_cast<std::size_t>(t)] =
        RigidTransform(Quat(rodrigues(rot_jitter) * truth.rotation.toRotationMatrix()),
                       truth.translation + jitter);
    const int views = static_cast<int>(rng.uniform_int(4, 9));
    sc.confidence[static_cast<std::size_t>(t)] =
        marker_confidence(views, rng.uniform(0.3, 0.9));
  }
  return sc;
}

// --- occlusion scene ---

void OcclusionSceneSpec::validate() const {
  rig.validate();
  if (frames < 1 || targets < 1) {
    throw Error(ErrorCode::InvalidSpec, "occlusion scene spec out of range");
  }
}

SyntheticScene generate_occlusion_scene(const OcclusionSceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  SyntheticScene scene;
  scene.rig = make_rig(spec.rig);
  scene.frame_count = static_cast<std::size_t>(spec.frames);
  scene.seed = spec.seed;

  const TriangleMesh box = make_box(Vec3(0.30, 0.30, 0.30));
  SmoothPose box_path(rng, Vec3(0.0, 0.0, 1.1), 0.55, 1.5, 0.25);
  const std::vector<SurfaceSample> samples =
      sample_surface(box, static_cast<std::size_t>(spec.targets), rng);

  OccluderMesh carried;
  carried.mesh = box;
  carried.poses.reserve(scene.frame_count);
  scene.targets.resize(samples.size());
  for (auto& target : scene.targets) {
    target.positions.reserve(scene.frame_count);
    target.normals.reserve(scene.frame_count);
  }
  const double walk_rate = 30.0;
  for (std::size_t t = 0; t < scene.frame_count; ++t) {
    const RigidTransform pose = box_path(static_cast<double>(t) / walk_rate);
    carried.poses.push_back(pose);
    for (std::size_t k = 0; k < samples.size(); ++k) {
      scene.targets[k].positions.push_back(pose.apply(samples[k].position));
      scene.targets[k].normals.push_back(pose.rotation * samples[k].normal);
    }
  }

  if (spec.mesh_occluders) {
    scene.occluders.push_back(std::move(carried));
    OccluderMesh table;
    table.mesh = make_box(Vec3(1.2, 0.7, 0.08));
    table.poses = {RigidTransform(Quat::Identity(), Vec3(1.3, 0.5, 0.74))};
    scene.occluders.push_back(std::move(table));
    OccluderMesh shelf;
    shelf.mesh = make_box(Vec3(0.45, 1.0, 1.8));
    shelf.poses = {RigidTransform(Quat::Identity(), Vec3(-1.5, -0.7, 0.9))};
    scene.occluders.push_back(std::move(shelf));
  }

  // a stick figure orbiting the capture volume
  SmoothSignal orbit_phase(rng, 0.9, 0.05);
  SmoothSignal arm_swing(rng, 0.5, 0.9);
  const double orbit_radius = 1.1;
  scene.capsules.resize(scene.frame_count);
  for (std::size_t t = 0; t < scene.frame_count; ++t) {
    const double time = static_cast<double>(t) / walk_rate;
    const double ang = 2.0 * M_PI * 0.05 * time + orbit_phase(time);
    const Vec3 c(orbit_radius * std::cos(ang), orbit_radius * std::sin(ang), 0.0);
    const Vec3 facing(-std::sin(ang), std::cos(ang), 0.0);
    const Vec3 side = facing.cross(Vec3(0, 0, 1));
    const double swing = arm_swing(time);

    auto& caps = scene.capsules[t];
    caps.push_back({c + Vec3(0, 0, 0.95), c + Vec3(0, 0, 1.55), 0.17});   // torso
    caps.push_back({c + Vec3(0, 0, 1.60), c + Vec3(0, 0, 1.75), 0.11});   // head
    caps.push_back({c - 0.10 * side, c - 0.10 * side + Vec3(0, 0, 0.95), 0.08});
    caps.push_back({c + 0.10 * side, c + 0.10 * side + Vec3(0, 0, 0.95), 0.08});
    caps.push_back({c - 0.25 * side + Vec3(0, 0, 1.50),
                    c - 0.25 * side + 0.45 * swing * facing + Vec3(0, 0, 1.0), 0.06});
    caps.push_back({c + 0.25 * side + Vec3(0, 0, 1.50),
                    c + 0.25 * side - 0.45 * swing * facing + Vec3(0, 0, 1.0), 0.06});
  }

  scene.validate();
  return scene;
}

// --- full session ---

void SessionSpec::validate() const {
  rig.validate();
  if (camera_frames < 2 || camera_rate <= 0.0 || mocap_rate < camera_rate ||
      noise_px < 0.0) {
    throw Error(ErrorCode::InvalidSpec, "session spec out of range");
  }
}

namespace {

Eigen::MatrixX3d hand_curl_angles(const std::vector<JointSignal>& sig, double t) {
  Eigen::MatrixX3d a(HandSkeleton::kSegments, 3);
  for (int j = 0; j < HandSkeleton::kSegments; ++j) {
    a.row(j) = sig[static_cast<std::size_t>(j)].at(t).transpose();
  }
  return a;
}

}  // namespace

CaptureSession generate_session(const SessionSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  CaptureSession s;
  s.rig = make_rig(spec.rig);
  s.camera_rate = spec.camera_rate;
  s.mocap_rate = spec.mocap_rate;

  const BodySkeleton skel = BodySkeleton::standard();
  const std::size_t joints = skel.joints.size();
  const int hand_joint = skel.joint_index("right_hand");

  // suit-frame motion; the person stays anchored at the origin
  std::vector<JointSignal> body_sig(joints);
  body_sig[0] = make_signal(rng, 0.08, 0.10, 0.25, 0.25);
  for (std::size_t j = 1; j < joints; ++j) {
    const std::string& name = skel.joints[j].name;
    if (name.find("arm") != std::string::npos || name.find("hand") != std::string::npos) {
      body_sig[j] = make_signal(rng, 0.30, 0.40, 0.22, 0.5);
    } else if (name.find("leg") != std::string::npos) {
      body_sig[j] = make_signal(rng, 0.12, 0.25, 0.08, 0.4);
    } else {
      body_sig[j] = make_signal(rng, 0.08, 0.10, 0.08, 0.35);
    }
  }
  std::vector<JointSignal> left_hand_sig(HandSkeleton::kSegments);
  std::vector<JointSignal> right_hand_sig(HandSkeleton::kSegments);
  for (int j = 0; j < HandSkeleton::kSegments; ++j) {
    const double base = j == 0 ? 0.0 : 0.35;
    left_hand_sig[static_cast<std::size_t>(j)] =
        make_signal(rng, 0.05, 0.25, 0.05, 0.6, base);
    right_hand_sig[static_cast<std::size_t>(j)] =
        make_signal(rng, 0.05, 0.25, 0.05, 0.6, base);
  }

  auto body_angles_at = [&](double t) {
    Eigen::MatrixX3d a = Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(joints), 3);
    for (std::size_t j = 0; j < joints; ++j) {
      a.row(static_cast<Eigen::Index>(j)) = body_sig[j].at(t).transpose();
    }
    return a;
  };

  const int mocap_frames = static_cast<int>(
      std::lround(spec.camera_frames * spec.mocap_rate / spec.camera_rate));
  for (int t = 0; t < mocap_frames; ++t) {
    const double time = t / spec.mocap_rate;
    MocapRecord rec;
    rec.frame = t;
    rec.body_angles = body_angles_at(time);
    rec.left_hand = hand_curl_angles(left_hand_sig, time);
    rec.right_hand = hand_curl_angles(right_hand_sig, time);
    s.mocap.push_back(std::move(rec));
  }

  // carried crate, rigid in the right hand
  const Vec3 half(0.11, 0.08, 0.05);
  const double edge = 0.06;
  ObjectSpec obj;
  obj.name = "crate";
  obj.mesh = make_box(2.0 * half);
  ObjectPart body;
  body.part = "body";
  body.kind = "fixed";
  body.cubes.emplace_back(0, edge,
                          RigidTransform(Quat::Identity(), Vec3(0.0, 0.0, half.z() + edge / 2)));
  body.cubes.emplace_back(
      1, edge,
      RigidTransform(Quat(rodrigues(Vec3(0.0, M_PI / 2, 0.0))),
                     Vec3(half.x() + edge / 2, 0.0, 0.0)));
  obj.parts.push_back(body);
  s.objects.push_back(obj);
  // hand joint rests 5 mm off the +z face, close enough to register contact
  const RigidTransform grip(Quat(rodrigues(Vec3(0.0, 0.0, 0.4))),
                            Vec3(0.0, 0.0, -(half.z() + 0.005)));

  for (int t = 0; t < spec.camera_frames; ++t) {
    const double time = t / spec.camera_rate;
    const Eigen::MatrixX3d angles = body_angles_at(time);
    const BodyFk fk = fk_body(skel, angles);

    for (std::size_t m = 0; m < skel.markers.size(); ++m) {
      const auto& corners = fk.marker_corners[m];
      const Vec3 normal =
          (corners[1] - corners[0]).cross(corners[2] - corners[0]).normalized();
      detect_square(body_marker_id_base + static_cast<int>(m), corners, normal, s.rig,
                    t, spec.noise_px, rng, s.detections);
    }

    const RigidTransform pose =
        compose(fk.joint_poses[static_cast<std::size_t>(hand_joint)], grip);
    for (const auto& cube : obj.parts[0].cubes) {
      detect_cube(cube, pose, s.rig, t, spec.noise_px, rng, s.detections);
    }
    PoseRecord pr;
    pr.frame = t;
    pr.object = obj.name;
    pr.pose = pose;
    s.poses.push_back(pr);
  }
  sort_detections(s.detections);

  std::ostringstream cfg;
  cfg << "session seed=" << spec.seed << " frames=" << spec.camera_frames
      << " cameras=" << spec.rig.cameras << " noise_px=" << spec.noise_px;
  s.provenance.seed = spec.seed;
  s.provenance.config_hash = hash_text(cfg);
  s.validate();
  return s;
}

}  // namespace mfk
