// mfk: multi-view capture pipeline driver.
//
// Every verb reads its inputs, writes artifacts plus a metrics.json into a
// distinct output directory, and never touches the input files. Exit code 0
// on success, 2 when the inputs are invalid, 3 when the computation fails
// numerically.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "serialize.hpp"

#include "mfk/articulation.hpp"
#include "mfk/calibration.hpp"
#include "mfk/contacts.hpp"
#include "mfk/errors.hpp"
#include "mfk/features.hpp"
#include "mfk/generator.hpp"
#include "mfk/multiview.hpp"
#include "mfk/postprocess.hpp"
#include "mfk/rigid.hpp"
#include "mfk/session.hpp"
#include "mfk/simulation.hpp"
#include "mfk/skeleton.hpp"
#include "mfk/types.hpp"

namespace fs = std::filesystem;
using mfk::tool::json;

namespace mfk::tool {
namespace {

// --- metrics envelope -------------------------------------------------------

// Every run is reproducible from (inputs, config, seed); the hash covers all
// three so downstream artifacts can name the exact run they came from.
struct Metrics {
  std::string verb;
  json inputs = json::object();
  json config = json::object();
  json results = json::object();
  std::optional<std::uint64_t> seed;

  void write(const std::string& out_dir) const {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["verb"] = verb;
    j["inputs"] = inputs;
    j["config"] = config;
    if (seed) j["seed"] = *seed;
    json id;
    id["verb"] = verb;
    id["inputs"] = inputs;
    id["config"] = config;
    if (seed) id["seed"] = *seed;
    j["config_hash"] = config_hash_hex(id.dump());
    j["results"] = results;
    save_json(j, (fs::path(out_dir) / "metrics.json").string());
  }
};

std::string prepare_out_dir(const std::string& out, const std::vector<std::string>& ins) {
  fs::create_directories(out);
  const fs::path canon = fs::weakly_canonical(out);
  for (const auto& in : ins) {
    if (!in.empty() && fs::exists(in) && fs::weakly_canonical(in) == canon) {
      throw Error(ErrorCode::InvalidArgument, "output directory equals an input");
    }
  }
  return out;
}

// --- session helpers --------------------------------------------------------

struct Triangulation {
  std::map<std::int64_t, std::vector<TriangulatedCorner>> by_frame;
  std::size_t attempted = 0;
  std::size_t solved = 0;
};

// all corners in [marker_lo, marker_hi) solved per frame; corners that fail
// (too few views, degenerate rays) are simply absent
Triangulation triangulate_session(const CaptureSession& s, int marker_lo, int marker_hi) {
  std::map<std::tuple<std::int64_t, int, int>, std::vector<CornerDetection>> groups;
  for (const auto& rec : s.detections) {
    if (rec.marker_id < marker_lo || rec.marker_id >= marker_hi) continue;
    for (int c = 0; c < 4; ++c) {
      CornerDetection d;
      d.frame = static_cast<int>(rec.frame);
      d.camera_id = rec.camera_id;
      d.marker_id = rec.marker_id;
      d.corner_index = c;
      d.pixel = rec.corners[static_cast<std::size_t>(c)];
      groups[{rec.frame, rec.marker_id, c}].push_back(d);
    }
  }
  Triangulation out;
  for (const auto& [key, detections] : groups) {
    ++out.attempted;
    try {
      out.by_frame[std::get<0>(key)].push_back(triangulate(detections, s.rig));
      ++out.solved;
    } catch (const Error&) {
      // corner unresolved this frame
    }
  }
  return out;
}

std::size_t mocap_index(const CaptureSession& s, std::int64_t camera_frame) {
  if (s.mocap.empty()) throw Error(ErrorCode::EmptySession, "session has no mocap stream");
  const auto i = static_cast<std::int64_t>(
      std::llround(static_cast<double>(camera_frame) * s.mocap_rate / s.camera_rate));
  return static_cast<std::size_t>(
      std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(s.mocap.size()) - 1));
}

JointSpec joint_of(const ObjectPart& part) {
  JointSpec joint;
  if (part.kind == "revolute") {
    joint.kind = JointKind::Revolute;
    if (!part.pivot) throw Error(ErrorCode::CorruptStream, "revolute part without pivot");
    joint.pivot = part.pivot;
  } else if (part.kind == "sliding") {
    joint.kind = JointKind::Sliding;
    joint.pivot.reset();
  } else {
    throw Error(ErrorCode::InvalidArgument, "part '" + part.part + "' is not articulated");
  }
  if (part.axis.norm() < 1e-12) {
    throw Error(ErrorCode::CorruptStream, "articulated part without axis");
  }
  joint.axis = part.axis.normalized();
  joint.validate();
  return joint;
}

std::optional<RigidTransform> part_pose(const std::vector<TriangulatedCorner>& frame_corners,
                                        const ObjectPart& part) {
  std::set<int> ids;
  for (const auto& cube : part.cubes) ids.insert(cube.id);
  std::vector<TriangulatedCorner> own;
  for (const auto& c : frame_corners) {
    if (ids.count(c.marker_id / MarkerCube::kFaces)) own.push_back(c);
  }
  try {
    return object_pose(own, part.cubes);
  } catch (const Error&) {
    return std::nullopt;
  }
}

ContactParty party_of(const std::string& joint_name) {
  if (joint_name == "right_hand") return ContactParty::RightHand;
  if (joint_name == "left_hand") return ContactParty::LeftHand;
  return ContactParty::Body;
}

std::vector<SkeletonFrame> mocap_skeleton_stream(const CaptureSession& s,
                                                 const BodySkeleton& skel) {
  std::vector<SkeletonFrame> stream;
  stream.reserve(s.mocap.size());
  for (const auto& rec : s.mocap) {
    const BodyFk fk = fk_body(skel, rec.body_angles);
    stream.push_back(SkeletonFrame{fk.joint_poses});
  }
  return stream;
}

json study_rows_json(const std::vector<StudyRow>& rows) {
  json a = json::array();
  for (const auto& r : rows) {
    a.push_back({{"x", r.x}, {"mean", r.mean}, {"stddev", r.stddev}, {"samples", r.samples}});
  }
  return a;
}

// --- gen-synthetic ----------------------------------------------------------

struct GenArgs {
  std::string kind = "session";
  std::string out;
  std::uint64_t seed = 7;
  int frames = 0;    // 0 keeps the preset default
  int cameras = 20;
  double noise_px = -1.0;  // <0 keeps the preset default
  double noise_m = 0.0;
  double perturb = 0.02;
  std::string joint = "revolute";
  bool left = false;
};

int run_gen(const GenArgs& a) {
  prepare_out_dir(a.out, {});
  Metrics metrics;
  metrics.verb = "gen-synthetic";
  metrics.seed = a.seed;
  metrics.config = {{"kind", a.kind},       {"frames", a.frames},   {"cameras", a.cameras},
                    {"noise_px", a.noise_px}, {"noise_m", a.noise_m}, {"perturb", a.perturb},
                    {"joint", a.joint},     {"left", a.left}};

  RigSpec rig;
  rig.cameras = a.cameras;

  if (a.kind == "session") {
    SessionSpec spec;
    spec.rig = rig;
    if (a.frames > 0) spec.camera_frames = a.frames;
    if (a.noise_px >= 0.0) spec.noise_px = a.noise_px;
    spec.seed = a.seed;
    const CaptureSession s = generate_session(spec);
    save_session(s, a.out);
    metrics.results = {{"camera_frames", spec.camera_frames},
                       {"mocap_frames", s.mocap.size()},
                       {"detections", s.detections.size()},
                       {"objects", s.objects.size()}};
  } else if (a.kind == "tracking") {
    TrackingSpec spec;
    spec.rig = rig;
    if (a.frames > 0) spec.frames = a.frames;
    if (a.noise_px >= 0.0) spec.noise_px = a.noise_px;
    spec.seed = a.seed;
    const TrackingScenario sc = generate_object_tracking(spec);
    save_session(sc.session, a.out);
    metrics.results = {{"frames", spec.frames}, {"detections", sc.session.detections.size()}};
  } else if (a.kind == "articulated") {
    ArticulatedSpec spec;
    spec.rig = rig;
    if (a.frames > 0) spec.frames = a.frames;
    if (a.noise_px >= 0.0) spec.noise_px = a.noise_px;
    spec.kind = a.joint == "sliding" ? JointKind::Sliding : JointKind::Revolute;
    spec.seed = a.seed;
    const ArticulatedScenario sc = generate_articulated_object(spec);
    save_session(sc.session, a.out);
    json truth = {{"kind", a.joint},
                  {"axis", to_json(sc.joint.axis)},
                  {"states", sc.state_truth}};
    if (sc.joint.pivot) truth["pivot"] = to_json(*sc.joint.pivot);
    save_json(truth, (fs::path(a.out) / "articulation_truth.json").string());
    metrics.results = {{"frames", spec.frames}, {"detections", sc.session.detections.size()}};
  } else if (a.kind == "rom") {
    BodyRomSpec spec;
    if (a.frames > 0) spec.frames = a.frames;
    spec.noise_m = a.noise_m;
    spec.offset_perturbation = a.perturb;
    spec.seed = a.seed;
    const BodyRomScenario sc = generate_body_rom(spec);

    CaptureSession s;
    s.rig = make_rig(rig);
    s.camera_rate = spec.rate;
    s.mocap_rate = spec.rate;
    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    const double px_noise = a.noise_px >= 0.0 ? a.noise_px : 0.0;
    for (std::size_t t = 0; t < sc.frames.size(); ++t) {
      MocapRecord rec;
      rec.frame = static_cast<std::int64_t>(t);
      rec.body_angles = sc.frames[t].angles;
      s.mocap.push_back(std::move(rec));
      for (std::size_t m = 0; m < sc.frames[t].observed.size(); ++m) {
        if (!sc.frames[t].observed[m]) continue;
        const auto& corners = *sc.frames[t].observed[m];
        const Vec3 normal =
            (corners[1] - corners[0]).cross(corners[2] - corners[0]).normalized();
        detect_square(body_marker_id_base + static_cast<int>(m), corners, normal, s.rig,
                      static_cast<std::int64_t>(t), px_noise, rng, s.detections);
      }
    }
    std::sort(s.detections.begin(), s.detections.end(),
              [](const DetectionRecord& x, const DetectionRecord& y) {
                return std::tie(x.frame, x.camera_id, x.marker_id) <
                       std::tie(y.frame, y.camera_id, y.marker_id);
              });
    std::ostringstream cfg;
    cfg << "rom seed=" << spec.seed << " frames=" << spec.frames
        << " perturb=" << spec.offset_perturbation << " noise_m=" << spec.noise_m;
    s.provenance.seed = spec.seed;
    s.provenance.config_hash = config_hash_hex(cfg.str());
    s.validate();
    save_session(s, a.out);
    save_json(to_json(sc.init), (fs::path(a.out) / "skeleton_init.json").string());
    save_json(to_json(sc.truth), (fs::path(a.out) / "skeleton_truth.json").string());
    metrics.results = {{"frames", spec.frames},
                       {"detections", s.detections.size()},
                       {"perturbed_joints", sc.perturbed_joints.size()}};
  } else if (a.kind == "hand") {
    HandProtocolSpec spec;
    spec.left = a.left;
    spec.touch_noise_m = a.noise_m;
    spec.seed = a.seed;
    const HandProtocolScenario sc = generate_hand_protocol(spec);
    save_touches(sc.events, (fs::path(a.out) / "hand_touches.jsonl").string());
    save_json(to_json(sc.structure), (fs::path(a.out) / "structure.json").string());
    save_json(to_json(sc.init), (fs::path(a.out) / "hand_init.json").string());
    save_json(to_json(sc.truth), (fs::path(a.out) / "hand_truth.json").string());
    metrics.results = {{"events", sc.events.size()}};
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown kind '" + a.kind + "'");
  }

  metrics.write(a.out);
  return 0;
}

// --- calibrate-body ---------------------------------------------------------

struct CalibrateBodyArgs {
  std::string in;
  std::string out;
  std::string init;  // optional skeleton json
  BodyCalibrationOptions opt;
};

int run_calibrate_body(const CalibrateBodyArgs& a) {
  prepare_out_dir(a.out, {a.in, a.init});
  const CaptureSession s = load_session(a.in);
  const BodySkeleton init =
      a.init.empty() ? BodySkeleton::standard() : body_skeleton_from(load_json(a.init));

  const Triangulation tri =
      triangulate_session(s, body_marker_id_base, std::numeric_limits<int>::max());
  if (tri.by_frame.empty()) {
    throw Error(ErrorCode::NoVisibleMarkers, "no body marker corners triangulated");
  }

  std::vector<BodyCalibrationFrame> frames;
  for (const auto& [frame, corners] : tri.by_frame) {
    BodyCalibrationFrame f;
    f.angles = s.mocap[mocap_index(s, frame)].body_angles;
    f.observed.assign(init.markers.size(), std::nullopt);
    // collate the four corners of each marker square; partial squares stay
    // unobserved so correspondence order is never ambiguous
    std::map<int, std::array<std::optional<Vec3>, 4>> partial;
    for (const auto& c : corners) {
      partial[c.marker_id - body_marker_id_base][static_cast<std::size_t>(c.corner_index)] =
          c.position;
    }
    for (const auto& [m, quad] : partial) {
      if (m < 0 || static_cast<std::size_t>(m) >= init.markers.size()) continue;
      if (!quad[0] || !quad[1] || !quad[2] || !quad[3]) continue;
      f.observed[static_cast<std::size_t>(m)] = {{*quad[0], *quad[1], *quad[2], *quad[3]}};
    }
    frames.push_back(std::move(f));
  }

  const BodyCalibrationResult result = calibrate_body(frames, init, a.opt);
  save_json(to_json(result.skeleton), (fs::path(a.out) / "skeleton.json").string());

  Metrics metrics;
  metrics.verb = "calibrate-body";
  metrics.inputs = {{"session", a.in}, {"init", a.init}};
  metrics.config = {{"learning_rate", a.opt.learning_rate},
                    {"epochs", a.opt.epochs},
                    {"batch_size", a.opt.batch_size},
                    {"momentum", a.opt.momentum},
                    {"lambda_body", a.opt.lambda_body},
                    {"lambda_foot", a.opt.lambda_foot},
                    {"ground_band", a.opt.ground_band}};
  metrics.results = {{"frames", frames.size()},
                     {"corners_attempted", tri.attempted},
                     {"corners_solved", tri.solved},
                     {"final_loss", result.loss_history.back()},
                     {"final_marker_rms_m", result.final_marker_rms},
                     {"loss_history", result.loss_history}};
  metrics.write(a.out);
  return 0;
}

// --- calibrate-hand ---------------------------------------------------------

struct CalibrateHandArgs {
  std::string touches;
  std::string structure;
  std::string out;
  std::string init;
  bool left = false;
  HandCalibrationOptions opt;
};

int run_calibrate_hand(const CalibrateHandArgs& a) {
  prepare_out_dir(a.out, {a.touches, a.structure, a.init});
  const std::vector<HandTouchEvent> events = load_touches(a.touches);
  const CalibrationStructure structure = structure_from(load_json(a.structure));
  const HandSkeleton init =
      a.init.empty() ? HandSkeleton::standard(a.left) : hand_skeleton_from(load_json(a.init));

  const HandCalibrationResult result = calibrate_hand(events, structure, init, a.opt);
  save_json(to_json(result.skeleton), (fs::path(a.out) / "hand.json").string());

  Metrics metrics;
  metrics.verb = "calibrate-hand";
  metrics.inputs = {{"touches", a.touches}, {"structure", a.structure}, {"init", a.init}};
  metrics.config = {{"iterations", a.opt.iterations},
                    {"scale_start", a.opt.scale_start},
                    {"offset_start", a.opt.offset_start},
                    {"lambda_tip", a.opt.lambda_tip},
                    {"lambda_wrist", a.opt.lambda_wrist},
                    {"lambda_pen", a.opt.lambda_pen},
                    {"left", a.left}};
  metrics.results = {{"events", events.size()},
                     {"mean_tip_distance_m", result.mean_tip_distance},
                     {"final_loss", result.loss_history.back()},
                     {"loss_history", result.loss_history}};
  metrics.write(a.out);
  return 0;
}

// --- track-objects ----------------------------------------------------------

struct TrackArgs {
  std::string in;
  std::string out;
};

int run_track_objects(const TrackArgs& a) {
  prepare_out_dir(a.out, {a.in});
  const CaptureSession s = load_session(a.in);
  if (s.objects.empty()) throw Error(ErrorCode::EmptySession, "session declares no objects");

  const Triangulation tri = triangulate_session(s, 0, body_marker_id_base);

  std::vector<TriangulatedCorner> all;
  std::vector<PoseRecord> poses;
  std::size_t skipped = 0;
  for (const auto& [frame, corners] : tri.by_frame) {
    all.insert(all.end(), corners.begin(), corners.end());
    for (const auto& obj : s.objects) {
      const auto base = part_pose(corners, obj.parts.front());
      if (!base) {
        ++skipped;
        continue;
      }
      PoseRecord rec;
      rec.frame = frame;
      rec.object = obj.name;
      rec.pose = *base;
      bool complete = true;
      for (std::size_t p = 1; p < obj.parts.size(); ++p) {
        if (obj.parts[p].kind == "fixed") continue;
        const auto moving = part_pose(corners, obj.parts[p]);
        if (!moving) {
          complete = false;
          break;
        }
        rec.states.push_back(part_state(*base, *moving, joint_of(obj.parts[p])).value);
      }
      if (!complete) {
        ++skipped;
        continue;
      }
      poses.push_back(std::move(rec));
    }
  }
  if (poses.empty()) throw Error(ErrorCode::NoVisibleMarkers, "no object pose could be solved");

  save_poses(poses, (fs::path(a.out) / "poses.jsonl").string());
  const ReprojectionReport report = reprojection_report(all, {});

  Metrics metrics;
  metrics.verb = "track-objects";
  metrics.inputs = {{"session", a.in}};
  metrics.results = {{"poses", poses.size()},
                     {"frames", tri.by_frame.size()},
                     {"frames_skipped", skipped},
                     {"corners_attempted", tri.attempted},
                     {"corners_solved", tri.solved},
                     {"mean_reprojection_rms_px", report.mean_rms_px},
                     {"mean_views", report.mean_views}};
  metrics.write(a.out);
  return 0;
}

// --- fit-articulation -------------------------------------------------------

struct FitArgs {
  std::string in;
  std::string out;
  std::string object;
  std::string part;
  int max_states = 40;
};

int run_fit_articulation(const FitArgs& a) {
  prepare_out_dir(a.out, {a.in});
  const CaptureSession s = load_session(a.in);

  const ObjectSpec* obj = nullptr;
  for (const auto& o : s.objects) {
    if (a.object.empty() || o.name == a.object) {
      obj = &o;
      break;
    }
  }
  if (!obj) throw Error(ErrorCode::InvalidArgument, "object not found in session");
  const ObjectPart* part = nullptr;
  for (const auto& p : obj->parts) {
    if (a.part.empty() ? p.kind != "fixed" : p.part == a.part) {
      part = &p;
      break;
    }
  }
  if (!part) throw Error(ErrorCode::InvalidArgument, "part not found on object");

  const Triangulation tri = triangulate_session(s, 0, body_marker_id_base);
  std::set<int> part_ids;
  for (const auto& cube : part->cubes) part_ids.insert(cube.id);

  // part corners re-expressed in the object-canonical frame via the solved
  // base pose, keyed so correspondence survives occlusion differences
  using CornerKey = std::pair<int, int>;  // (marker_id, corner_index)
  std::vector<std::pair<std::int64_t, std::map<CornerKey, Vec3>>> per_frame;
  for (const auto& [frame, corners] : tri.by_frame) {
    const auto base = part_pose(corners, obj->parts.front());
    if (!base) continue;
    const RigidTransform world_to_base = inverse(*base);
    std::map<CornerKey, Vec3> in_base;
    for (const auto& c : corners) {
      if (!part_ids.count(c.marker_id / MarkerCube::kFaces)) continue;
      in_base[{c.marker_id, c.corner_index}] = world_to_base.apply(c.position);
    }
    if (in_base.size() >= 3) per_frame.emplace_back(frame, std::move(in_base));
  }
  if (per_frame.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "fewer than two usable articulation states");
  }

  // keep corners seen in nearly every usable frame, then frames that carry
  // all of them
  std::map<CornerKey, std::size_t> seen;
  for (const auto& [frame, corners] : per_frame) {
    for (const auto& [key, p] : corners) ++seen[key];
  }
  std::vector<CornerKey> keys;
  for (const auto& [key, count] : seen) {
    if (count * 10 >= per_frame.size() * 9) keys.push_back(key);
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < per_frame.size(); ++i) {
    const auto& corners = per_frame[i].second;
    if (std::all_of(keys.begin(), keys.end(),
                    [&](const CornerKey& k) { return corners.count(k) > 0; })) {
      usable.push_back(i);
    }
  }
  if (keys.size() < 3 || usable.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "not enough shared corners across states");
  }

  std::vector<std::size_t> picked;
  const std::size_t want = std::max<std::size_t>(2, static_cast<std::size_t>(a.max_states));
  if (usable.size() <= want) {
    picked = usable;
  } else {
    for (std::size_t k = 0; k < want; ++k) {
      picked.push_back(usable[k * (usable.size() - 1) / (want - 1)]);
    }
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  }

  PartObservationSet obs;
  std::vector<std::int64_t> frames_used;
  for (const std::size_t i : picked) {
    std::vector<Vec3> state;
    state.reserve(keys.size());
    for (const auto& key : keys) state.push_back(per_frame[i].second.at(key));
    obs.states.push_back(std::move(state));
    frames_used.push_back(per_frame[i].first);
  }

  json result;
  result["schema_version"] = kSchemaVersion;
  result["object"] = obj->name;
  result["part"] = part->part;
  result["frames"] = frames_used;
  double objective = 0.0;
  if (part->kind == "sliding") {
    const JointSpec joint = fit_sliding(obs);
    result["kind"] = "sliding";
    result["axis"] = to_json(joint.axis);
    Vec3 origin = Vec3::Zero();
    for (const auto& p : obs.states.front()) origin += p;
    origin /= static_cast<double>(obs.states.front().size());
    json states = json::array();
    for (const auto& state : obs.states) {
      Vec3 centroid = Vec3::Zero();
      for (const auto& p : state) centroid += p;
      centroid /= static_cast<double>(state.size());
      states.push_back(joint.axis.dot(centroid - origin));
    }
    result["states"] = states;
  } else {
    const RevoluteFit fit = fit_revolute(obs);
    result["kind"] = "revolute";
    result["axis"] = to_json(fit.joint.axis);
    result["pivot"] = to_json(*fit.joint.pivot);
    result["states"] = fit.states;
    objective = fit.objective;
  }
  save_json(result, (fs::path(a.out) / "articulation.json").string());

  Metrics metrics;
  metrics.verb = "fit-articulation";
  metrics.inputs = {{"session", a.in}};
  metrics.config = {{"object", obj->name}, {"part", part->part}, {"max_states", a.max_states}};
  metrics.results = {{"states_used", obs.states.size()},
                     {"corners_per_state", keys.size()},
                     {"objective", objective}};
  metrics.write(a.out);
  return 0;
}

// --- postprocess ------------------------------------------------------------

struct PostArgs {
  std::string in;
  std::string poses;  // overrides the session's own poses.jsonl when set
  std::string out;
  double radius = 0.10;
};

int run_postprocess(const PostArgs& a) {
  prepare_out_dir(a.out, {a.in, a.poses});
  CaptureSession s = load_session(a.in);
  std::vector<PoseRecord> tracked = a.poses.empty() ? s.poses : load_poses(a.poses);
  if (tracked.empty()) throw Error(ErrorCode::EmptySession, "no object poses to post-process");
  if (s.mocap.empty()) throw Error(ErrorCode::EmptySession, "session has no mocap stream");

  std::int64_t max_frame = 0;
  for (const auto& rec : tracked) max_frame = std::max(max_frame, rec.frame);
  const auto n = static_cast<std::size_t>(max_frame + 1);

  const BodySkeleton skel = BodySkeleton::standard();
  std::vector<std::vector<RigidTransform>> joints(n);
  for (std::size_t t = 0; t < n; ++t) {
    const BodyFk fk =
        fk_body(skel, s.mocap[mocap_index(s, static_cast<std::int64_t>(t))].body_angles);
    joints[t] = fk.joint_poses;
  }

  std::vector<PoseRecord> completed;
  json gap_log = json::array();
  for (const auto& obj : s.objects) {
    std::vector<std::optional<RigidTransform>> object(n);
    std::vector<std::vector<double>> states(n);
    for (const auto& rec : tracked) {
      if (rec.object != obj.name) continue;
      object[static_cast<std::size_t>(rec.frame)] = rec.pose;
      states[static_cast<std::size_t>(rec.frame)] = rec.states;
    }
    const MeshDistanceGrid surface(obj.mesh, 0.05);
    const GapFillOptions options{a.radius};

    // interior runs of missing frames only; leading or trailing runs have a
    // single boundary and stay unfilled
    std::size_t t = 0;
    while (t < n && !object[t]) ++t;
    while (t < n) {
      if (object[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < n && !object[end]) ++end;
      if (end == n) break;
      TrackGap gap;
      gap.id = obj.name;
      gap.t0 = static_cast<std::int64_t>(t);
      gap.t1 = static_cast<std::int64_t>(end) - 1;
      const GapFill fill = fill_object_gap(gap, joints, object, surface, options);
      const auto& s0 = states[t - 1];
      const auto& s1 = states[end];
      for (std::size_t k = 0; k < fill.poses.size(); ++k) {
        const std::size_t frame = t + k;
        object[frame] = fill.poses[k];
        if (s0.size() == s1.size() && !s0.empty()) {
          const double alpha =
              static_cast<double>(k + 1) / static_cast<double>(fill.poses.size() + 1);
          std::vector<double> blended(s0.size());
          for (std::size_t i = 0; i < s0.size(); ++i) {
            blended[i] = (1.0 - alpha) * s0[i] + alpha * s1[i];
          }
          states[frame] = std::move(blended);
        }
      }
      gap_log.push_back(
          {{"object", obj.name},
           {"t0", gap.t0},
           {"t1", gap.t1},
           {"method", fill.method == FillMethod::JointAttachment ? "joint" : "interpolation"},
           {"joint", fill.joint}});
      t = end;
    }

    for (std::size_t f = 0; f < n; ++f) {
      if (!object[f]) continue;
      PoseRecord rec;
      rec.frame = static_cast<std::int64_t>(f);
      rec.object = obj.name;
      rec.pose = *object[f];
      rec.states = states[f];
      completed.push_back(std::move(rec));
    }
  }
  std::sort(completed.begin(), completed.end(), [](const PoseRecord& x, const PoseRecord& y) {
    return std::tie(x.frame, x.object) < std::tie(y.frame, y.object);
  });
  save_poses(completed, (fs::path(a.out) / "poses.jsonl").string());

  Metrics metrics;
  metrics.verb = "postprocess";
  metrics.inputs = {{"session", a.in}, {"poses", a.poses}};
  metrics.config = {{"proximity_radius", a.radius}};
  metrics.results = {{"poses", completed.size()},
                     {"gaps_filled", gap_log.size()},
                     {"gaps", gap_log}};
  metrics.write(a.out);
  return 0;
}

// --- export-features --------------------------------------------------------

struct FeatureArgs {
  std::string in;
  std::string out;
  double contact_height = 0.05;
  double contact_speed = 0.01;
};

int run_export_features(const FeatureArgs& a) {
  prepare_out_dir(a.out, {a.in});
  const CaptureSession s = load_session(a.in);
  if (s.mocap.size() < 2) throw Error(ErrorCode::TooShort, "need at least 2 mocap frames");

  const BodySkeleton skel = BodySkeleton::standard();
  const std::vector<SkeletonFrame> stream = mocap_skeleton_stream(s, skel);

  FeatureOptions options;
  options.foot_joints = {skel.joint_index("right_foot"), skel.joint_index("right_toe"),
                         skel.joint_index("left_foot"), skel.joint_index("left_toe")};
  options.contact_height = a.contact_height;
  options.contact_speed = a.contact_speed;
  // the mocap odometry has no absolute ground reference; the lowest foot
  // sample over the clip anchors the plane
  double ground = std::numeric_limits<double>::infinity();
  for (const auto& frame : stream) {
    for (const int j : options.foot_joints) {
      ground = std::min(ground, frame.joints[static_cast<std::size_t>(j)].translation.z());
    }
  }
  options.ground_z = ground;

  const std::vector<MotionFeatureFrame> features = build_features(stream, options);
  save_features(features, (fs::path(a.out) / "features.bin").string(),
                (fs::path(a.out) / "features.json").string(), s.mocap_rate);

  Metrics metrics;
  metrics.verb = "export-features";
  metrics.inputs = {{"session", a.in}};
  metrics.config = {{"contact_height", a.contact_height},
                    {"contact_speed", a.contact_speed}};
  metrics.results = {{"skeleton_frames", stream.size()},
                     {"feature_frames", features.size()},
                     {"joints", skel.joints.size()},
                     {"dimension", MotionFeatureFrame::dimension(skel.joints.size())},
                     {"ground_z", options.ground_z}};
  metrics.write(a.out);
  return 0;
}

// --- contacts ---------------------------------------------------------------

struct ContactArgs {
  std::string in;
  std::string poses;
  std::string out;
  double threshold = 0.01;
};

int run_contacts(const ContactArgs& a) {
  prepare_out_dir(a.out, {a.in, a.poses});
  const CaptureSession s = load_session(a.in);
  const std::vector<PoseRecord> tracked = a.poses.empty() ? s.poses : load_poses(a.poses);
  if (tracked.empty()) throw Error(ErrorCode::EmptySession, "no object poses for contacts");
  if (s.objects.empty()) throw Error(ErrorCode::EmptySession, "session declares no objects");

  // frames where every object has a solved pose
  std::map<std::int64_t, std::map<std::string, const PoseRecord*>> by_frame;
  for (const auto& rec : tracked) by_frame[rec.frame][rec.object] = &rec;
  std::vector<std::int64_t> frames;
  for (const auto& [frame, recs] : by_frame) {
    if (recs.size() == s.objects.size()) frames.push_back(frame);
  }
  if (frames.empty()) throw Error(ErrorCode::EmptySession, "no frame has all objects posed");

  const BodySkeleton skel = BodySkeleton::standard();
  std::vector<std::vector<Vec3>> joints(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const BodyFk fk = fk_body(skel, s.mocap[mocap_index(s, frames[k])].body_angles);
    joints[k].reserve(fk.joint_poses.size());
    for (const auto& pose : fk.joint_poses) joints[k].push_back(pose.translation);
  }
  std::vector<ContactParty> party;
  party.reserve(skel.joints.size());
  for (const auto& joint : skel.joints) party.push_back(party_of(joint.name));

  std::vector<ContactTarget> targets;
  for (const auto& obj : s.objects) {
    int moving_index = 0;
    for (std::size_t p = 0; p < obj.parts.size(); ++p) {
      ContactTarget target;
      target.object = obj.name;
      target.part = static_cast<int>(p);
      target.mesh = &obj.mesh;
      target.poses.reserve(frames.size());
      const bool fixed = obj.parts[p].kind == "fixed";
      const int state_slot = fixed ? -1 : moving_index++;
      for (std::size_t k = 0; k < frames.size(); ++k) {
        const PoseRecord& rec = *by_frame[frames[k]].at(obj.name);
        if (fixed || static_cast<std::size_t>(state_slot) >= rec.states.size()) {
          target.poses.push_back(rec.pose);
        } else {
          target.poses.push_back(compose(
              rec.pose, joint_transform(joint_of(obj.parts[p]),
                                        rec.states[static_cast<std::size_t>(state_slot)])));
        }
      }
      targets.push_back(std::move(target));
    }
  }

  ContactOptions options;
  options.threshold = a.threshold;
  std::vector<ContactRecord> records = compute_contacts(joints, party, targets, options);
  for (auto& rec : records) rec.frame = frames[static_cast<std::size_t>(rec.frame)];
  save_contacts(records, (fs::path(a.out) / "contacts.jsonl").string());

  Metrics metrics;
  metrics.verb = "contacts";
  metrics.inputs = {{"session", a.in}, {"poses", a.poses}};
  metrics.config = {{"threshold", a.threshold}};
  metrics.results = {{"records", records.size()}, {"frames", frames.size()}};
  metrics.write(a.out);
  return 0;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  int cameras = 20;
  int frames = 600;
  int targets = 40;
  std::uint64_t seed = 6;
  bool capsules_only = false;
  // occlusion study
  std::vector<std::size_t> markers = {4, 7, 10, 20, 40};
  std::size_t window = 300;
  std::size_t stride = 30;
  // camera study
  std::vector<std::size_t> sizes = {2, 5, 10, 15, 20};
  std::size_t samples = 20;
};

SyntheticScene build_scene(const SimulateArgs& a) {
  OcclusionSceneSpec spec;
  spec.rig.cameras = a.cameras;
  spec.frames = a.frames;
  spec.targets = a.targets;
  spec.mesh_occluders = !a.capsules_only;
  spec.seed = a.seed;
  return generate_occlusion_scene(spec);
}

int run_simulate_occlusion(const SimulateArgs& a) {
  prepare_out_dir(a.out, {});
  const SyntheticScene scene = build_scene(a);
  const std::vector<StudyRow> rows =
      virtual_marker_study(scene, a.markers, a.window, a.stride);
  write_study_csv((fs::path(a.out) / "marker_study.csv").string(), "markers", rows);

  Metrics metrics;
  metrics.verb = "simulate-occlusion";
  metrics.seed = a.seed;
  metrics.config = {{"cameras", a.cameras},   {"frames", a.frames},
                    {"targets", a.targets},   {"capsules_only", a.capsules_only},
                    {"markers", a.markers},   {"window", a.window},
                    {"stride", a.stride}};
  metrics.results = {{"rows", study_rows_json(rows)}};
  metrics.write(a.out);
  return 0;
}

int run_simulate_cameras(const SimulateArgs& a) {
  prepare_out_dir(a.out, {});
  const SyntheticScene scene = build_scene(a);
  std::vector<std::size_t> sizes = a.sizes;
  for (auto& v : sizes) v = std::min(v, static_cast<std::size_t>(a.cameras));
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  const std::vector<StudyRow> rows = camera_count_study(scene, sizes, a.samples);
  write_study_csv((fs::path(a.out) / "camera_study.csv").string(), "cameras", rows);

  Metrics metrics;
  metrics.verb = "simulate-cameras";
  metrics.seed = a.seed;
  metrics.config = {{"cameras", a.cameras}, {"frames", a.frames},
                    {"targets", a.targets}, {"capsules_only", a.capsules_only},
                    {"sizes", sizes},       {"samples", a.samples}};
  metrics.results = {{"rows", study_rows_json(rows)}};
  metrics.write(a.out);
  return 0;
}

// --- evaluate drop-recover --------------------------------------------------

struct DropArgs {
  std::string out;
  std::vector<std::size_t> windows = {5, 15, 30, 60};
  int frames = 240;
  std::uint64_t seed = 5;
  double radius = 0.10;
};

int run_drop_recover(const DropArgs& a) {
  prepare_out_dir(a.out, {});
  CarriedObjectSpec spec;
  spec.frames = a.frames;
  spec.seed = a.seed;
  const CarriedObjectScenario sc = generate_carried_object(spec);
  const MeshDistanceGrid surface(sc.mesh, 0.05);
  const GapFillOptions options{a.radius};
  const std::vector<DropRecoverRow> rows =
      drop_and_recover(sc.joints, sc.object, surface, a.windows, options);

  std::ofstream csv(fs::path(a.out) / "drop_recover.csv");
  if (!csv) throw Error(ErrorCode::IoError, "cannot write drop_recover.csv");
  csv.precision(12);
  csv << "window,fill_translation_m,fill_rotation_rad,baseline_translation_m,"
         "baseline_rotation_rad\n";
  json rows_json = json::array();
  for (const auto& r : rows) {
    csv << r.window << "," << r.fill_translation << "," << r.fill_rotation << ","
        << r.baseline_translation << "," << r.baseline_rotation << "\n";
    rows_json.push_back({{"window", r.window},
                         {"fill_translation_m", r.fill_translation},
                         {"fill_rotation_rad", r.fill_rotation},
                         {"baseline_translation_m", r.baseline_translation},
                         {"baseline_rotation_rad", r.baseline_rotation}});
  }

  Metrics metrics;
  metrics.verb = "evaluate-drop-recover";
  metrics.seed = a.seed;
  metrics.config = {{"windows", a.windows},
                    {"frames", a.frames},
                    {"proximity_radius", a.radius}};
  metrics.results = {{"rows", rows_json}};
  metrics.write(a.out);
  return 0;
}

}  // namespace
}  // namespace mfk::tool

int main(int argc, char** argv) {
  using namespace mfk::tool;

  CLI::App app{"multi-view capture pipeline"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "generate a synthetic capture");
  gen_cmd->add_option("--kind", gen.kind, "session|tracking|articulated|rom|hand")
      ->check(CLI::IsMember({"session", "tracking", "articulated", "rom", "hand"}));
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--frames", gen.frames, "frame count (0 = preset default)");
  gen_cmd->add_option("--cameras", gen.cameras, "rig size");
  gen_cmd->add_option("--noise-px", gen.noise_px, "pixel noise sigma (<0 = preset default)");
  gen_cmd->add_option("--noise-m", gen.noise_m, "metric noise sigma");
  gen_cmd->add_option("--perturb", gen.perturb, "rom: initial offset perturbation, m");
  gen_cmd->add_option("--joint", gen.joint, "articulated: revolute|sliding")
      ->check(CLI::IsMember({"revolute", "sliding"}));
  gen_cmd->add_flag("--left", gen.left, "hand: generate the left hand");

  CalibrateBodyArgs cb;
  auto* cb_cmd = app.add_subcommand("calibrate-body", "fit joint offsets and suit markers");
  cb_cmd->add_option("--in", cb.in, "session directory")->required();
  cb_cmd->add_option("--out", cb.out, "output directory")->required();
  cb_cmd->add_option("--init", cb.init, "initial skeleton json");
  cb_cmd->add_option("--epochs", cb.opt.epochs, "optimizer epochs");
  cb_cmd->add_option("--lr", cb.opt.learning_rate, "step scale");
  cb_cmd->add_option("--batch", cb.opt.batch_size, "frames per gradient step");
  cb_cmd->add_option("--momentum", cb.opt.momentum, "heavy-ball coefficient");
  cb_cmd->add_option("--lambda-body", cb.opt.lambda_body, "marker term weight");
  cb_cmd->add_option("--lambda-foot", cb.opt.lambda_foot, "ground term weight");
  cb_cmd->add_option("--ground-band", cb.opt.ground_band, "foot band height, m");

  CalibrateHandArgs ch;
  auto* ch_cmd = app.add_subcommand("calibrate-hand", "fit hand scales, offsets, markers");
  ch_cmd->add_option("--touches", ch.touches, "hand_touches.jsonl")->required();
  ch_cmd->add_option("--structure", ch.structure, "structure.json")->required();
  ch_cmd->add_option("--out", ch.out, "output directory")->required();
  ch_cmd->add_option("--init", ch.init, "initial hand json");
  ch_cmd->add_flag("--left", ch.left, "default template is the left hand");
  ch_cmd->add_option("--iterations", ch.opt.iterations, "descent iterations");
  ch_cmd->add_option("--scale-start", ch.opt.scale_start, "iteration activating scales");
  ch_cmd->add_option("--offset-start", ch.opt.offset_start, "iteration activating offsets");

  TrackArgs track;
  auto* track_cmd = app.add_subcommand("track-objects", "solve object poses from detections");
  track_cmd->add_option("--in", track.in, "session directory")->required();
  track_cmd->add_option("--out", track.out, "output directory")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-articulation", "fit a joint from tracked motion");
  fit_cmd->add_option("--in", fit.in, "session directory")->required();
  fit_cmd->add_option("--out", fit.out, "output directory")->required();
  fit_cmd->add_option("--object", fit.object, "object name (default: first)");
  fit_cmd->add_option("--part", fit.part, "part name (default: first articulated)");
  fit_cmd->add_option("--max-states", fit.max_states, "states sampled from the clip");

  PostArgs post;
  auto* post_cmd = app.add_subcommand("postprocess", "fill object tracking gaps");
  post_cmd->add_option("--in", post.in, "session directory")->required();
  post_cmd->add_option("--poses", post.poses, "poses.jsonl overriding the session's");
  post_cmd->add_option("--out", post.out, "output directory")->required();
  post_cmd->add_option("--radius", post.radius, "joint attachment radius, m");

  FeatureArgs feat;
  auto* feat_cmd = app.add_subcommand("export-features", "motion features from mocap");
  feat_cmd->add_option("--in", feat.in, "session directory")->required();
  feat_cmd->add_option("--out", feat.out, "output directory")->required();
  feat_cmd->add_option("--contact-height", feat.contact_height, "foot contact height, m");
  feat_cmd->add_option("--contact-speed", feat.contact_speed, "foot contact speed, m/frame");

  ContactArgs contact;
  auto* contact_cmd = app.add_subcommand("contacts", "person-object contact records");
  contact_cmd->add_option("--in", contact.in, "session directory")->required();
  contact_cmd->add_option("--poses", contact.poses, "poses.jsonl overriding the session's");
  contact_cmd->add_option("--out", contact.out, "output directory")->required();
  contact_cmd->add_option("--threshold", contact.threshold, "contact distance, m (inclusive)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "visibility studies on synthetic scenes");
  sim_cmd->require_subcommand(1);
  auto add_scene_options = [&](CLI::App* cmd) {
    cmd->add_option("--out", sim.out, "output directory")->required();
    cmd->add_option("--cameras", sim.cameras, "rig size");
    cmd->add_option("--frames", sim.frames, "scene frames");
    cmd->add_option("--targets", sim.targets, "surface targets on the tracked object");
    cmd->add_option("--seed", sim.seed, "scene seed");
    cmd->add_flag("--capsules-only", sim.capsules_only, "drop mesh occluders");
  };
  auto* occ_cmd = sim_cmd->add_subcommand("occlusion", "tracking ratio vs marker count");
  add_scene_options(occ_cmd);
  occ_cmd->add_option("--markers", sim.markers, "marker counts")->delimiter(',');
  occ_cmd->add_option("--window", sim.window, "window length, frames");
  occ_cmd->add_option("--stride", sim.stride, "window stride, frames");
  auto* cam_cmd = sim_cmd->add_subcommand("cameras", "detection ratio vs camera count");
  add_scene_options(cam_cmd);
  cam_cmd->add_option("--sizes", sim.sizes, "camera subset sizes")->delimiter(',');
  cam_cmd->add_option("--samples", sim.samples, "random subsets per size");

  DropArgs drop;
  auto* eval_cmd = app.add_subcommand("evaluate", "pipeline quality studies");
  eval_cmd->require_subcommand(1);
  auto* drop_cmd = eval_cmd->add_subcommand("drop-recover", "gap fill vs interpolation");
  drop_cmd->add_option("--out", drop.out, "output directory")->required();
  drop_cmd->add_option("--windows", drop.windows, "gap lengths, frames")->delimiter(',');
  drop_cmd->add_option("--frames", drop.frames, "carried-object clip length");
  drop_cmd->add_option("--seed", drop.seed, "scenario seed");
  drop_cmd->add_option("--radius", drop.radius, "joint attachment radius, m");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*cb_cmd) return run_calibrate_body(cb);
    if (*ch_cmd) return run_calibrate_hand(ch);
    if (*track_cmd) return run_track_objects(track);
    if (*fit_cmd) return run_fit_articulation(fit);
    if (*post_cmd) return run_postprocess(post);
    if (*feat_cmd) return run_export_features(feat);
    if (*contact_cmd) return run_contacts(contact);
    if (*occ_cmd) return run_simulate_occlusion(sim);
    if (*cam_cmd) return run_simulate_cameras(sim);
    if (*drop_cmd) return run_drop_recover(drop);
  } catch (const mfk::Error& e) {
    json err = {{"error",
                 {{"code", mfk::name_of(e.code())},
                  {"kind", e.kind() == mfk::ErrorKind::Validation ? "validation" : "numerical"},
                  {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return e.kind() == mfk::ErrorKind::Validation ? 2 : 3;
  } catch (const nlohmann::json::exception& e) {
    json err = {{"error",
                 {{"code", "CorruptStream"}, {"kind", "validation"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    json err = {
        {"error", {{"code", "Internal"}, {"kind", "numerical"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 3;
  }
  return 0;
}
