#include "mfk/simulation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mfk/errors.hpp"
#include "mfk/parallel.hpp"
#include "mfk/random.hpp"

namespace mfk {

namespace {

template <typename T>
const T& stream_at(const std::vector<T>& stream, std::size_t frame) {
  return stream.size() == 1 ? stream.front() : stream[frame];
}

void check_stream_size(std::size_t size, std::size_t frames, const char* what) {
  if (size != 1 && size != frames) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + " stream must have 1 or frame_count entries");
  }
}

bool camera_sees(const CameraModel& cam, const Vec3& p) {
  const Vec3 pc = cam.extrinsics.apply(p);
  if (pc.z() <= 1e-9) return false;
  const Vec3 h = cam.intrinsics * pc;
  const double u = h.x() / h.z(), v = h.y() / h.z();
  return u >= 0.0 && v >= 0.0 && u <= cam.width && v <= cam.height;
}

bool front_facing(const Vec3& normal, const Vec3& point, const Vec3& cam_center) {
  if (normal.squaredNorm() == 0.0) return true;
  return normal.dot(cam_center - point) > 0.0;
}

double sample_stddev(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (const double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

void SyntheticScene::validate() const {
  if (rig.empty()) throw Error(ErrorCode::InvalidArgument, "scene has no cameras");
  if (frame_count == 0) throw Error(ErrorCode::InvalidArgument, "scene has no frames");
  for (const auto& cam : rig) {
    if (cam.width <= 0 || cam.height <= 0) {
      throw Error(ErrorCode::InvalidArgument, "camera without a valid sensor size");
    }
  }
  for (const auto& occ : occluders) {
    occ.mesh.validate();
    if (occ.mesh.triangles.empty()) {
      throw Error(ErrorCode::InvalidArgument, "occluder mesh has no triangles");
    }
    check_stream_size(occ.poses.size(), frame_count, "occluder pose");
  }
  if (!capsules.empty() && capsules.size() != frame_count) {
    throw Error(ErrorCode::InvalidArgument,
                "capsule stream must have frame_count entries");
  }
  for (const auto& frame : capsules) {
    for (const auto& c : frame) {
      if (!c.a.allFinite() || !c.b.allFinite() || !(c.radius > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "bad capsule");
      }
    }
  }
  if (targets.empty()) throw Error(ErrorCode::InvalidArgument, "scene has no targets");
  for (const auto& t : targets) {
    check_stream_size(t.positions.size(), frame_count, "target position");
    check_stream_size(t.normals.size(), frame_count, "target normal");
    for (const auto& p : t.positions) {
      if (!p.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite target");
    }
    for (const auto& n : t.normals) {
      if (!n.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite normal");
    }
  }
}

SceneTracer::SceneTracer(const SyntheticScene& scene) : scene_(&scene) {
  scene.validate();
  bvhs_.reserve(scene.occluders.size());
  for (const auto& occ : scene.occluders) bvhs_.emplace_back(occ.mesh);
}

bool SceneTracer::clear_line(const Vec3& from, const Vec3& to,
                             std::size_t frame) const {
  for (std::size_t m = 0; m < bvhs_.size(); ++m) {
    const auto& pose = stream_at(scene_->occluders[m].poses, frame);
    if (bvhs_[m].segment_occluded(from, to, pose, kEndpointMargin)) return false;
  }
  if (!scene_->capsules.empty()) {
    for (const auto& cap : scene_->capsules[frame]) {
      if (segment_hits_capsule(from, to, cap)) return false;
    }
  }
  return true;
}

VisibilityRecord SceneTracer::visibility(std::size_t frame) const {
  if (frame >= scene_->frame_count) {
    throw Error(ErrorCode::InvalidArgument, "frame out of range");
  }
  VisibilityRecord rec;
  rec.cameras.resize(scene_->targets.size());
  for (std::size_t ti = 0; ti < scene_->targets.size(); ++ti) {
    const auto& target = scene_->targets[ti];
    const Vec3 p = stream_at(target.positions, frame);
    const Vec3 n = stream_at(target.normals, frame);
    for (std::size_t ci = 0; ci < scene_->rig.size(); ++ci) {
      const auto& cam = scene_->rig[ci];
      const Vec3 center = cam.center();
      if (!camera_sees(cam, p)) continue;
      if (!front_facing(n, p, center)) continue;
      if (!clear_line(center, p, frame)) continue;
      rec.cameras[ti].push_back(static_cast<int>(ci));
    }
  }
  return rec;
}

std::vector<VisibilityRecord> SceneTracer::visibility_all() const {
  std::vector<VisibilityRecord> records(scene_->frame_count);
  parallel_for(scene_->frame_count,
               [&](std::size_t f) { records[f] = visibility(f); });
  return records;
}

VisibilityRecord visibility(const SyntheticScene& scene, std::size_t frame) {
  return SceneTracer(scene).visibility(frame);
}

std::vector<VisibilityRecord> visibility_all(const SyntheticScene& scene) {
  return SceneTracer(scene).visibility_all();
}

VisibilityRecord visibility_brute(const SyntheticScene& scene, std::size_t frame) {
  scene.validate();
  if (frame >= scene.frame_count) {
    throw Error(ErrorCode::InvalidArgument, "frame out of range");
  }
  constexpr double kMargin = 1e-6;
  VisibilityRecord rec;
  rec.cameras.resize(scene.targets.size());
  for (std::size_t ti = 0; ti < scene.targets.size(); ++ti) {
    const auto& target = scene.targets[ti];
    const Vec3 p = stream_at(target.positions, frame);
    const Vec3 n = stream_at(target.normals, frame);
    for (std::size_t ci = 0; ci < scene.rig.size(); ++ci) {
      const auto& cam = scene.rig[ci];
      const Vec3 center = cam.center();
      if (!camera_sees(cam, p)) continue;
      if (!front_facing(n, p, center)) continue;
      bool blocked = false;
      for (const auto& occ : scene.occluders) {
        const auto& pose = stream_at(occ.poses, frame);
        const RigidTransform inv = inverse(pose);
        const Vec3 a = inv.apply(center), b = inv.apply(p);
        const Vec3 d = b - a;
        const double len = d.norm();
        if (len <= 2.0 * kMargin) continue;
        const double t_lo = kMargin / len, t_hi = 1.0 - kMargin / len;
        for (std::size_t t = 0; t < occ.mesh.triangles.size() && !blocked; ++t) {
          const auto hit = ray_triangle(a, d, occ.mesh.triangle_vertex(t, 0),
                                        occ.mesh.triangle_vertex(t, 1),
                                        occ.mesh.triangle_vertex(t, 2));
          if (hit && *hit > t_lo && *hit < t_hi) blocked = true;
        }
        if (blocked) break;
      }
      if (!blocked && !scene.capsules.empty()) {
        for (const auto& cap : scene.capsules[frame]) {
          if (segment_hits_capsule(center, p, cap)) {
            blocked = true;
            break;
          }
        }
      }
      if (!blocked) rec.cameras[ti].push_back(static_cast<int>(ci));
    }
  }
  return rec;
}

std::vector<StudyRow> camera_count_study(const SyntheticScene& scene,
                                         const std::vector<std::size_t>& subset_sizes,
                                         std::size_t samples_per_size) {
  scene.validate();
  if (subset_sizes.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no subset sizes given");
  }
  const std::size_t n_cams = scene.rig.size();
  for (const auto s : subset_sizes) {
    if (s < 1 || s > n_cams) {
      throw Error(ErrorCode::InvalidArgument, "subset size out of range");
    }
  }
  if (samples_per_size < 1) {
    throw Error(ErrorCode::InvalidArgument, "need at least one sample per size");
  }

  const auto records = SceneTracer(scene).visibility_all();
  const std::size_t words = (n_cams + 63) / 64;
  const std::size_t n_targets = scene.targets.size();
  std::vector<std::uint64_t> vis(scene.frame_count * n_targets * words, 0);
  std::size_t full_detected = 0;
  for (std::size_t f = 0; f < scene.frame_count; ++f) {
    for (std::size_t ti = 0; ti < n_targets; ++ti) {
      auto* mask = &vis[(f * n_targets + ti) * words];
      const auto& cams = records[f].cameras[ti];
      for (const int c : cams) {
        mask[static_cast<std::size_t>(c) / 64] |= 1ULL << (c % 64);
      }
      if (cams.size() >= 2) ++full_detected;
    }
  }
  if (full_detected == 0) {
    throw Error(ErrorCode::InvalidArgument,
                "no corner is detected under the full rig");
  }

  std::vector<std::size_t> sorted_sizes(subset_sizes);
  std::sort(sorted_sizes.begin(), sorted_sizes.end());

  Rng rng(scene.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> perm(n_cams);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<double>> ratios(sorted_sizes.size());
  std::vector<std::uint64_t> subset(words);
  for (std::size_t k = 0; k < samples_per_size; ++k) {
    rng.shuffle(perm);
    std::fill(subset.begin(), subset.end(), 0);
    std::size_t taken = 0;
    for (std::size_t si = 0; si < sorted_sizes.size(); ++si) {
      while (taken < sorted_sizes[si]) {
        const int c = perm[taken++];
        subset[static_cast<std::size_t>(c) / 64] |= 1ULL << (c % 64);
      }
      std::size_t detected = 0;
      for (std::size_t m = 0; m < scene.frame_count * n_targets; ++m) {
        const std::uint64_t* mask = &vis[m * words];
        int overlap = 0;
        for (std::size_t w = 0; w < words; ++w) {
          overlap += std::popcount(mask[w] & subset[w]);
          if (overlap >= 2) break;
        }
        if (overlap >= 2) ++detected;
      }
      ratios[si].push_back(static_cast<double>(detected) /
                           static_cast<double>(full_detected));
    }
  }

  std::vector<StudyRow> rows;
  rows.reserve(sorted_sizes.size());
  for (std::size_t si = 0; si < sorted_sizes.size(); ++si) {
    StudyRow row;
    row.x = static_cast<double>(sorted_sizes[si]);
    row.mean = std::accumulate(ratios[si].begin(), ratios[si].end(), 0.0) /
               static_cast<double>(ratios[si].size());
    row.stddev = sample_stddev(ratios[si], row.mean);
    row.samples = ratios[si].size();
    rows.push_back(row);
  }
  return rows;
}

std::vector<StudyRow> virtual_marker_study(const SyntheticScene& scene,
                                           const std::vector<std::size_t>& marker_counts,
                                           std::size_t window, std::size_t stride,
                                           std::size_t max_windows) {
  scene.validate();
  if (marker_counts.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no marker counts given");
  }
  for (const auto c : marker_counts) {
    if (c < 1 || c > scene.targets.size()) {
      throw Error(ErrorCode::InvalidArgument, "marker count out of range");
    }
  }
  if (window < 1 || window > scene.frame_count) {
    throw Error(ErrorCode::InvalidArgument, "window out of range");
  }
  if (stride < 1) throw Error(ErrorCode::InvalidArgument, "stride must be positive");

  const auto records = SceneTracer(scene).visibility_all();
  const std::size_t n_targets = scene.targets.size();
  // tracked prefix counts per frame: cum[f][c] = tracked among first c markers
  std::vector<std::vector<std::size_t>> cum(scene.frame_count);
  for (std::size_t f = 0; f < scene.frame_count; ++f) {
    cum[f].resize(n_targets + 1, 0);
    for (std::size_t ti = 0; ti < n_targets; ++ti) {
      const bool tracked = records[f].cameras[ti].size() >= 3;
      cum[f][ti + 1] = cum[f][ti] + (tracked ? 1 : 0);
    }
  }

  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= scene.frame_count; s += stride) {
    starts.push_back(s);
    if (max_windows > 0 && starts.size() >= max_windows) break;
  }

  std::vector<std::size_t> sorted_counts(marker_counts);
  std::sort(sorted_counts.begin(), sorted_counts.end());
  std::vector<StudyRow> rows;
  rows.reserve(sorted_counts.size());
  for (const auto count : sorted_counts) {
    std::vector<double> outcomes;
    outcomes.reserve(starts.size());
    for (const auto s : starts) {
      bool ok = true;
      for (std::size_t f = s; f < s + window; ++f) {
        if (cum[f][count] < 4) {
          ok = false;
          break;
        }
      }
      outcomes.push_back(ok ? 1.0 : 0.0);
    }
    StudyRow row;
    row.x = static_cast<double>(count);
    row.mean = std::accumulate(outcomes.begin(), outcomes.end(), 0.0) /
               static_cast<double>(outcomes.size());
    row.stddev = sample_stddev(outcomes, row.mean);
    row.samples = outcomes.size();
    rows.push_back(row);
  }
  return rows;
}

void write_study_csv(const std::string& path, const std::string& x_name,
                     const std::vector<StudyRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
  out << x_name << ",mean,stddev\n";
  out.precision(10);
  for (const auto& row : rows) {
    out << row.x << ',' << row.mean << ',' << row.stddev << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace mfk
