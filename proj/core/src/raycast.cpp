#include "mfk/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfk/errors.hpp"

namespace mfk {

std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir,
                                   const Vec3& a, const Vec3& b, const Vec3& c,
                                   double eps) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < eps) return std::nullopt;  // parallel
  const double inv = 1.0 / det;
  const Vec3 tvec = origin - a;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qvec) * inv;
  if (t < 0.0) return std::nullopt;
  return t;
}

namespace {

bool segment_hits_box(const Vec3& p, const Vec3& d, double tmax, const Vec3& lo,
                      const Vec3& hi) {
  double t0 = 0.0, t1 = tmax;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-300) {
      if (p[k] < lo[k] || p[k] > hi[k]) return false;
      continue;
    }
    const double inv = 1.0 / d[k];
    double ta = (lo[k] - p[k]) * inv;
    double tb = (hi[k] - p[k]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

MeshBvh::MeshBvh(const TriangleMesh& mesh, int leaf_size) : mesh_(&mesh) {
  mesh.validate();
  if (mesh.triangles.empty()) {
    throw Error(ErrorCode::InvalidArgument, "mesh has no triangles");
  }
  if (leaf_size < 1) {
    throw Error(ErrorCode::InvalidArgument, "leaf size must be positive");
  }
  const auto n = static_cast<std::uint32_t>(mesh.triangles.size());
  order_.resize(n);
  centroids_.resize(n);
  for (std::uint32_t t = 0; t < n; ++t) {
    order_[t] = t;
    centroids_[t] = (mesh.triangle_vertex(t, 0) + mesh.triangle_vertex(t, 1) +
                     mesh.triangle_vertex(t, 2)) / 3.0;
  }
  nodes_.reserve(2 * n);
  build(0, n, leaf_size);
  centroids_.clear();
  centroids_.shrink_to_fit();
}

std::int32_t MeshBvh::build(std::uint32_t begin, std::uint32_t end, int leaf_size) {
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();
  Vec3 lo = mesh_->triangle_vertex(order_[begin], 0), hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    for (int c = 0; c < 3; ++c) {
      const Vec3 v = mesh_->triangle_vertex(order_[i], c);
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  nodes_[static_cast<std::size_t>(index)].lo = lo;
  nodes_[static_cast<std::size_t>(index)].hi = hi;
  if (end - begin <= static_cast<std::uint32_t>(leaf_size)) {
    nodes_[static_cast<std::size_t>(index)].begin = begin;
    nodes_[static_cast<std::size_t>(index)].count = end - begin;
    return index;
  }
  const Vec3 extent = hi - lo;
  int axis = 0;
  if (extent.y() > extent.x()) axis = 1;
  if (extent.z() > extent[axis]) axis = 2;
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](std::uint32_t a, std::uint32_t b) {
                     return centroids_[a][axis] < centroids_[b][axis];
                   });
  const auto left = build(begin, mid, leaf_size);
  const auto right = build(mid, end, leaf_size);
  nodes_[static_cast<std::size_t>(index)].left = left;
  nodes_[static_cast<std::size_t>(index)].right = right;
  return index;
}

bool MeshBvh::segment_occluded(const Vec3& p, const Vec3& q,
                               const RigidTransform& pose,
                               double endpoint_margin) const {
  const RigidTransform inv = inverse(pose);
  return segment_occluded_local(inv.apply(p), inv.apply(q), endpoint_margin);
}

bool MeshBvh::segment_occluded_local(const Vec3& p, const Vec3& q,
                                     double margin) const {
  const Vec3 d = q - p;
  const double len = d.norm();
  if (len <= 2.0 * margin) return false;
  const double t_lo = margin / len, t_hi = 1.0 - margin / len;
  std::int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    if (!segment_hits_box(p, d, 1.0, node.lo, node.hi)) continue;
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.begin + node.count; ++i) {
        const auto t = order_[i];
        const auto hit = ray_triangle(p, d, mesh_->triangle_vertex(t, 0),
                                      mesh_->triangle_vertex(t, 1),
                                      mesh_->triangle_vertex(t, 2));
        if (hit && *hit > t_lo && *hit < t_hi) return true;
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return false;
}

std::optional<RayHit> MeshBvh::first_hit(const Vec3& origin, const Vec3& dir,
                                         const RigidTransform& pose) const {
  const RigidTransform inv = inverse(pose);
  return first_hit_local(inv.apply(origin), inv.rotation * dir);
}

std::optional<RayHit> MeshBvh::first_hit_local(const Vec3& origin,
                                               const Vec3& dir) const {
  std::optional<RayHit> best;
  std::int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  const double huge = std::numeric_limits<double>::infinity();
  while (top > 0) {
    const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
    if (!segment_hits_box(origin, dir, best ? best->t : huge, node.lo, node.hi))
      continue;
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.begin + node.count; ++i) {
        const auto t = order_[i];
        const auto hit = ray_triangle(origin, dir, mesh_->triangle_vertex(t, 0),
                                      mesh_->triangle_vertex(t, 1),
                                      mesh_->triangle_vertex(t, 2));
        if (hit && (!best || *hit < best->t)) best = RayHit{*hit, t};
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

double segment_segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0,
                                const Vec3& q1) {
  // Ericson 5.1.9, clamped closest points of two segments.
  const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  const double tiny = 1e-300;
  double s = 0.0, t = 0.0;
  if (a <= tiny && e <= tiny) {
    return r.norm();
  }
  if (a <= tiny) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= tiny) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      if (denom > tiny) s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + s * d1) - (q0 + t * d2)).norm();
}

bool segment_hits_capsule(const Vec3& p, const Vec3& q, const Capsule& cap) {
  return segment_segment_distance(p, q, cap.a, cap.b) < cap.radius;
}

}  // namespace mfk
