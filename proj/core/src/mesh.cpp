#include "mfk/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mfk/errors.hpp"

namespace mfk {

void TriangleMesh::validate() const {
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite vertex");
  }
  const auto n = vertices.size();
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    for (int k = 0; k < 3; ++k) {
      if (tri[static_cast<std::size_t>(k)] >= n) {
        throw Error(ErrorCode::InvalidArgument,
                    "triangle " + std::to_string(t) + " index out of range");
      }
    }
    if (area(t) <= 0.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "triangle " + std::to_string(t) + " is degenerate");
    }
  }
}

double TriangleMesh::area(std::size_t tri) const {
  const Vec3 a = triangle_vertex(tri, 0);
  const Vec3 b = triangle_vertex(tri, 1);
  const Vec3 c = triangle_vertex(tri, 2);
  return 0.5 * (b - a).cross(c - a).norm();
}

Vec3 TriangleMesh::normal(std::size_t tri) const {
  const Vec3 a = triangle_vertex(tri, 0);
  const Vec3 b = triangle_vertex(tri, 1);
  const Vec3 c = triangle_vertex(tri, 2);
  return (b - a).cross(c - a).normalized();
}

void TriangleMesh::bounds(Vec3& lo, Vec3& hi) const {
  if (vertices.empty()) {
    lo = hi = Vec3::Zero();
    return;
  }
  lo = hi = vertices.front();
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  TriangleMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) {
        throw Error(ErrorCode::IoError,
                    path + ":" + std::to_string(lineno) + ": bad vertex");
      }
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string item;
      while (ss >> item) {
        // token may be "3", "3/1", "3//2", "3/1/2"; only the vertex index matters
        const auto slash = item.find('/');
        const std::string head = slash == std::string::npos ? item : item.substr(0, slash);
        long v = 0;
        try {
          v = std::stol(head);
        } catch (const std::exception&) {
          throw Error(ErrorCode::IoError,
                      path + ":" + std::to_string(lineno) + ": bad face index");
        }
        if (v < 0) v = static_cast<long>(mesh.vertices.size()) + v + 1;
        if (v < 1) {
          throw Error(ErrorCode::IoError,
                      path + ":" + std::to_string(lineno) + ": bad face index");
        }
        idx.push_back(static_cast<std::uint32_t>(v - 1));
      }
      if (idx.size() < 3) {
        throw Error(ErrorCode::IoError,
                    path + ":" + std::to_string(lineno) + ": face needs 3+ vertices");
      }
      for (std::size_t k = 2; k < idx.size(); ++k) {
        mesh.triangles.push_back({idx[0], idx[k - 1], idx[k]});
      }
    }
    // other records (vn, vt, o, g, s, mtllib, usemtl, #) are skipped
  }
  mesh.validate();
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
  out.precision(9);
  for (const auto& v : mesh.vertices) {
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return a + v * ab;
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return a + w * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return a + v * ab + w * ac;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).norm();
}

double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) {
    throw Error(ErrorCode::InvalidArgument, "mesh has no triangles");
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    best = std::min(best, point_triangle_distance(p, mesh.triangle_vertex(t, 0),
                                                  mesh.triangle_vertex(t, 1),
                                                  mesh.triangle_vertex(t, 2)));
  }
  return best;
}

std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh,
                                          std::size_t count, Rng& rng) {
  if (mesh.triangles.empty()) {
    throw Error(ErrorCode::InvalidArgument, "mesh has no triangles");
  }
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.area(t);
    cumulative[t] = total;
  }
  if (total <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "mesh has zero surface area");
  }
  std::vector<SurfaceSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = rng.uniform(0.0, total);
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), r);
    const std::size_t t = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                 static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
    double u = rng.uniform(0.0, 1.0);
    double v = rng.uniform(0.0, 1.0);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3 a = mesh.triangle_vertex(t, 0);
    const Vec3 b = mesh.triangle_vertex(t, 1);
    const Vec3 c = mesh.triangle_vertex(t, 2);
    out.push_back({a + u * (b - a) + v * (c - a), mesh.normal(t)});
  }
  return out;
}

TriangleMesh make_box(const Vec3& extents) {
  if (!(extents.minCoeff() > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "box extents must be positive");
  }
  const Vec3 h = 0.5 * extents;
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                            (i & 4) ? h.z() : -h.z());
  }
  // quads as (outward CCW) corner index lists
  const int quads[6][4] = {
      {1, 3, 7, 5},  // +x
      {0, 4, 6, 2},  // -x
      {2, 6, 7, 3},  // +y
      {0, 1, 5, 4},  // -y
      {4, 5, 7, 6},  // +z
      {0, 2, 3, 1},  // -z
  };
  for (const auto& q : quads) {
    m.triangles.push_back({static_cast<std::uint32_t>(q[0]),
                           static_cast<std::uint32_t>(q[1]),
                           static_cast<std::uint32_t>(q[2])});
    m.triangles.push_back({static_cast<std::uint32_t>(q[0]),
                           static_cast<std::uint32_t>(q[2]),
                           static_cast<std::uint32_t>(q[3])});
  }
  return m;
}

TriangleMesh make_cylinder(double radius, double height, int segments) {
  if (!(radius > 0.0) || !(height > 0.0) || segments < 3) {
    throw Error(ErrorCode::InvalidArgument, "bad cylinder parameters");
  }
  TriangleMesh m;
  const double h = 0.5 * height;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * M_PI * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), -h);
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), h);
  }
  const auto bottom_center = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.emplace_back(0, 0, -h);
  const auto top_center = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.emplace_back(0, 0, h);
  for (int i = 0; i < segments; ++i) {
    const auto bi = static_cast<std::uint32_t>(2 * i);
    const auto ti = bi + 1;
    const auto bn = static_cast<std::uint32_t>(2 * ((i + 1) % segments));
    const auto tn = bn + 1;
    m.triangles.push_back({bi, bn, tn});
    m.triangles.push_back({bi, tn, ti});
    m.triangles.push_back({bottom_center, bn, bi});
    m.triangles.push_back({top_center, ti, tn});
  }
  return m;
}

MeshDistanceGrid::MeshDistanceGrid(const TriangleMesh& mesh, double cell_size)
    : mesh_(&mesh), cell_(cell_size) {
  if (!(cell_size > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "cell size must be positive");
  }
  mesh.validate();
  if (mesh.triangles.empty()) {
    throw Error(ErrorCode::InvalidArgument, "mesh has no triangles");
  }
  mesh.bounds(lo_, hi_);
  origin_ = lo_;
  for (int k = 0; k < 3; ++k) {
    dims_[k] = std::max(1, static_cast<int>(std::ceil((hi_[k] - lo_[k]) / cell_)));
  }
  cells_.resize(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]);
  for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
    Vec3 tlo = mesh.triangle_vertex(t, 0), thi = tlo;
    for (int c = 1; c < 3; ++c) {
      tlo = tlo.cwiseMin(mesh.triangle_vertex(t, c));
      thi = thi.cwiseMax(mesh.triangle_vertex(t, c));
    }
    int a[3], b[3];
    for (int k = 0; k < 3; ++k) {
      a[k] = std::clamp(static_cast<int>(std::floor((tlo[k] - origin_[k]) / cell_)),
                        0, dims_[k] - 1);
      b[k] = std::clamp(static_cast<int>(std::floor((thi[k] - origin_[k]) / cell_)),
                        0, dims_[k] - 1);
    }
    for (int iz = a[2]; iz <= b[2]; ++iz)
      for (int iy = a[1]; iy <= b[1]; ++iy)
        for (int ix = a[0]; ix <= b[0]; ++ix)
          cells_[cell_index(ix, iy, iz)].push_back(t);
  }
}

std::size_t MeshDistanceGrid::cell_index(int ix, int iy, int iz) const {
  return static_cast<std::size_t>(ix) +
         static_cast<std::size_t>(dims_[0]) *
             (static_cast<std::size_t>(iy) +
              static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(iz));
}

double MeshDistanceGrid::distance(const Vec3& p, const RigidTransform& pose) const {
  return distance_local(inverse(pose).apply(p));
}

bool MeshDistanceGrid::within(const Vec3& p, const RigidTransform& pose,
                              double radius) const {
  return within_local(inverse(pose).apply(p), radius);
}

double MeshDistanceGrid::distance_local(const Vec3& q) const {
  // expanding ring search: once a hit is found at ring r, rings beyond
  // r+1 cannot contain anything closer than (r-1)*cell, so one extra ring
  // suffices for exactness.
  int base[3];
  for (int k = 0; k < 3; ++k) {
    base[k] = static_cast<int>(std::floor((q[k] - origin_[k]) / cell_));
  }
  const int max_dim = *std::max_element(dims_, dims_ + 3);
  int start = 0;
  for (int k = 0; k < 3; ++k) {
    if (base[k] < 0) start = std::max(start, -base[k] - 1);
    if (base[k] >= dims_[k]) start = std::max(start, base[k] - dims_[k]);
  }
  double best = std::numeric_limits<double>::infinity();
  int found_ring = -1;
  for (int r = start; r <= max_dim + start + 1; ++r) {
    if (found_ring >= 0 && r > found_ring + 1) break;
    bool ring_visited = false;
    for (int iz = base[2] - r; iz <= base[2] + r; ++iz) {
      if (iz < 0 || iz >= dims_[2]) continue;
      for (int iy = base[1] - r; iy <= base[1] + r; ++iy) {
        if (iy < 0 || iy >= dims_[1]) continue;
        for (int ix = base[0] - r; ix <= base[0] + r; ++ix) {
          if (ix < 0 || ix >= dims_[0]) continue;
          const int d = std::max({std::abs(ix - base[0]), std::abs(iy - base[1]),
                                  std::abs(iz - base[2])});
          if (d != r) continue;  // shell only
          ring_visited = true;
          for (const auto t : cells_[cell_index(ix, iy, iz)]) {
            const double dist = point_triangle_distance(
                q, mesh_->triangle_vertex(t, 0), mesh_->triangle_vertex(t, 1),
                mesh_->triangle_vertex(t, 2));
            if (dist < best) best = dist;
          }
        }
      }
    }
    if (std::isfinite(best) && found_ring < 0) found_ring = r;
    if (!ring_visited && found_ring >= 0) break;
  }
  return best;
}

bool MeshDistanceGrid::within_local(const Vec3& q, double radius) const {
  // cheap reject against the padded bounding box first
  for (int k = 0; k < 3; ++k) {
    if (q[k] < lo_[k] - radius || q[k] > hi_[k] + radius) return false;
  }
  return distance_local(q) <= radius;
}

}  // namespace mfk
