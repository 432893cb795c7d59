#include "mfk/rigid.hpp"

#include <cmath>

namespace mfk {

namespace {

// collinearity test on the canonical set: the middle covariance eigenvalue
// must carry a nonzero share of the spread (coplanar sets stay valid)
bool collinear(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const double largest = eig.eigenvalues()[2];
  if (largest < 1e-24) return true;  // coincident
  return eig.eigenvalues()[1] / largest <= 1e-8;
}

}  // namespace

void MarkerCorrespondence::validate() const {
  if (canonical.size() != observed.size() ||
      (!weights.empty() && weights.size() != canonical.size())) {
    throw Error(ErrorCode::LengthMismatch, "correspondence lists differ in length");
  }
  if (canonical.size() < 3) {
    throw Error(ErrorCode::DegenerateConfiguration, "need >=3 point pairs");
  }
  for (double w : weights) {
    if (!(w >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "weights must be non-negative");
    }
  }
  if (collinear(canonical)) {
    throw Error(ErrorCode::DegenerateConfiguration, "canonical points collinear or coincident");
  }
}

RigidTransform kabsch(const MarkerCorrespondence& c) {
  c.validate();
  const std::size_t n = c.canonical.size();
  double wsum = 0.0;
  Vec3 cen_c = Vec3::Zero(), cen_o = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = c.weights.empty() ? 1.0 : c.weights[i];
    wsum += w;
    cen_c += w * c.canonical[i];
    cen_o += w * c.observed[i];
  }
  if (wsum <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "weights sum to zero");
  }
  cen_c /= wsum;
  cen_o /= wsum;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = c.weights.empty() ? 1.0 : c.weights[i];
    h += w * (c.canonical[i] - cen_c) * (c.observed[i] - cen_o).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return RigidTransform(Quat(r), cen_o - r * cen_c);
}

double kabsch_residual_rms(const MarkerCorrespondence& c, const RigidTransform& t) {
  double wsum = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < c.canonical.size(); ++i) {
    const double w = c.weights.empty() ? 1.0 : c.weights[i];
    wsum += w;
    ss += w * (t.apply(c.canonical[i]) - c.observed[i]).squaredNorm();
  }
  return wsum > 0.0 ? std::sqrt(ss / wsum) : 0.0;
}

namespace {

// corners of one cube picked out of the frame's triangulated set
MarkerCorrespondence cube_correspondence(const std::vector<TriangulatedCorner>& markers_now,
                                         const MarkerCube& cube,
                                         const RigidTransform& cube_to_target) {
  MarkerCorrespondence c;
  for (const auto& m : markers_now) {
    const int face = m.marker_id - cube.id * MarkerCube::kFaces;
    if (face < 0 || face >= MarkerCube::kFaces) continue;
    c.canonical.push_back(cube_to_target.apply(cube.corner_local(face, m.corner_index)));
    c.observed.push_back(m.position);
    c.weights.push_back(1.0 / (1.0 + m.reprojection_rms));
  }
  return c;
}

}  // namespace

RigidTransform object_pose(const std::vector<TriangulatedCorner>& markers_now,
                           const MarkerCube& cube, const RigidTransform& marker_to_object) {
  MarkerCorrespondence c =
      cube_correspondence(markers_now, cube, RigidTransform::identity());
  if (c.canonical.size() < 3) {
    throw Error(ErrorCode::TooFewCorners, "need >=3 triangulated corners of the cube");
  }
  const RigidTransform cube_pose = kabsch(c);
  return compose(cube_pose, inverse(marker_to_object));
}

RigidTransform object_pose(const std::vector<TriangulatedCorner>& markers_now,
                           const std::vector<MarkerCube>& cubes) {
  MarkerCorrespondence joint;
  for (const auto& cube : cubes) {
    MarkerCorrespondence c = cube_correspondence(markers_now, cube, cube.mount);
    joint.canonical.insert(joint.canonical.end(), c.canonical.begin(), c.canonical.end());
    joint.observed.insert(joint.observed.end(), c.observed.begin(), c.observed.end());
    joint.weights.insert(joint.weights.end(), c.weights.begin(), c.weights.end());
  }
  if (joint.canonical.size() < 3) {
    throw Error(ErrorCode::TooFewCorners, "need >=3 triangulated corners across cubes");
  }
  return kabsch(joint);
}

MountSolution solve_mount(const std::vector<Vec3>& scan_points,
                          const std::vector<Vec3>& observed_points,
                          const RigidTransform& marker_pose) {
  MarkerCorrespondence c;
  c.canonical = scan_points;
  c.observed = observed_points;
  const RigidTransform object_pose_now = kabsch(c);
  MountSolution out;
  out.marker_to_object = compose(inverse(object_pose_now), marker_pose);
  out.residual_rms = kabsch_residual_rms(c, object_pose_now);
  return out;
}

}  // namespace mfk
