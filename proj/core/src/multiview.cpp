#include "mfk/multiview.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace mfk {

void CornerDetection::validate(const CameraModel& cam) const {
  if (corner_index < 0 || corner_index > 3) {
    throw Error(ErrorCode::InvalidArgument, "corner index out of range");
  }
  if (pixel.x() < 0.0 || pixel.x() > cam.width || pixel.y() < 0.0 || pixel.y() > cam.height) {
    throw Error(ErrorCode::InvalidArgument, "detection pixel outside camera resolution");
  }
}

namespace {

struct View {
  const CameraModel* cam;
  Vec2 pixel;
};

Vec3 ray_direction(const View& v) {
  const Vec3 h(v.pixel.x(), v.pixel.y(), 1.0);
  const Vec3 cam_dir = v.cam->intrinsics.inverse() * h;
  return (v.cam->extrinsics.rotation.conjugate() * cam_dir).normalized();
}

Vec3 solve_dlt(const std::vector<View>& views) {
  Eigen::MatrixXd a(2 * views.size(), 4);
  for (std::size_t i = 0; i < views.size(); ++i) {
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = views[i].cam->extrinsics.rotation_matrix();
    p.col(3) = views[i].cam->extrinsics.translation;
    p = views[i].cam->intrinsics * p;
    a.row(2 * i) = views[i].pixel.x() * p.row(2) - p.row(0);
    a.row(2 * i + 1) = views[i].pixel.y() * p.row(2) - p.row(1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x[3]) < 1e-14) {
    throw Error(ErrorCode::DegenerateGeometry, "triangulated point at infinity");
  }
  return x.head<3>() / x[3];
}

// residuals (2 per view); views behind a camera get a large finite penalty so
// Gauss-Newton can pull the point back in front
Eigen::VectorXd residuals(const std::vector<View>& views, const Vec3& p) {
  Eigen::VectorXd r(2 * views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Vec3 cam = views[i].cam->extrinsics.apply(p);
    if (cam.z() <= 1e-9) {
      r.segment<2>(2 * i).setConstant(1e6);
      continue;
    }
    const Vec3 h = views[i].cam->intrinsics * (cam / cam.z());
    r.segment<2>(2 * i) = h.head<2>() - views[i].pixel;
  }
  return r;
}

Vec3 gauss_newton(const std::vector<View>& views, Vec3 p) {
  for (int iter = 0; iter < 10; ++iter) {
    Eigen::MatrixXd jac(2 * views.size(), 3);
    Eigen::VectorXd r(2 * views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
      const Mat3 rot = views[i].cam->extrinsics.rotation_matrix();
      const Vec3 cam = views[i].cam->extrinsics.apply(p);
      if (cam.z() <= 1e-9) {
        jac.block<2, 3>(2 * i, 0).setZero();
        r.segment<2>(2 * i).setZero();
        continue;
      }
      const Mat3& k = views[i].cam->intrinsics;
      const double fx = k(0, 0), fy = k(1, 1), s = k(0, 1);
      const double iz = 1.0 / cam.z();
      r(2 * i) = fx * cam.x() * iz + s * cam.y() * iz + k(0, 2) - views[i].pixel.x();
      r(2 * i + 1) = fy * cam.y() * iz + k(1, 2) - views[i].pixel.y();
      Eigen::Matrix<double, 2, 3> d_pix_d_cam;
      d_pix_d_cam << fx * iz, s * iz, -(fx * cam.x() + s * cam.y()) * iz * iz,
          0.0, fy * iz, -fy * cam.y() * iz * iz;
      jac.block<2, 3>(2 * i, 0) = d_pix_d_cam * rot;
    }
    const Vec3 step = (jac.transpose() * jac)
                          .ldlt()
                          .solve(-(jac.transpose() * r));
    if (!step.allFinite()) break;
    p += step;
    if (step.norm() < 1e-10) break;
  }
  return p;
}

std::vector<double> per_view_errors(const std::vector<View>& views, const Vec3& p) {
  std::vector<double> e(views.size());
  const Eigen::VectorXd r = residuals(views, p);
  for (std::size_t i = 0; i < views.size(); ++i) e[i] = r.segment<2>(2 * i).norm();
  return e;
}

}  // namespace

TriangulatedCorner triangulate(const std::vector<CornerDetection>& detections,
                               const std::vector<CameraModel>& rig) {
  std::unordered_map<int, const CameraModel*> by_id;
  for (const auto& c : rig) by_id[c.id] = &c;

  std::vector<View> views;
  views.reserve(detections.size());
  std::set<int> seen_cameras;
  for (const auto& d : detections) {
    auto it = by_id.find(d.camera_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::InvalidArgument, "detection references unknown camera");
    }
    if (!seen_cameras.insert(d.camera_id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate camera for one corner");
    }
    views.push_back({it->second, d.pixel});
  }
  if (views.size() < 2) {
    throw Error(ErrorCode::InsufficientViews, "triangulation needs >=2 distinct cameras");
  }

  double max_angle = 0.0;
  std::vector<Vec3> dirs(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) dirs[i] = ray_direction(views[i]);
  for (std::size_t i = 0; i < views.size() && max_angle < 1e-6; ++i) {
    for (std::size_t j = i + 1; j < views.size(); ++j) {
      const double c = std::clamp(dirs[i].dot(dirs[j]), -1.0, 1.0);
      max_angle = std::max(max_angle, std::acos(std::abs(c)));
      if (max_angle >= 1e-6) break;
    }
  }
  if (max_angle < 1e-6) {
    throw Error(ErrorCode::DegenerateGeometry, "rays parallel within 1e-6 rad");
  }

  Vec3 p = gauss_newton(views, solve_dlt(views));

  // one outlier-rejection pass; absolute floor keeps noiseless points intact
  std::vector<double> errs = per_view_errors(views, p);
  std::vector<double> sorted = errs;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double cutoff = std::max(3.0 * median, 1e-8);
  std::vector<View> kept;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (errs[i] <= cutoff) kept.push_back(views[i]);
  }
  if (kept.size() >= 2 && kept.size() < views.size()) {
    p = gauss_newton(kept, solve_dlt(kept));
  } else {
    kept = views;
  }

  const std::vector<double> final_errs = per_view_errors(kept, p);
  double ss = 0.0;
  for (double e : final_errs) ss += e * e;

  TriangulatedCorner out;
  out.frame = detections.front().frame;
  out.marker_id = detections.front().marker_id;
  out.corner_index = detections.front().corner_index;
  out.position = p;
  out.n_views = static_cast<int>(kept.size());
  out.reprojection_rms = std::sqrt(ss / (2.0 * kept.size()));
  return out;
}

ReprojectionReport reprojection_report(const std::vector<TriangulatedCorner>& corners,
                                       const std::set<int>& manipulation_frames) {
  if (corners.empty()) {
    throw Error(ErrorCode::EmptySession, "no triangulated corners to report on");
  }
  ReprojectionReport rep;
  std::map<int, std::pair<double, double>> frame_sums;  // rms sum, view sum
  std::map<int, std::size_t> frame_counts;
  double rms_sum = 0.0, view_sum = 0.0, man_rms = 0.0, man_views = 0.0;
  for (const auto& c : corners) {
    rms_sum += c.reprojection_rms;
    view_sum += c.n_views;
    frame_sums[c.frame].first += c.reprojection_rms;
    frame_sums[c.frame].second += c.n_views;
    frame_counts[c.frame] += 1;
    if (manipulation_frames.count(c.frame)) {
      man_rms += c.reprojection_rms;
      man_views += c.n_views;
      rep.manipulation_corner_count += 1;
    }
  }
  rep.corner_count = corners.size();
  rep.mean_rms_px = rms_sum / corners.size();
  rep.mean_views = view_sum / corners.size();
  if (rep.manipulation_corner_count > 0) {
    rep.manipulation_mean_rms_px = man_rms / rep.manipulation_corner_count;
    rep.manipulation_mean_views = man_views / rep.manipulation_corner_count;
  }
  for (const auto& [frame, sums] : frame_sums) {
    const double n = static_cast<double>(frame_counts[frame]);
    rep.per_frame_rms[frame] = sums.first / n;
    rep.per_frame_views[frame] = sums.second / n;
  }
  return rep;
}

}  // namespace mfk
