#pragma once

#include <map>
#include <set>
#include <vector>

#include "mfk/types.hpp"

namespace mfk {

struct CornerDetection {
  int frame = 0;
  int camera_id = 0;
  int marker_id = 0;
  int corner_index = 0;  // 0..3
  Vec2 pixel{0.0, 0.0};

  void validate(const CameraModel& cam) const;
};

struct TriangulatedCorner {
  int frame = 0;
  int marker_id = 0;
  int corner_index = 0;
  Vec3 position{0.0, 0.0, 0.0};
  double reprojection_rms = 0.0;  // pixels, over contributing views
  int n_views = 0;                // contributing views after outlier rejection
};

// DLT then Gauss-Newton on pixel reprojection (<=10 steps, stop at step
// < 1e-10). Views worse than 3x the median reprojection error are dropped
// and the point re-solved once. All detections must share one (frame,
// marker_id, corner_index) key and come from distinct cameras.
// Throws InsufficientViews (<2 cameras) and DegenerateGeometry (all rays
// parallel within 1e-6 rad).
TriangulatedCorner triangulate(const std::vector<CornerDetection>& detections_of_one_corner,
                               const std::vector<CameraModel>& rig);

struct ReprojectionReport {
  double mean_rms_px = 0.0;
  double mean_views = 0.0;
  // restricted to frames carrying a contact/manipulation flag
  double manipulation_mean_rms_px = 0.0;
  double manipulation_mean_views = 0.0;
  std::size_t corner_count = 0;
  std::size_t manipulation_corner_count = 0;
  std::map<int, double> per_frame_rms;    // frame -> mean rms over corners
  std::map<int, double> per_frame_views;  // frame -> mean contributing views
};

// aggregates already-triangulated corners; throws EmptySession on no input
ReprojectionReport reprojection_report(const std::vector<TriangulatedCorner>& corners,
                                       const std::set<int>& manipulation_frames);

}  // namespace mfk
