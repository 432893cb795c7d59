#include "mfk/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "mfk/rigid.hpp"

namespace mfk {

void CalibrationStructure::validate_rigidity(const CalibrationStructure& reference) const {
  for (std::size_t i = 0; i < corners.size(); ++i) {
    for (std::size_t j = i + 1; j < corners.size(); ++j) {
      const double d = (corners[i] - corners[j]).norm();
      const double ref = (reference.corners[i] - reference.corners[j]).norm();
      if (std::abs(d - ref) > 1e-3) {
        throw Error(ErrorCode::InvalidArgument,
                    "structure corners moved relative to the reference");
      }
    }
  }
}

CalibrationStructure CalibrationStructure::standard(const RigidTransform& pose) {
  // three 6 cm cubes: one at the origin, one stacked on it, one beside it.
  // Corner ids are assigned so every pair touched together in the protocol
  // stays within comfortable finger spread.
  const double e = 0.06;
  CalibrationStructure s;
  s.corners = {Vec3(0, 0, 2 * e), Vec3(e, 0, e), Vec3(e, 0, 2 * e),
               Vec3(2 * e, 0, e), Vec3(0, e, e), Vec3(0, 0, e)};
  const double r3 = 1.0 / std::sqrt(3.0), r2 = 1.0 / std::sqrt(2.0);
  s.normals = {r3 * Vec3(-1, -1, 1), r3 * Vec3(1, -1, 1),  r3 * Vec3(1, -1, 1),
               r3 * Vec3(1, -1, 1),  r2 * Vec3(-1, 1, 0),  r2 * Vec3(-1, -1, 0)};
  for (auto& c : s.corners) c = pose.apply(c);
  for (auto& n : s.normals) n = pose.rotation * n;
  return s;
}

RigidTransform mocap_to_camera(const std::vector<Vec3>& mocap_corners,
                               const std::vector<Vec3>& camera_corners) {
  if (mocap_corners.size() != camera_corners.size()) {
    throw Error(ErrorCode::LengthMismatch, "corner lists differ in length");
  }
  if (mocap_corners.size() < 3) {
    throw Error(ErrorCode::NoVisibleMarkers, "need >=3 visible corners to align");
  }
  MarkerCorrespondence c;
  c.canonical = mocap_corners;
  c.observed = camera_corners;
  return kabsch(c);
}

namespace {

struct BodyParams {
  Eigen::MatrixX3d offsets;                     // joints x 3
  std::vector<std::array<Vec3, 4>> placements;  // per marker

  static BodyParams from(const BodySkeleton& s) {
    BodyParams p;
    p.offsets.resize(s.joints.size(), 3);
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
      p.offsets.row(j) = s.joints[j].offset.transpose();
    }
    p.placements.resize(s.markers.size());
    for (std::size_t m = 0; m < s.markers.size(); ++m) {
      p.placements[m] = s.markers[m].corners;
    }
    return p;
  }

  void store(BodySkeleton& s) const {
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
      s.joints[j].offset = offsets.row(j).transpose();
    }
    for (std::size_t m = 0; m < s.markers.size(); ++m) {
      s.markers[m].corners = placements[m];
    }
  }

  BodyParams zeros_like() const {
    BodyParams z;
    z.offsets = Eigen::MatrixX3d::Zero(offsets.rows(), 3);
    z.placements.assign(placements.size(),
                        {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()});
    return z;
  }

  void axpy(double a, const BodyParams& d) {
    offsets += a * d.offsets;
    for (std::size_t m = 0; m < placements.size(); ++m) {
      for (int c = 0; c < 4; ++c) placements[m][c] += a * d.placements[m][c];
    }
  }

  void scale(double a) {
    offsets *= a;
    for (auto& m : placements) {
      for (auto& c : m) c *= a;
    }
  }

  // this = a*this + (1-a)*g.^2, the second-moment accumulator
  void ema_square(double a, const BodyParams& g) {
    offsets = a * offsets + (1.0 - a) * g.offsets.cwiseProduct(g.offsets);
    for (std::size_t m = 0; m < placements.size(); ++m) {
      for (int c = 0; c < 4; ++c) {
        placements[m][c] = a * placements[m][c] +
                           (1.0 - a) * g.placements[m][c].cwiseProduct(
                                           g.placements[m][c]);
      }
    }
  }

  // this -= s * (m/bc1) / (sqrt(v/bc2) + eps), elementwise
  void adam_step(double s, const BodyParams& m, const BodyParams& v,
                 double bc1, double bc2, double eps) {
    offsets.array() -=
        s * (m.offsets.array() / bc1) / ((v.offsets.array() / bc2).sqrt() + eps);
    for (std::size_t k = 0; k < placements.size(); ++k) {
      for (int c = 0; c < 4; ++c) {
        const Eigen::Array3d mh = m.placements[k][c].array() / bc1;
        const Eigen::Array3d vh = v.placements[k][c].array() / bc2;
        placements[k][c] -= (s * mh / (vh.sqrt() + eps)).matrix();
      }
    }
  }

  double squared_norm() const {
    double s = offsets.squaredNorm();
    for (const auto& m : placements) {
      for (const auto& c : m) s += c.squaredNorm();
    }
    return s;
  }
};

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

struct MirrorPair {
  int left, right;
};

std::vector<MirrorPair> mirror_pairs(const BodySkeleton& s) {
  std::vector<MirrorPair> out;
  for (std::size_t j = 0; j < s.joints.size(); ++j) {
    const auto& name = s.joints[j].name;
    if (name.rfind("left_", 0) == 0) {
      const int r = s.joint_index("right_" + name.substr(5));
      if (r >= 0) out.push_back({static_cast<int>(j), r});
    }
  }
  return out;
}

std::vector<int> spine_chain(const BodySkeleton& s) {
  std::vector<int> out;
  for (const char* n : {"spine1", "spine2", "spine3", "chest", "neck", "head"}) {
    const int j = s.joint_index(n);
    if (j >= 0) out.push_back(j);
  }
  return out;
}

class BodyProblem {
 public:
  BodyProblem(const std::vector<BodyCalibrationFrame>& frames, const BodySkeleton& init,
              const BodyCalibrationOptions& opt)
      : frames_(frames), skel_(init), opt_(opt) {
    skel_.validate();
    if (frames.empty()) {
      throw Error(ErrorCode::InvalidArgument, "calibration needs frames");
    }
    for (const auto& f : frames) {
      if (f.observed.size() != skel_.markers.size()) {
        throw Error(ErrorCode::LengthMismatch, "observed list must match marker list");
      }
    }
    chains_.resize(skel_.joints.size());
    for (std::size_t j = 0; j < skel_.joints.size(); ++j) {
      int k = static_cast<int>(j);
      while (k >= 0) {
        chains_[j].push_back(k);
        k = skel_.joints[k].parent;
      }
    }
    for (const auto& name : BodySkeleton::ground_joint_names()) {
      ground_joints_.push_back(skel_.joint_index(name));
    }
    pairs_ = mirror_pairs(skel_);
    spine_ = spine_chain(skel_);
    spine_ref_.resize(spine_.size());
    for (std::size_t i = 0; i < spine_.size(); ++i) {
      spine_ref_[i] = init.joints[spine_[i]].offset.norm();
    }
  }

  std::vector<RigidTransform> solve_alignments(const BodyParams& p) const {
    BodySkeleton s = skel_;
    p.store(s);
    std::vector<RigidTransform> out(frames_.size());
    for (std::size_t t = 0; t < frames_.size(); ++t) {
      const BodyFk fk = fk_body(s, frames_[t].angles);
      std::vector<Vec3> mocap, cam;
      for (std::size_t m = 0; m < s.markers.size(); ++m) {
        if (!frames_[t].observed[m]) continue;
        for (int c = 0; c < 4; ++c) {
          mocap.push_back(fk.marker_corners[m][c]);
          cam.push_back((*frames_[t].observed[m])[c]);
        }
      }
      out[t] = mocap_to_camera(mocap, cam);
    }
    return out;
  }

  // loss over frames [t0, t1); fills grad when non-null (alignments held fixed).
  // The data terms average over the range, so a batch gradient estimates the
  // full one; regularizers enter at full weight either way.
  double evaluate(const BodyParams& p, const std::vector<RigidTransform>& align,
                  BodyParams* grad, std::size_t t0 = 0,
                  std::size_t t1 = static_cast<std::size_t>(-1)) const {
    t1 = std::min(t1, frames_.size());
    const double nf = static_cast<double>(t1 - t0);
    BodySkeleton s = skel_;
    p.store(s);
    if (grad) *grad = p.zeros_like();

    double total = 0.0;
    for (std::size_t t = t0; t < t1; ++t) {
      const BodyFk fk = fk_body(s, frames_[t].angles);
      const Mat3 rt = align[t].rotation_matrix();

      std::size_t n_corners = 0;
      for (std::size_t m = 0; m < s.markers.size(); ++m) {
        if (frames_[t].observed[m]) n_corners += 4;
      }
      if (n_corners == 0) continue;

      double body_term = 0.0;
      for (std::size_t m = 0; m < s.markers.size(); ++m) {
        if (!frames_[t].observed[m]) continue;
        const int j = s.markers[m].joint;
        const Mat3 rj = fk.joint_poses[j].rotation_matrix();
        for (int c = 0; c < 4; ++c) {
          const Vec3 err =
              align[t].apply(fk.marker_corners[m][c]) - (*frames_[t].observed[m])[c];
          body_term += err.squaredNorm();
          if (grad) {
            const double w = 2.0 * opt_.lambda_body / (nf * n_corners);
            grad->placements[m][c] += w * (rt * rj).transpose() * err;
            for (int k : chains_[j]) {
              const Mat3 rp = k == 0 ? Mat3::Identity()
                                     : fk.joint_poses[s.joints[k].parent].rotation_matrix();
              grad->offsets.row(k) += (w * (rt * rp).transpose() * err).transpose();
            }
          }
        }
      }
      total += opt_.lambda_body * body_term / static_cast<double>(n_corners) / nf;

      double foot_term = 0.0;
      for (int g : ground_joints_) {
        const double z = align[t].apply(fk.joint_poses[g].translation).z();
        double d = 0.0;
        if (z < 0.0) {
          d = z;
        } else if (z > opt_.ground_band) {
          d = z - opt_.ground_band;
        }
        foot_term += d * d;
        if (grad && d != 0.0) {
          const double w =
              2.0 * opt_.lambda_foot * d / (nf * ground_joints_.size());
          for (int k : chains_[g]) {
            const Mat3 rp = k == 0 ? Mat3::Identity()
                                   : fk.joint_poses[s.joints[k].parent].rotation_matrix();
            grad->offsets.row(k) += (w * (rt * rp).row(2)).eval();
          }
        }
      }
      total += opt_.lambda_foot * foot_term /
               static_cast<double>(ground_joints_.size()) / nf;
    }

    if (opt_.symmetry_regularizer) {
      for (const auto& pr : pairs_) {
        Vec3 mirrored = p.offsets.row(pr.right).transpose();
        mirrored.y() = -mirrored.y();
        const Vec3 diff = p.offsets.row(pr.left).transpose() - mirrored;
        total += opt_.regularizer_weight * diff.squaredNorm();
        if (grad) {
          const Vec3 g = 2.0 * opt_.regularizer_weight * diff;
          grad->offsets.row(pr.left) += g.transpose();
          Vec3 gr = -g;
          gr.y() = g.y();
          grad->offsets.row(pr.right) += gr.transpose();
        }
      }
    }
    if (opt_.spine_regularizer) {
      for (std::size_t i = 0; i < spine_.size(); ++i) {
        const Vec3 o = p.offsets.row(spine_[i]).transpose();
        const double len = o.norm();
        if (len < 1e-12) continue;
        const double diff = len - spine_ref_[i];
        total += opt_.regularizer_weight * diff * diff;
        if (grad) {
          grad->offsets.row(spine_[i]) +=
              (2.0 * opt_.regularizer_weight * diff / len) * o.transpose();
        }
      }
    }
    return total;
  }

  double marker_rms(const BodyParams& p, const std::vector<RigidTransform>& align) const {
    BodySkeleton s = skel_;
    p.store(s);
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < frames_.size(); ++t) {
      const BodyFk fk = fk_body(s, frames_[t].angles);
      for (std::size_t m = 0; m < s.markers.size(); ++m) {
        if (!frames_[t].observed[m]) continue;
        for (int c = 0; c < 4; ++c) {
          ss += (align[t].apply(fk.marker_corners[m][c]) - (*frames_[t].observed[m])[c])
                    .squaredNorm();
          ++n;
        }
      }
    }
    return n == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(n));
  }

  // Exact minimizer of the marker + foot terms for fixed alignments: marker
  // One damped Gauss-Newton step on the joint problem over parameters and
  // per-frame alignments. Marker positions are linear in offsets and
  // placements (rotations depend on the angles alone); alignments take a
  // left increment exp(w)*R, t+v. Frame blocks are eliminated by Schur
  // complement, the hinge enters through its active rows, and a step counts
  // only if the true total loss does not increase.
  bool gauss_newton_step(BodyParams& p, std::vector<RigidTransform>& align,
                         double& loss, double& damping) const {
    const int nj = static_cast<int>(skel_.joints.size());
    const int nm = static_cast<int>(skel_.markers.size());
    const int cols = 3 * nj + 12 * nm;
    const std::size_t nt = frames_.size();
    const double nf = static_cast<double>(nt);
    const auto offset_col = [](int j) { return 3 * j; };
    const auto placement_col = [nj](int m, int c) { return 3 * nj + 12 * m + 3 * c; };

    BodySkeleton s = skel_;
    p.store(s);

    Eigen::MatrixXd hpp = Eigen::MatrixXd::Zero(cols, cols);
    Eigen::VectorXd gp = Eigen::VectorXd::Zero(cols);
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, 6>> hpx(
        nt, Eigen::Matrix<double, Eigen::Dynamic, 6>::Zero(cols, 6));
    std::vector<Eigen::Matrix<double, 6, 6>> hxx(nt,
                                                 Eigen::Matrix<double, 6, 6>::Zero());
    std::vector<Eigen::Matrix<double, 6, 1>> gx(nt,
                                                Eigen::Matrix<double, 6, 1>::Zero());

    std::vector<std::pair<int, Mat3>> blocks;
    for (std::size_t t = 0; t < nt; ++t) {
      const BodyFk fk = fk_body(s, frames_[t].angles);
      const Mat3 ar = align[t].rotation_matrix();
      const Vec3 at = align[t].translation;

      std::size_t n_corners = 0;
      for (std::size_t m = 0; m < s.markers.size(); ++m) {
        if (frames_[t].observed[m]) n_corners += 4;
      }
      if (n_corners != 0) {
        const double w = opt_.lambda_body / (nf * static_cast<double>(n_corners));
        for (std::size_t m = 0; m < s.markers.size(); ++m) {
          if (!frames_[t].observed[m]) continue;
          const int j = s.markers[m].joint;
          blocks.clear();
          for (int k : chains_[j]) {
            const Mat3 rp = k == 0 ? Mat3::Identity()
                                   : fk.joint_poses[s.joints[k].parent].rotation_matrix();
            blocks.emplace_back(offset_col(k), ar * rp);
          }
          const Mat3 cj = ar * fk.joint_poses[j].rotation_matrix();
          for (int c = 0; c < 4; ++c) {
            blocks.emplace_back(placement_col(static_cast<int>(m), c), cj);
            const Vec3 rotated = ar * fk.marker_corners[m][c];
            const Vec3 r = rotated + at - (*frames_[t].observed[m])[c];
            Eigen::Matrix<double, 3, 6> jx;
            jx.block<3, 3>(0, 0) = -skew(rotated);
            jx.block<3, 3>(0, 3) = Mat3::Identity();
            gx[t] += w * jx.transpose() * r;
            hxx[t] += w * jx.transpose() * jx;
            for (const auto& [ca, ma] : blocks) {
              gp.segment<3>(ca) += w * ma.transpose() * r;
              hpx[t].block<3, 6>(ca, 0) += w * ma.transpose() * jx;
              for (const auto& [cb, mb] : blocks) {
                hpp.block<3, 3>(ca, cb) += w * ma.transpose() * mb;
              }
            }
            blocks.pop_back();
          }
        }
      }

      const double wf =
          opt_.lambda_foot / (nf * static_cast<double>(ground_joints_.size()));
      for (int g : ground_joints_) {
        const Vec3 rotated = ar * fk.joint_poses[g].translation;
        const double z = rotated.z() + at.z();
        double d;
        if (z < 0.0) {
          d = z;
        } else if (z > opt_.ground_band) {
          d = z - opt_.ground_band;
        } else {
          continue;
        }
        Eigen::Matrix<double, 1, 6> jx;
        jx.block<1, 3>(0, 0) = -skew(rotated).row(2);
        jx.block<1, 3>(0, 3) = Eigen::RowVector3d(0.0, 0.0, 1.0);
        gx[t] += wf * jx.transpose() * d;
        hxx[t] += wf * jx.transpose() * jx;
        std::vector<std::pair<int, Eigen::RowVector3d>> zrow;
        for (int k : chains_[g]) {
          const Mat3 rp = k == 0 ? Mat3::Identity()
                                 : fk.joint_poses[s.joints[k].parent].rotation_matrix();
          zrow.emplace_back(offset_col(k), (ar * rp).row(2));
        }
        for (const auto& [ca, ra] : zrow) {
          gp.segment<3>(ca) += wf * ra.transpose() * d;
          hpx[t].block<3, 6>(ca, 0) += wf * ra.transpose() * jx;
          for (const auto& [cb, rb] : zrow) {
            hpp.block<3, 3>(ca, cb) += wf * ra.transpose() * rb;
          }
        }
      }
    }

    const double diag_floor = 1e-12 * (1.0 + hpp.diagonal().maxCoeff());
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::MatrixXd sc = hpp;
      Eigen::VectorXd rhs = gp;
      sc.diagonal() += damping * (hpp.diagonal().array() + diag_floor).matrix();
      std::vector<Eigen::Matrix<double, 6, 6>> hxx_inv(nt);
      for (std::size_t t = 0; t < nt; ++t) {
        Eigen::Matrix<double, 6, 6> hd = hxx[t];
        hd.diagonal() += damping * (hxx[t].diagonal().array() + diag_floor).matrix();
        hxx_inv[t] = hd.ldlt().solve(Eigen::Matrix<double, 6, 6>::Identity());
        const Eigen::Matrix<double, Eigen::Dynamic, 6> k = hpx[t] * hxx_inv[t];
        sc.noalias() -= k * hpx[t].transpose();
        rhs.noalias() -= k * gx[t];
      }
      const Eigen::VectorXd dp = sc.ldlt().solve(-rhs);

      BodyParams cand = p;
      for (int j = 0; j < nj; ++j) {
        cand.offsets.row(j) += dp.segment<3>(offset_col(j)).transpose();
      }
      for (int m = 0; m < nm; ++m) {
        for (int c = 0; c < 4; ++c) {
          cand.placements[m][c] += dp.segment<3>(placement_col(m, c));
        }
      }
      std::vector<RigidTransform> cand_align = align;
      for (std::size_t t = 0; t < nt; ++t) {
        const Eigen::Matrix<double, 6, 1> dx =
            -hxx_inv[t] * (gx[t] + hpx[t].transpose() * dp);
        Quat q(rodrigues(Vec3(dx.head<3>())));
        cand_align[t].rotation = (q * cand_align[t].rotation).normalized();
        cand_align[t].translation += dx.tail<3>();
      }

      const double cand_loss = evaluate(cand, cand_align, nullptr);
      if (cand_loss <= loss) {
        p = cand;
        align = std::move(cand_align);
        loss = cand_loss;
        damping = std::max(damping / 3.0, 1e-12);
        return true;
      }
      damping *= 12.0;
    }
    return false;
  }

  const BodySkeleton& skeleton() const { return skel_; }

 private:
  const std::vector<BodyCalibrationFrame>& frames_;
  BodySkeleton skel_;
  BodyCalibrationOptions opt_;
  std::vector<std::vector<int>> chains_;  // joint -> self + ancestors
  std::vector<int> ground_joints_;
  std::vector<MirrorPair> pairs_;
  std::vector<int> spine_;
  std::vector<double> spine_ref_;
};

}  // namespace

BodyCalibrationResult calibrate_body(const std::vector<BodyCalibrationFrame>& frames,
                                     const BodySkeleton& init,
                                     const BodyCalibrationOptions& opt) {
  BodyProblem problem(frames, init, opt);
  BodyParams params = BodyParams::from(init);

  std::vector<RigidTransform> align = problem.solve_alignments(params);
  double loss = problem.evaluate(params, align, nullptr);

  BodyCalibrationResult res;
  res.loss_history.reserve(opt.epochs);

  const std::size_t batch =
      std::max<std::size_t>(1, static_cast<std::size_t>(opt.batch_size));
  double scale = opt.learning_rate;
  double gn_damping = 1e-6;
  // Adam state: first/second gradient moments and the step counter
  BodyParams moment1 = params.zeros_like();
  BodyParams moment2 = params.zeros_like();
  long step_count = 0;
  const double beta2 = 0.999;
  const double adam_eps = 1e-8;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    // refit alignments only when they do not push the total loss up
    {
      const std::vector<RigidTransform> cand = problem.solve_alignments(params);
      const double cand_loss = problem.evaluate(params, cand, nullptr);
      if (cand_loss <= loss) {
        align = cand;
        loss = cand_loss;
      }
    }

    if (loss < 1e-16) {  // at the noiseless floor; remaining epochs coast
      res.loss_history.push_back(loss);
      continue;
    }

    // one pass over the frames in batches; the whole pass, moments included,
    // is rolled back and retried at a smaller step whenever it fails to
    // lower the total loss
    const BodyParams snapshot = params;
    const BodyParams m1_snap = moment1;
    const BodyParams m2_snap = moment2;
    const long step_snap = step_count;
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      for (std::size_t b = 0; b < frames.size(); b += batch) {
        BodyParams grad = params.zeros_like();
        problem.evaluate(params, align, &grad, b,
                         std::min(b + batch, frames.size()));
        moment1.scale(opt.momentum);
        moment1.axpy(1.0 - opt.momentum, grad);
        moment2.ema_square(beta2, grad);
        ++step_count;
        const double bc1 = 1.0 - std::pow(opt.momentum, step_count);
        const double bc2 = 1.0 - std::pow(beta2, step_count);
        params.adam_step(scale, moment1, moment2, bc1, bc2, adam_eps);
      }
      const double pass_loss = problem.evaluate(params, align, nullptr);
      if (pass_loss <= loss) {
        loss = pass_loss;
        accepted = true;
        scale = std::min(scale * 1.25, opt.learning_rate);
      } else {
        params = snapshot;
        moment1 = m1_snap;
        moment2 = m2_snap;
        step_count = step_snap;
        scale *= 0.5;
      }
    }
    // one damped joint Gauss-Newton step per epoch under the same gate
    if (problem.gauss_newton_step(params, align, loss, gn_damping)) {
      moment1 = params.zeros_like();
      moment2 = params.zeros_like();
      step_count = 0;
      accepted = true;
    }

    if (!accepted) {
      BodyParams grad = params.zeros_like();
      problem.evaluate(params, align, &grad);
      if (std::sqrt(grad.squared_norm()) > 1e-9) {
        throw Error(ErrorCode::NonDecreasingLoss,
                    "loss cannot decrease away from optimum");
      }
      // at a stationary point; remaining epochs are no-ops
    }
    res.loss_history.push_back(loss);
  }

  {
    const std::vector<RigidTransform> cand = problem.solve_alignments(params);
    if (problem.evaluate(params, cand, nullptr) <= loss) align = cand;
  }

  res.skeleton = problem.skeleton();
  params.store(res.skeleton);
  res.alignments = align;
  res.final_marker_rms = problem.marker_rms(params, align);
  return res;
}

std::vector<ProtocolStep> standard_hand_protocol(bool left) {
  const std::vector<std::vector<int>> two_corner_rows =
      left ? std::vector<std::vector<int>>{{2, 1}, {3, 1}, {4, 2}, {5, 2}, {6, 2}}
           : std::vector<std::vector<int>>{{1, 2}, {1, 3}, {2, 4}, {5, 2}, {6, 2}};
  const std::vector<int> three_corner_row = left ? std::vector<int>{2, 5, 6}
                                                 : std::vector<int>{6, 3, 2};
  std::vector<ProtocolStep> steps;
  for (const auto& row : two_corner_rows) {
    for (int other : {2, 3, 4, 5}) {
      steps.push_back({row, {1, other}});
    }
  }
  steps.push_back({three_corner_row, {1, 2, 3}});
  steps.push_back({three_corner_row, {1, 3, 4}});
  steps.push_back({three_corner_row, {1, 4, 5}});
  return steps;
}

RigidTransform hand_pose_from_markers(const HandSkeleton& skel,
                                      const std::array<std::array<Vec3, 4>, 3>& observed) {
  MarkerCorrespondence c;
  for (int m = 0; m < 3; ++m) {
    for (int k = 0; k < 4; ++k) {
      c.canonical.push_back(skel.wrist_markers[m][k]);
      c.observed.push_back(observed[m][k]);
    }
  }
  return kabsch(c);
}

namespace {

class HandProblem {
 public:
  HandProblem(const std::vector<HandTouchEvent>& events,
              const CalibrationStructure& structure, const HandSkeleton& init,
              const HandCalibrationOptions& opt)
      : events_(events), structure_(structure), skel_(init), opt_(opt) {
    skel_.validate();
    if (events.empty()) {
      throw Error(ErrorCode::InvalidArgument, "hand calibration needs touch events");
    }
    for (const auto& e : events) {
      if (e.corners.size() != e.fingers.size() || e.corners.empty()) {
        throw Error(ErrorCode::LengthMismatch, "corner/finger lists must pair up");
      }
      for (int c : e.corners) {
        if (c < 1 || c > 6) throw Error(ErrorCode::InvalidArgument, "corner id out of range");
      }
      for (int f : e.fingers) {
        if (f < 1 || f > 5) throw Error(ErrorCode::InvalidArgument, "finger id out of range");
      }
    }
  }

  // x layout: wrist marker corners (36) | scales (20) | offsets (60)
  static constexpr int kMarkerDim = 36;
  static constexpr int kScaleDim = HandSkeleton::kSegments;
  static constexpr int kOffsetDim = HandSkeleton::kSegments * 3;
  static constexpr int kDim = kMarkerDim + kScaleDim + kOffsetDim;

  Eigen::VectorXd pack(const HandSkeleton& s) const {
    Eigen::VectorXd x(kDim);
    int i = 0;
    for (int m = 0; m < 3; ++m) {
      for (int c = 0; c < 4; ++c) {
        x.segment<3>(i) = s.wrist_markers[m][c];
        i += 3;
      }
    }
    x.segment(kMarkerDim, kScaleDim) = s.scales;
    for (int j = 0; j < HandSkeleton::kSegments; ++j) {
      x.segment<3>(kMarkerDim + kScaleDim + 3 * j) = s.offsets.row(j).transpose();
    }
    return x;
  }

  HandSkeleton unpack(const Eigen::VectorXd& x) const {
    HandSkeleton s = skel_;
    int i = 0;
    for (int m = 0; m < 3; ++m) {
      for (int c = 0; c < 4; ++c) {
        s.wrist_markers[m][c] = x.segment<3>(i);
        i += 3;
      }
    }
    s.scales = x.segment(kMarkerDim, kScaleDim);
    for (int j = 0; j < HandSkeleton::kSegments; ++j) {
      s.offsets.row(j) = x.segment<3>(kMarkerDim + kScaleDim + 3 * j).transpose();
    }
    return s;
  }

  static void clamp(Eigen::VectorXd& x) {
    for (int i = kMarkerDim; i < kMarkerDim + kScaleDim; ++i) {
      x[i] = std::clamp(x[i], HandSkeleton::kScaleMin, HandSkeleton::kScaleMax);
    }
    for (int i = kMarkerDim + kScaleDim; i < kDim; ++i) {
      x[i] = std::clamp(x[i], -HandSkeleton::kOffsetBound, HandSkeleton::kOffsetBound);
    }
  }

  double loss(const Eigen::VectorXd& x) const {
    const HandSkeleton s = unpack(x);
    double tip = 0.0, wrist = 0.0, pen = 0.0;
    std::size_t pairs = 0;
    for (const auto& e : events_) {
      const RigidTransform pose = hand_pose_from_markers(s, e.observed_wrist);
      const HandFk fk = fk_hand(s, e.glove_angles, pose);
      wrist += (pose.translation - e.mocap_wrist).squaredNorm();
      for (std::size_t i = 0; i < e.corners.size(); ++i) {
        const Vec3& corner = structure_.corners[e.corners[i] - 1];
        const Vec3& normal = structure_.normals[e.corners[i] - 1];
        const Vec3 tip_pos = fk.fingertips[e.fingers[i] - 1];
        const Vec3 d = tip_pos - corner;
        tip += d.squaredNorm();
        const double len = d.norm();
        if (len > 1e-9) {
          const double c = normal.dot(d / len);
          if (c < 0.0) pen += c * c;
        }
        ++pairs;
      }
    }
    return opt_.lambda_tip * tip / static_cast<double>(pairs) +
           opt_.lambda_wrist * wrist / static_cast<double>(events_.size()) +
           opt_.lambda_pen * pen / static_cast<double>(pairs);
  }

  double mean_tip_distance(const HandSkeleton& s) const {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (const auto& e : events_) {
      const RigidTransform pose = hand_pose_from_markers(s, e.observed_wrist);
      const HandFk fk = fk_hand(s, e.glove_angles, pose);
      for (std::size_t i = 0; i < e.corners.size(); ++i) {
        sum += (fk.fingertips[e.fingers[i] - 1] - structure_.corners[e.corners[i] - 1]).norm();
        ++pairs;
      }
    }
    return sum / static_cast<double>(pairs);
  }

  // central differences over the active coordinate range only
  Eigen::VectorXd gradient(const Eigen::VectorXd& x, int active_end) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(kDim);
    Eigen::VectorXd xp = x;
    for (int i = 0; i < active_end; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
      xp[i] = x[i] + h;
      const double fp = loss(xp);
      xp[i] = x[i] - h;
      const double fm = loss(xp);
      xp[i] = x[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

 private:
  const std::vector<HandTouchEvent>& events_;
  const CalibrationStructure& structure_;
  HandSkeleton skel_;
  HandCalibrationOptions opt_;
};

}  // namespace

HandCalibrationResult calibrate_hand(const std::vector<HandTouchEvent>& events,
                                     const CalibrationStructure& structure,
                                     const HandSkeleton& init,
                                     const HandCalibrationOptions& opt) {
  HandProblem problem(events, structure, init, opt);
  Eigen::VectorXd x = problem.pack(init);
  double current = problem.loss(x);
  if (!std::isfinite(current)) {
    throw Error(ErrorCode::NonConvergence, "loss not finite at the initial point");
  }

  HandCalibrationResult res;
  res.loss_history.reserve(opt.iterations);
  int stalled = 0;

  for (int it = 0; it < opt.iterations; ++it) {
    int active_end = HandProblem::kMarkerDim;
    if (it >= opt.scale_start) active_end = HandProblem::kMarkerDim + HandProblem::kScaleDim;
    if (it >= opt.offset_start) active_end = HandProblem::kDim;

    const Eigen::VectorXd g = problem.gradient(x, active_end);
    const double gnorm = g.lpNorm<Eigen::Infinity>();

    double step = opt.initial_step;
    bool accepted = false;
    for (int attempt = 0; attempt < 24; ++attempt) {
      Eigen::VectorXd trial = x - step * g;
      HandProblem::clamp(trial);
      const double trial_loss = problem.loss(trial);
      if (trial_loss <= current) {
        x = trial;
        current = trial_loss;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      ++stalled;
      if (stalled > 10 && gnorm > 1e-4) {
        throw Error(ErrorCode::NonConvergence, "no descent step found repeatedly");
      }
    } else {
      stalled = 0;
    }
    res.loss_history.push_back(current);
  }

  res.skeleton = problem.unpack(x);
  res.skeleton.validate();
  res.mean_tip_distance = problem.mean_tip_distance(res.skeleton);
  return res;
}

double validate_hand_ape(const std::vector<ApeEvent>& events, const HandSkeleton& skel) {
  if (events.empty()) {
    throw Error(ErrorCode::NoEvents, "no touch events to evaluate");
  }
  double sum = 0.0;
  for (const auto& e : events) {
    if (e.finger < 1 || e.finger > 5) {
      throw Error(ErrorCode::InvalidArgument, "finger id out of range");
    }
    const RigidTransform pose = hand_pose_from_markers(skel, e.observed_wrist);
    const HandFk fk = fk_hand(skel, e.glove_angles, pose);
    sum += (fk.fingertips[e.finger - 1] - e.target).norm();
  }
  return sum / static_cast<double>(events.size());
}

}  // namespace mfk
