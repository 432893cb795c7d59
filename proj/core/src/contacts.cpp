#include "mfk/contacts.hpp"

#include <algorithm>
#include <tuple>

#include "mfk/errors.hpp"

namespace mfk {

const char* to_string(ContactParty party) {
  switch (party) {
    case ContactParty::LeftHand: return "left";
    case ContactParty::RightHand: return "right";
    case ContactParty::Body: return "body";
  }
  return "body";
}

ContactParty contact_party_from_string(const std::string& s) {
  if (s == "left") return ContactParty::LeftHand;
  if (s == "right") return ContactParty::RightHand;
  if (s == "body") return ContactParty::Body;
  throw Error(ErrorCode::InvalidArgument, "unknown contact party: " + s);
}

std::vector<ContactRecord> compute_contacts(
    const std::vector<std::vector<Vec3>>& joints,
    const std::vector<ContactParty>& joint_party,
    const std::vector<ContactTarget>& targets, const ContactOptions& options) {
  if (!(options.threshold >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must be non-negative");
  }
  const std::size_t frames = joints.size();
  for (const auto& frame : joints) {
    if (frame.size() != joint_party.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "joint count does not match party assignment");
    }
  }
  for (const auto& target : targets) {
    if (target.mesh == nullptr) {
      throw Error(ErrorCode::InvalidArgument, "contact target without mesh");
    }
    if (target.poses.size() != 1 && target.poses.size() != frames) {
      throw Error(ErrorCode::InvalidArgument,
                  "target pose stream must have 1 or frame-count entries");
    }
  }

  std::vector<MeshDistanceGrid> grids;
  grids.reserve(targets.size());
  for (const auto& target : targets) {
    grids.emplace_back(*target.mesh, options.grid_cell);
  }

  std::vector<ContactRecord> out;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      const auto& target = targets[ti];
      const auto& pose =
          target.poses.size() == 1 ? target.poses.front() : target.poses[f];
      bool hit[3] = {false, false, false};
      for (std::size_t j = 0; j < joint_party.size(); ++j) {
        const auto p = static_cast<std::size_t>(joint_party[j]);
        if (hit[p]) continue;
        if (grids[ti].within(joints[f][j], pose, options.threshold)) hit[p] = true;
      }
      for (int p = 0; p < 3; ++p) {
        if (!hit[p]) continue;
        ContactRecord rec;
        rec.frame = static_cast<std::int64_t>(f);
        rec.party = static_cast<ContactParty>(p);
        rec.object = target.object;
        rec.part = target.part;
        out.push_back(std::move(rec));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const ContactRecord& a, const ContactRecord& b) {
    return std::tie(a.frame, a.object, a.part, a.party) <
           std::tie(b.frame, b.object, b.part, b.party);
  });
  return out;
}

}  // namespace mfk
