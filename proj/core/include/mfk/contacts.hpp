#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfk/mesh.hpp"
#include "mfk/types.hpp"

namespace mfk {

enum class ContactParty { LeftHand, RightHand, Body };

const char* to_string(ContactParty party);
ContactParty contact_party_from_string(const std::string& s);

struct ContactRecord {
  std::int64_t frame = 0;
  ContactParty party = ContactParty::Body;
  std::string object;
  int part = 0;

  friend bool operator==(const ContactRecord&, const ContactRecord&) = default;
};

// Posed geometry of one object part. poses holds one entry per frame or a
// single static entry.
struct ContactTarget {
  std::string object;
  int part = 0;
  const TriangleMesh* mesh = nullptr;  // part-local frame
  std::vector<RigidTransform> poses;
};

struct ContactOptions {
  double threshold = 0.01;  // m, inclusive
  double grid_cell = 0.05;  // spatial-hash resolution
};

// joints[frame][j] are world positions; joint_party assigns each joint to
// the body part reported for it. Emits one record per
// (frame, party, object, part) with any joint within threshold, sorted by
// (frame, object, part, party).
std::vector<ContactRecord> compute_contacts(
    const std::vector<std::vector<Vec3>>& joints,
    const std::vector<ContactParty>& joint_party,
    const std::vector<ContactTarget>& targets,
    const ContactOptions& options = {});

}  // namespace mfk
