#pragma once

#include <string>
#include <vector>

#include "resplat/camera.hpp"
#include "resplat/scene.hpp"

namespace resplat {

// A procedurally generated ground-truth scene. Deterministic from
// (generator, seed); the frontal pose is the canonical reference view.
struct SyntheticScene {
  std::string generator = "mannequin";
  uint64_t seed = 0;
  GaussianScene truth;
  CameraPose frontal;

  void validate() const;
};

// Ring rig the corpus is generated against: cameras orbit the mannequin's
// torso center at the default desk-scale resolution.
RingRig mannequin_rig();

// Capsule-torso mannequin with sphere head and limb capsules, carrying a
// randomized two-to-four-tone outfit. Front-facing surfaces keep the full
// tone; back-facing ones are darkened to 55%, so the unseen side of a
// single-view fit is genuinely ambiguous but follows a learnable rule.
SyntheticScene make_mannequin(uint64_t seed);

// One subdirectory per scene: the Gaussian scene file plus a JSON manifest
// (generator, seed, frontal pose).
void save_synthetic_scene(const std::string& dir, const SyntheticScene& s);
SyntheticScene load_synthetic_scene(const std::string& dir);

void save_corpus(const std::string& dir, const std::vector<SyntheticScene>& scenes);
std::vector<SyntheticScene> load_corpus(const std::string& dir);

}  // namespace resplat
