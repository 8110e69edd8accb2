#pragma once

#include <cstdint>
#include <string>

#include "ropnet/data.hpp"

namespace ropnet {

struct SynthConfig {
  int64_t n_patients = 10;
  int64_t images_per_eye = 3;
  double positive_rate = 0.5;
  double quality_mix = 0.5;  // probability a given image lands in the low tier
  uint64_t seed = 0;
};

// Draws one latent eye per (patient, side): fundus disc, optic blob, vessel
// walks, and — for positive eyes — a bright demarcation-like arc ridge. Each
// image of the eye renders a rotated angular window of the same latent scene,
// so per-eye images carry correlated evidence. Labels attach to the eye.
// Deterministic per seed, including pixel bytes.
Manifest synth_generate(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace ropnet
