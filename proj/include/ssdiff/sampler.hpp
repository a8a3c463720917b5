#pragma once

#include <string>
#include <vector>

#include "ssdiff/data.hpp"
#include "ssdiff/diffusion.hpp"
#include "ssdiff/network.hpp"

namespace ssdiff {

/// Generates the fused image for one scene. "ddim" walks the evenly strided
/// subsequence deterministically; "ddpm" runs all T stochastic steps.
Array sample_scene(const SsdiffNet& net, const NoiseSchedule& sched, const SceneSample& scene,
                   int steps, Rng& rng, const std::string& method = "ddim");

/// Deterministic DDIM runs `group` equally-sized scenes per batched pass;
/// the stochastic method falls back to one scene at a time.
std::vector<Array> sample_scenes(const SsdiffNet& net, const NoiseSchedule& sched,
                                 const std::vector<SceneSample>& scenes, int steps, Rng& rng,
                                 const std::string& method = "ddim", int group = 1);

}  // namespace ssdiff
