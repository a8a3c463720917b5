#pragma once

#include <string>

#include "ssdiff/network.hpp"
#include "ssdiff/training.hpp"

namespace ssdiff {

/// Everything a run needs, serialized into each run directory. Loaded from
/// a JSON file; dotted-key overrides win over file values.
struct RunConfig {
    std::string data_path;
    double data_max_value = 2047.0;
    std::string sensor = "generic";  // mtf profile: wv3 | qb | gf2 | generic | uniform

    NetworkConfig network;
    TrainConfig train;

    int64_t schedule_T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    int sample_steps = 100;
    bool sample_use_ema = true;
    std::string sample_method = "ddim";

    std::string metrics_mode = "reduced";     // reduced | full
    std::string dlambda_variant = "khan";     // khan (HQNR) | qnr
    int q2n_block = 32;
    int ratio = 4;

    int synth_scenes = 16;
    int synth_bands = 8;
    int synth_size = 64;
    uint64_t seed = 0;

    int64_t checkpoint_every = 500;
    int64_t log_every = 10;

    MtfProfile mtf_profile() const;
    void validate() const;
};

/// Parses the file (or returns defaults for an empty path). Unknown keys and
/// type mismatches throw std::invalid_argument naming the offending key.
RunConfig load_run_config(const std::string& path);
/// Applies one "dotted.key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);
std::string run_config_json(const RunConfig& cfg);

std::string network_config_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);
std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace ssdiff
