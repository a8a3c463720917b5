#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ssdiff/data.hpp"
#include "ssdiff/diffusion.hpp"
#include "ssdiff/network.hpp"

namespace ssdiff {

struct TrainConfig {
    double lr = 1e-3;
    double finetune_lr = 1e-4;
    int batch_size = 12;
    int64_t total_iters = 180000;   // includes the fine-tune tail
    int64_t finetune_iters = 30000;
    int64_t alternation_period = 5000;
    double ema_decay = 0.9999;
    double weight_decay = 0.01;
    double grad_clip = 1.0;  // global L2 norm ceiling; 0 disables
    int crop = 0;  // 0 trains on full frames, otherwise random crops of this size
    uint64_t seed = 0;

    int64_t finetune_start() const { return total_iters - finetune_iters; }
    void validate() const;
};

/// Mean absolute error; the Eq.-style training objective on x0.
double loss_simple(const Array& x0_hat, const Array& x0);

/// Clear mask before finetune_start; afterwards alternates between
/// fine-tuning the spectral branch (spatial detached) and the spatial
/// branch (spectral detached), switching every alternation_period.
DetachMask lbaf_schedule(int64_t iteration, const TrainConfig& cfg);

/// ema <- decay * ema + (1 - decay) * params, elementwise over the tree.
void ema_update(std::map<std::string, Array>& ema_params, const ParamRegistry& params,
                double decay);

/// Decoupled-weight-decay adaptive-moment optimizer. Parameters whose
/// requires_grad flag is off are skipped entirely (no decay either).
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 0.01);
    void step(ParamRegistry& reg, double lr);

    struct State {
        Array m, v;
        int64_t steps = 0;
    };
    std::map<std::string, State>& state() { return state_; }
    const std::map<std::string, State>& state() const { return state_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::map<std::string, State> state_;
};

/// Runs the Algorithm-1 loop: residual objective, uniform t, one AdamW
/// update per step, EMA tracking, and the L-BAF alternation.
class Trainer {
public:
    Trainer(SsdiffNet& net, NoiseSchedule sched, TrainConfig cfg);

    /// One optimizer step on an assembled batch (N,*,H,W). Returns the loss.
    /// Throws std::runtime_error on a non-finite loss without updating.
    double step(const Array& gt, const Array& pan, const Array& lms);

    int64_t iteration() const { return iteration_; }
    double current_lr() const;
    DetachMask current_mask() const { return lbaf_schedule(iteration_, cfg_); }
    const char* phase_name() const;
    Rng& rng() { return rng_; }
    const TrainConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    SsdiffNet& net() { return net_; }
    const std::map<std::string, Array>& ema() const { return ema_; }

    void save_checkpoint(const std::string& path) const;
    void restore_checkpoint(const std::string& path);

private:
    SsdiffNet& net_;
    NoiseSchedule sched_;
    TrainConfig cfg_;
    AdamW opt_;
    std::map<std::string, Array> ema_;
    Rng rng_;
    int64_t iteration_ = 0;
};

/// Assembles a training batch from dataset samples: draws indices and, when
/// cfg.crop > 0, random crop offsets from `rng`.
struct Batch {
    Array gt, pan, lms;
};
Batch make_batch(const std::vector<SceneSample>& data, const TrainConfig& cfg, Rng& rng);

struct TrainLogEntry {
    int64_t iteration;
    double loss;
    double lr;
    std::string phase;
};

/// Full training loop over cfg.total_iters; invokes `on_step` after every
/// iteration when provided. Returns the per-iteration losses.
std::vector<double> run_training(Trainer& trainer, const std::vector<SceneSample>& data,
                                 const std::function<void(const TrainLogEntry&)>& on_step = {});

// Checkpoint access for samplers and tests.
struct CheckpointMeta {
    int64_t schedule_T = 0;
    double beta_start = 0.0, beta_end = 0.0;
    int64_t iteration = 0;
    std::string network_json;
    std::string train_json;
};
CheckpointMeta read_checkpoint_meta(const std::string& path);
/// Loads /ema/* (default) or /params/* into an already-built net.
void load_checkpoint_params(const std::string& path, SsdiffNet& net, bool use_ema);

}  // namespace ssdiff
