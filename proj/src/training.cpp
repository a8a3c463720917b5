#include "ssdiff/training.hpp"

#include <cmath>
#include <stdexcept>

#include "ssdiff/config.hpp"
#include "ssdiff/hdf5_io.hpp"

namespace ssdiff {

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !(finetune_lr > 0.0))
        throw std::invalid_argument("train.lr: learning rates must be positive");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size: must be >= 1");
    if (total_iters < 1) throw std::invalid_argument("train.total_iters: must be >= 1");
    if (finetune_iters < 0 || finetune_iters > total_iters)
        throw std::invalid_argument("train.finetune_iters: must lie in [0, total_iters]");
    if (alternation_period < 1)
        throw std::invalid_argument("train.alternation_period: must be >= 1");
    if (!(ema_decay > 0.0) || !(ema_decay < 1.0))
        throw std::invalid_argument("train.ema_decay: must be in (0,1)");
    if (crop < 0) throw std::invalid_argument("train.crop: must be >= 0");
    if (grad_clip < 0.0) throw std::invalid_argument("train.grad_clip: must be >= 0");
    if (crop > 0 && crop % 4 != 0)
        throw std::invalid_argument("train.crop: must be divisible by 4");
}

double loss_simple(const Array& x0_hat, const Array& x0) {
    check_same_shape(x0_hat, x0, "loss_simple");
    double s = 0.0;
    for (int64_t i = 0; i < x0.size(); ++i) s += std::abs(x0_hat[i] - x0[i]);
    return s / static_cast<double>(x0.size());
}

DetachMask lbaf_schedule(int64_t iteration, const TrainConfig& cfg) {
    DetachMask m;
    if (iteration < 0) throw std::invalid_argument("lbaf_schedule: iteration must be >= 0");
    if (iteration < cfg.finetune_start()) return m;
    int64_t window = (iteration - cfg.finetune_start()) / cfg.alternation_period;
    if (window % 2 == 0)
        m.detach_spatial_output = true;  // spectral branch fine-tunes first
    else
        m.detach_spectral_output = true;
    return m;
}

void ema_update(std::map<std::string, Array>& ema_params, const ParamRegistry& params,
                double decay) {
    for (const auto& e : params.entries()) {
        auto it = ema_params.find(e.name);
        if (it == ema_params.end())
            throw std::invalid_argument("ema_update: parameter tree mismatch at '" + e.name + "'");
        Array& ema = it->second;
        const Array& p = e.tensor.value();
        check_same_shape(ema, p, "ema_update");
        for (int64_t i = 0; i < ema.size(); ++i)
            ema[i] = decay * ema[i] + (1.0 - decay) * p[i];
    }
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(ParamRegistry& reg, double lr) {
    for (auto& e : reg.entries()) {
        if (!e.tensor.requires_grad() || !e.tensor.has_grad()) continue;
        Array& p = e.tensor.value();
        const Array& g = e.tensor.grad();
        State& st = state_[e.name];
        if (st.m.empty()) {
            st.m = Array(p.shape());
            st.v = Array(p.shape());
        }
        st.steps += 1;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.steps));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.steps));
        for (int64_t i = 0; i < p.size(); ++i) {
            st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
            st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
            double mhat = st.m[i] / bc1;
            double vhat = st.v[i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[i]);
        }
    }
}

Trainer::Trainer(SsdiffNet& net, NoiseSchedule sched, TrainConfig cfg)
    : net_(net),
      sched_(std::move(sched)),
      cfg_(cfg),
      opt_(0.9, 0.999, 1e-8, cfg.weight_decay),
      rng_(cfg.seed) {
    cfg_.validate();
    for (const auto& e : net_.params().entries()) ema_[e.name] = e.tensor.value();
}

double Trainer::current_lr() const {
    return iteration_ < cfg_.finetune_start() ? cfg_.lr : cfg_.finetune_lr;
}

const char* Trainer::phase_name() const {
    DetachMask m = current_mask();
    if (m.detach_spatial_output) return "finetune_spe";
    if (m.detach_spectral_output) return "finetune_spa";
    return "train";
}

double Trainer::step(const Array& gt, const Array& pan, const Array& lms) {
    if (gt.rank() != 4 || pan.rank() != 4 || lms.rank() != 4)
        throw std::invalid_argument("train_step: batch must be (N,C,H,W)");
    int64_t n = gt.dim(0);
    DetachMask mask = current_mask();

    // freeze the detached branch outright so weight decay cannot move it
    net_.params().set_all_trainable(true);
    if (mask.detach_spatial_output) net_.params().set_branch_trainable(Branch::spatial, false);
    if (mask.detach_spectral_output) net_.params().set_branch_trainable(Branch::spectral, false);

    Array res = sub(gt, lms);
    Array x_t = Array::zeros_like(res);
    std::vector<int64_t> ts(static_cast<size_t>(n));
    int64_t plane = res.size() / n;
    for (int64_t i = 0; i < n; ++i) {
        int64_t t = rng_.uniform_int(1, sched_.T);
        ts[static_cast<size_t>(i)] = t;
        double c0 = std::sqrt(sched_.alpha_bar(t));
        double c1 = std::sqrt(1.0 - sched_.alpha_bar(t));
        double* dst = x_t.data() + i * plane;
        const double* src = res.data() + i * plane;
        for (int64_t j = 0; j < plane; ++j) dst[j] = c0 * src[j] + c1 * rng_.normal();
    }

    DenoiseInput in{pan, lms, x_t, ts};
    Tensor res_hat = net_.forward(in, mask);
    Tensor x0_hat = add(res_hat, constant(lms));
    Tensor loss = l1_loss(x0_hat, constant(gt));
    double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value))
        throw std::runtime_error("train_step: non-finite loss at iteration " +
                                 std::to_string(iteration_));

    net_.params().zero_grads();
    backward(loss);
    if (cfg_.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& e : net_.params().entries())
            if (e.tensor.requires_grad() && e.tensor.has_grad()) sq += dot(e.tensor.grad(), e.tensor.grad());
        double norm = std::sqrt(sq);
        if (norm > cfg_.grad_clip) {
            double s = cfg_.grad_clip / norm;
            for (auto& e : net_.params().entries())
                if (e.tensor.requires_grad() && e.tensor.has_grad()) {
                    Array& g = e.tensor.node()->grad;
                    for (int64_t i = 0; i < g.size(); ++i) g[i] *= s;
                }
        }
    }
    opt_.step(net_.params(), current_lr());
    ema_update(ema_, net_.params(), cfg_.ema_decay);
    iteration_ += 1;
    return loss_value;
}

Batch make_batch(const std::vector<SceneSample>& data, const TrainConfig& cfg, Rng& rng) {
    if (data.empty()) throw std::invalid_argument("make_batch: empty dataset");
    int64_t bands = data[0].lms.dim(0);
    int64_t h = data[0].lms.dim(1), w = data[0].lms.dim(2);
    int64_t ch = cfg.crop > 0 ? cfg.crop : h;
    int64_t cw = cfg.crop > 0 ? cfg.crop : w;
    if (ch > h || cw > w) throw std::invalid_argument("make_batch: crop larger than frame");
    int64_t n = cfg.batch_size;
    Batch b{Array({n, bands, ch, cw}), Array({n, 1, ch, cw}), Array({n, bands, ch, cw})};
    for (int64_t i = 0; i < n; ++i) {
        const SceneSample& s = data[static_cast<size_t>(rng.uniform_int(
            0, static_cast<int64_t>(data.size()) - 1))];
        if (s.gt.empty()) throw std::invalid_argument("make_batch: training data needs gt");
        int64_t oy = ch < h ? rng.uniform_int(0, h - ch) : 0;
        int64_t ox = cw < w ? rng.uniform_int(0, w - cw) : 0;
        auto copy_crop = [&](const Array& src, Array& dst, int64_t nb) {
            for (int64_t c = 0; c < nb; ++c)
                for (int64_t y = 0; y < ch; ++y)
                    for (int64_t x = 0; x < cw; ++x)
                        dst.at4(i, c, y, x) = src.at3(c, oy + y, ox + x);
        };
        copy_crop(s.gt, b.gt, bands);
        copy_crop(s.pan, b.pan, 1);
        copy_crop(s.lms, b.lms, bands);
    }
    return b;
}

std::vector<double> run_training(Trainer& trainer, const std::vector<SceneSample>& data,
                                 const std::function<void(const TrainLogEntry&)>& on_step) {
    const TrainConfig& cfg = trainer.config();
    std::vector<double> losses;
    losses.reserve(static_cast<size_t>(cfg.total_iters));
    while (trainer.iteration() < cfg.total_iters) {
        Batch b = make_batch(data, cfg, trainer.rng());
        std::string phase = trainer.phase_name();
        double lr = trainer.current_lr();
        double loss = trainer.step(b.gt, b.pan, b.lms);
        losses.push_back(loss);
        if (on_step) on_step({trainer.iteration(), loss, lr, phase});
    }
    return losses;
}

void Trainer::save_checkpoint(const std::string& path) const {
    H5File f = H5File::create(path);
    for (const auto& e : net_.params().entries()) f.write("params/" + e.name, e.tensor.value());
    for (const auto& [name, a] : ema_) f.write("ema/" + name, a);
    for (const auto& [name, st] : opt_.state()) {
        f.write("opt/m/" + name, st.m);
        f.write("opt/v/" + name, st.v);
        Array steps({1});
        steps[0] = static_cast<double>(st.steps);
        f.write("opt/steps/" + name, steps);
    }
    f.write_attr("iteration", static_cast<double>(iteration_));
    f.write_attr("schedule_T", static_cast<double>(sched_.T));
    f.write_attr("beta_start", sched_.betas.front());
    f.write_attr("beta_end", sched_.betas.back());
    f.write_attr("network_config", network_config_json(net_.config()));
    f.write_attr("train_config", train_config_json(cfg_));
    f.write_attr("rng_state", rng_.state());
}

void Trainer::restore_checkpoint(const std::string& path) {
    H5File f = H5File::open_readonly(path);
    for (auto& e : net_.params().entries()) {
        Array v = f.read("params/" + e.name);
        check_same_shape(v, e.tensor.value(), "restore_checkpoint");
        e.tensor.value() = std::move(v);
        ema_[e.name] = f.read("ema/" + e.name);
        if (f.exists("opt/m/" + e.name)) {
            AdamW::State st;
            st.m = f.read("opt/m/" + e.name);
            st.v = f.read("opt/v/" + e.name);
            st.steps = static_cast<int64_t>(f.read("opt/steps/" + e.name)[0]);
            opt_.state()[e.name] = std::move(st);
        }
    }
    iteration_ = static_cast<int64_t>(f.read_attr_double("iteration"));
    rng_.set_state(f.read_attr_string("rng_state"));
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    H5File f = H5File::open_readonly(path);
    CheckpointMeta m;
    m.schedule_T = static_cast<int64_t>(f.read_attr_double("schedule_T"));
    m.beta_start = f.read_attr_double("beta_start");
    m.beta_end = f.read_attr_double("beta_end");
    m.iteration = static_cast<int64_t>(f.read_attr_double("iteration"));
    m.network_json = f.read_attr_string("network_config");
    m.train_json = f.read_attr_string("train_config");
    return m;
}

void load_checkpoint_params(const std::string& path, SsdiffNet& net, bool use_ema) {
    H5File f = H5File::open_readonly(path);
    std::string prefix = use_ema ? "ema/" : "params/";
    for (auto& e : net.params().entries()) {
        Array v = f.read(prefix + e.name);
        check_same_shape(v, e.tensor.value(), "load_checkpoint_params");
        e.tensor.value() = std::move(v);
    }
}

}  // namespace ssdiff
