#include "ssdiff/sampler.hpp"

#include <stdexcept>

namespace ssdiff {

Array sample_scene(const SsdiffNet& net, const NoiseSchedule& sched, const SceneSample& scene,
                   int steps, Rng& rng, const std::string& method) {
    int64_t b = scene.lms.dim(0), h = scene.lms.dim(1), w = scene.lms.dim(2);
    Array x = rng.normal_array({1, b, h, w});
    Array pan = scene.pan.reshaped({1, 1, h, w});
    Array lms = scene.lms.reshaped({1, b, h, w});

    auto predict = [&](const Array& x_t, int64_t t) {
        DenoiseInput in{pan, lms, x_t, {t}};
        Array res_hat = net.denoise(in);
        return res_hat;  // the network predicts the clean residual directly
    };

    if (method == "ddim") {
        std::vector<int64_t> ts = ddim_subsequence(sched, steps);
        for (size_t k = 0; k < ts.size(); ++k) {
            int64_t t_cur = ts[k];
            int64_t t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
            Array x0_hat = predict(x, t_cur);
            x = ddim_step(x, x0_hat, t_cur, t_prev, sched);
        }
    } else if (method == "ddpm") {
        for (int64_t t = sched.T; t >= 1; --t) {
            Array x0_hat = predict(x, t);
            Array noise = t > 1 ? rng.normal_array(x.shape()) : Array(x.shape());
            x = ddpm_step(x, x0_hat, t, sched, noise);
        }
    } else {
        throw std::invalid_argument("sample.method: must be 'ddim' or 'ddpm'");
    }
    return residual_unwrap(x.reshaped({b, h, w}), scene.lms);
}

std::vector<Array> sample_scenes(const SsdiffNet& net, const NoiseSchedule& sched,
                                 const std::vector<SceneSample>& scenes, int steps, Rng& rng,
                                 const std::string& method, int group) {
    std::vector<Array> out;
    out.reserve(scenes.size());
    if (method != "ddim" || group <= 1) {
        for (const auto& s : scenes) out.push_back(sample_scene(net, sched, s, steps, rng, method));
        return out;
    }
    // deterministic DDIM batches cleanly; group scenes of equal size
    size_t i = 0;
    while (i < scenes.size()) {
        size_t j = i + 1;
        while (j < scenes.size() && j - i < static_cast<size_t>(group) &&
               same_shape(scenes[j].lms, scenes[i].lms))
            ++j;
        int64_t n = static_cast<int64_t>(j - i);
        int64_t b = scenes[i].lms.dim(0), h = scenes[i].lms.dim(1), w = scenes[i].lms.dim(2);
        Array x({n, b, h, w});
        Array pan({n, 1, h, w});
        Array lms({n, b, h, w});
        for (int64_t s = 0; s < n; ++s) {
            Array noise = rng.normal_array({b, h, w});
            std::copy(noise.data(), noise.data() + noise.size(), x.data() + s * b * h * w);
            const SceneSample& sc = scenes[i + static_cast<size_t>(s)];
            std::copy(sc.pan.data(), sc.pan.data() + h * w, pan.data() + s * h * w);
            std::copy(sc.lms.data(), sc.lms.data() + b * h * w, lms.data() + s * b * h * w);
        }
        std::vector<int64_t> ts = ddim_subsequence(sched, steps);
        for (size_t k = 0; k < ts.size(); ++k) {
            int64_t t_cur = ts[k];
            int64_t t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
            DenoiseInput in{pan, lms, x, std::vector<int64_t>(static_cast<size_t>(n), t_cur)};
            Array x0_hat = net.denoise(in);
            x = ddim_step(x, x0_hat, t_cur, t_prev, sched);
        }
        for (int64_t s = 0; s < n; ++s) {
            Array fused({b, h, w});
            const double* src = x.data() + s * b * h * w;
            std::copy(src, src + b * h * w, fused.data());
            out.push_back(residual_unwrap(fused, scenes[i + static_cast<size_t>(s)].lms));
        }
        i = j;
    }
    return out;
}

}  // namespace ssdiff
