#pragma once

#include <vector>

#include "ssdiff/array.hpp"
#include "ssdiff/random.hpp"

namespace ssdiff {

/// Precomputed variance schedule. Timesteps are 1-based: t in [1, T].
struct NoiseSchedule {
    int64_t T = 0;
    std::vector<double> betas;                // beta_t, index t-1
    std::vector<double> alphas;               // 1 - beta_t
    std::vector<double> alpha_bars;           // prod_{i<=t} alpha_i
    std::vector<double> posterior_variances;  // beta_t (1 - abar_{t-1}) / (1 - abar_t)

    double beta(int64_t t) const { return betas[static_cast<size_t>(t - 1)]; }
    double alpha(int64_t t) const { return alphas[static_cast<size_t>(t - 1)]; }
    double alpha_bar(int64_t t) const { return alpha_bars[static_cast<size_t>(t - 1)]; }
    double posterior_variance(int64_t t) const {
        return posterior_variances[static_cast<size_t>(t - 1)];
    }
    void check_t(int64_t t) const;
};

/// Linear beta schedule from beta_start to beta_end over T steps.
/// The t=1 posterior variance uses abar_0 := 1, i.e. zero.
NoiseSchedule build_schedule(int64_t T, double beta_start = 1e-4, double beta_end = 0.02);

/// Noisy residual at step t: sqrt(abar_t) x0 + sqrt(1-abar_t) eps.
Array q_sample(const Array& x0_res, int64_t t, const Array& eps, const NoiseSchedule& sched);

/// Posterior mean given predicted noise: (x_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t).
Array posterior_mean(const Array& x_t, const Array& eps_hat, int64_t t,
                     const NoiseSchedule& sched);

/// Inverts q_sample for an x0-predicting network:
/// eps = (x_t - sqrt(abar_t) x0_hat) / sqrt(1-abar_t).
Array x0_to_eps(const Array& x0_hat, const Array& x_t, int64_t t, const NoiseSchedule& sched);

/// One stochastic ancestral step; `noise` must be zero at t = 1.
Array ddpm_step(const Array& x_t, const Array& x0_hat, int64_t t, const NoiseSchedule& sched,
                const Array& noise);

/// Evenly strided, strictly decreasing timesteps ending at 1.
std::vector<int64_t> ddim_subsequence(const NoiseSchedule& sched, int64_t n_steps);

/// Deterministic (eta = 0) update from t_cur to t_prev (t_prev = 0 returns x0_hat).
Array ddim_step(const Array& x_t, const Array& x0_hat, int64_t t_cur, int64_t t_prev,
                const NoiseSchedule& sched);

/// Residual reparameterization: the denoised quantity is hrms - lrms_up.
Array residual_wrap(const Array& hrms, const Array& lrms_up);
Array residual_unwrap(const Array& res, const Array& lrms_up);

}  // namespace ssdiff
