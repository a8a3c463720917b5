#include "ssdiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace ssdiff {

void NoiseSchedule::check_t(int64_t t) const {
    if (t < 1 || t > T) throw std::out_of_range("timestep out of range [1,T]");
}

NoiseSchedule build_schedule(int64_t T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("build_schedule: T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw std::invalid_argument("build_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    s.posterior_variances.resize(static_cast<size_t>(T));
    double abar = 1.0;
    for (int64_t i = 0; i < T; ++i) {
        double beta = T == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                                static_cast<double>(T - 1);
        double prev_abar = abar;
        s.betas[static_cast<size_t>(i)] = beta;
        s.alphas[static_cast<size_t>(i)] = 1.0 - beta;
        abar *= 1.0 - beta;
        s.alpha_bars[static_cast<size_t>(i)] = abar;
        // abar_0 := 1 makes the t=1 entry zero, so the final step adds no noise
        s.posterior_variances[static_cast<size_t>(i)] = beta * (1.0 - prev_abar) / (1.0 - abar);
    }
    return s;
}

Array q_sample(const Array& x0_res, int64_t t, const Array& eps, const NoiseSchedule& sched) {
    sched.check_t(t);
    check_same_shape(x0_res, eps, "q_sample");
    double ab = sched.alpha_bar(t);
    double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    Array out = Array::zeros_like(x0_res);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = c0 * x0_res[i] + c1 * eps[i];
    return out;
}

Array posterior_mean(const Array& x_t, const Array& eps_hat, int64_t t,
                     const NoiseSchedule& sched) {
    sched.check_t(t);
    check_same_shape(x_t, eps_hat, "posterior_mean");
    double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    Array out = Array::zeros_like(x_t);
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
    return out;
}

Array x0_to_eps(const Array& x0_hat, const Array& x_t, int64_t t, const NoiseSchedule& sched) {
    sched.check_t(t);
    check_same_shape(x0_hat, x_t, "x0_to_eps");
    double ab = sched.alpha_bar(t);
    if (!(ab < 1.0)) throw std::invalid_argument("x0_to_eps: alpha_bar must be < 1");
    double c0 = std::sqrt(ab), inv = 1.0 / std::sqrt(1.0 - ab);
    Array out = Array::zeros_like(x_t);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - c0 * x0_hat[i]) * inv;
    return out;
}

Array ddpm_step(const Array& x_t, const Array& x0_hat, int64_t t, const NoiseSchedule& sched,
                const Array& noise) {
    Array eps_hat = x0_to_eps(x0_hat, x_t, t, sched);
    Array mean = posterior_mean(x_t, eps_hat, t, sched);
    if (t == 1) return mean;
    check_same_shape(mean, noise, "ddpm_step");
    double sigma = std::sqrt(sched.posterior_variance(t));
    axpy(mean, sigma, noise);
    return mean;
}

std::vector<int64_t> ddim_subsequence(const NoiseSchedule& sched, int64_t n_steps) {
    if (n_steps < 1 || n_steps > sched.T)
        throw std::invalid_argument("ddim_subsequence: need 1 <= n_steps <= T");
    int64_t stride = sched.T / n_steps;
    std::vector<int64_t> ts(static_cast<size_t>(n_steps));
    for (int64_t k = 0; k < n_steps; ++k) ts[static_cast<size_t>(k)] = 1 + (n_steps - 1 - k) * stride;
    return ts;
}

Array ddim_step(const Array& x_t, const Array& x0_hat, int64_t t_cur, int64_t t_prev,
                const NoiseSchedule& sched) {
    sched.check_t(t_cur);
    if (t_prev < 0 || t_prev >= t_cur) throw std::invalid_argument("ddim_step: bad target step");
    Array eps_hat = x0_to_eps(x0_hat, x_t, t_cur, sched);
    double ab_prev = t_prev == 0 ? 1.0 : sched.alpha_bar(t_prev);
    double c0 = std::sqrt(ab_prev), c1 = std::sqrt(1.0 - ab_prev);
    Array out = Array::zeros_like(x_t);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = c0 * x0_hat[i] + c1 * eps_hat[i];
    return out;
}

Array residual_wrap(const Array& hrms, const Array& lrms_up) {
    check_same_shape(hrms, lrms_up, "residual_wrap");
    return sub(hrms, lrms_up);
}

Array residual_unwrap(const Array& res, const Array& lrms_up) {
    check_same_shape(res, lrms_up, "residual_unwrap");
    return add(res, lrms_up);
}

}  // namespace ssdiff
