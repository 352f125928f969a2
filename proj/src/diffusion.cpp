#include "grlb/diffusion.hpp"

#include <cmath>

#include "grlb/common.hpp"

namespace grlb::diffusion {

NoiseSchedule NoiseSchedule::linear(int T, float beta_min, float beta_max) {
    if (T < 1) throw DataError("schedule: T must be >= 1");
    if (!(beta_min > 0.0f) || !(beta_max < 1.0f) || beta_min > beta_max)
        throw DataError("schedule: need 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(T + 1, 0.0f);
    s.alpha_bar.assign(T + 1, 1.0f);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const float b =
            T == 1 ? beta_min
                   : beta_min + (beta_max - beta_min) * static_cast<float>(t - 1) / (T - 1);
        s.beta[t] = b;
        prod *= 1.0 - static_cast<double>(b);
        s.alpha_bar[t] = static_cast<float>(prod);
    }
    return s;
}

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T)
        throw DataError("timestep " + std::to_string(t) + " outside [1," + std::to_string(T) + "]");
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    sched.check_t(t);
    if (x0.shape() != eps.shape()) throw ShapeError("q_sample: x0/eps shape mismatch");
    const float ab = sched.alpha_bar[t];
    return ops::add(ops::mul_scalar(x0, std::sqrt(ab)), ops::mul_scalar(eps, std::sqrt(1.0f - ab)));
}

Tensor noised_batch(const Tensor& x0, const std::vector<int>& ts, const Tensor& eps,
                    const NoiseSchedule& sched) {
    if (x0.shape() != eps.shape()) throw ShapeError("noised_batch: x0/eps shape mismatch");
    const auto& s = x0.shape();
    if (static_cast<int>(ts.size()) != s[0]) throw ShapeError("noised_batch: one t per example");
    Tensor out(s);
    const int64_t plane = x0.numel() / s[0];
    const float* px = x0.data().data();
    const float* pe = eps.data().data();
    float* po = out.mutable_data().data();
    for (int n = 0; n < s[0]; ++n) {
        sched.check_t(ts[n]);
        const float ab = sched.alpha_bar[ts[n]];
        const float a = std::sqrt(ab), b = std::sqrt(1.0f - ab);
        const int64_t off = static_cast<int64_t>(n) * plane;
        for (int64_t i = 0; i < plane; ++i) po[off + i] = a * px[off + i] + b * pe[off + i];
    }
    return out;
}

Tensor predict_x0(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched) {
    sched.check_t(t);
    if (x_t.shape() != eps_hat.shape()) throw ShapeError("predict_x0: shape mismatch");
    const float ab = sched.alpha_bar[t];
    Tensor raw = ops::mul_scalar(ops::sub(x_t, ops::mul_scalar(eps_hat, std::sqrt(1.0f - ab))),
                                 1.0f / std::sqrt(ab));
    return ops::clamp(raw, -3.0f, 3.0f);
}

DsmResult dsm_loss(const ScoreModel& model, const Tensor& x0, const Tensor& cond,
                   const NoiseSchedule& sched, Rng& rng) {
    const auto& s = x0.shape();
    DsmResult r;
    r.ts.resize(s[0]);
    for (int n = 0; n < s[0]; ++n) r.ts[n] = static_cast<int>(rng.uniform_int(1, sched.T));
    Tensor eps(s);
    for (auto& v : eps.mutable_data()) v = rng.normal();
    r.eps = eps;
    r.x_t = noised_batch(x0, r.ts, eps, sched);
    r.eps_hat = model.forward(ops::concat_channels({r.x_t, cond}), r.ts);
    r.loss = ops::mse(r.eps_hat, r.eps);
    return r;
}

namespace {

void fill_normal(Tensor& t, Rng& rng) {
    for (auto& v : t.mutable_data()) v = rng.normal();
}

// out = mask * a + (1-mask) * b, with mask broadcast over channels.
void masked_mix(Tensor& a, const Tensor& b, const Tensor& mask) {
    const auto& s = a.shape();
    const int64_t hw = static_cast<int64_t>(s[2]) * s[3];
    float* pa = a.mutable_data().data();
    const float* pb = b.data().data();
    const float* pm = mask.data().data();
    for (int n = 0; n < s[0]; ++n)
        for (int c = 0; c < s[1]; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * s[1] + c) * hw;
            const float* mrow = pm + static_cast<int64_t>(n) * hw;
            for (int64_t i = 0; i < hw; ++i)
                if (mrow[i] == 0.0f) pa[off + i] = pb[off + i];
    }
}

}  // namespace

Tensor sample(const ScoreModel& model, const Tensor& cond,
              const std::optional<KnownRegion>& known, int steps, uint64_t seed,
              const NoiseSchedule& sched) {
    if (steps < 0 || steps > sched.T) throw DataError("sample: steps must be in [0, T]");
    NoGradGuard ng;
    const auto& cs = cond.shape();
    const int N = cs[0], H = cs[2], W = cs[3];
    const int C = model.arch().out_channels;
    if (known) {
        if (known->x_known.shape() != std::vector<int>{N, C, H, W})
            throw ShapeError("sample: known region shape mismatch");
        if (known->mask.shape() != std::vector<int>{N, 1, H, W})
            throw ShapeError("sample: known mask shape mismatch");
    }
    Rng rng(seed);
    Tensor x({N, C, H, W});
    fill_normal(x, rng);

    if (steps > 0) {
        // Evenly strided subsequence T = tau_steps > ... > tau_1 >= 1; the
        // subsequence forms its own ancestral chain with
        // beta'_k = 1 - abar(tau_k)/abar(tau_{k-1}) and sigma^2 = beta'.
        std::vector<int> tau(steps + 1, 0);
        for (int k = 1; k <= steps; ++k)
            tau[k] = static_cast<int>(
                std::ceil(static_cast<double>(sched.T) * k / static_cast<double>(steps)));

        std::vector<int> ts(N);
        for (int k = steps; k >= 1; --k) {
            const int t = tau[k];
            const int tp = tau[k - 1];
            std::fill(ts.begin(), ts.end(), t);
            Tensor eps_hat = model.forward(ops::concat_channels({x, cond}), ts);
            const float ab_t = sched.alpha_bar[t];
            const float ab_p = tp == 0 ? 1.0f : sched.alpha_bar[tp];
            const float sq_ab_t = std::sqrt(ab_t), sq_1m = std::sqrt(1.0f - ab_t);
            const float betap = 1.0f - ab_t / ab_p;
            // Posterior ("small") variance: beta~ = (1-abar_prev)/(1-abar_t) * beta'.
            const float sigma = std::sqrt((1.0f - ab_p) / (1.0f - ab_t) * betap);
            const float c_x0 = std::sqrt(ab_p) * betap / (1.0f - ab_t);
            const float c_xt = std::sqrt(ab_t / ab_p) * (1.0f - ab_p) / (1.0f - ab_t);

            Tensor next({N, C, H, W});
            float* pn = next.mutable_data().data();
            const float* px = x.data().data();
            const float* pe = eps_hat.data().data();
            const int64_t total = next.numel();
            if (tp == 0) {
                // Last step: posterior collapses onto x0_hat, no noise.
                for (int64_t i = 0; i < total; ++i) {
                    float x0h = (px[i] - sq_1m * pe[i]) / sq_ab_t;
                    x0h = std::min(3.0f, std::max(-3.0f, x0h));
                    pn[i] = x0h;
                }
            } else {
                for (int64_t i = 0; i < total; ++i) {
                    float x0h = (px[i] - sq_1m * pe[i]) / sq_ab_t;
                    x0h = std::min(3.0f, std::max(-3.0f, x0h));
                    pn[i] = c_x0 * x0h + c_xt * px[i] + sigma * rng.normal();
                }
            }
            x = next;

            if (known && tp >= 1) {
                // Inpainting-style projection of the known region.
                Tensor eps_k({N, C, H, W});
                fill_normal(eps_k, rng);
                std::vector<int> tps(N, tp);
                Tensor xk = noised_batch(known->x_known, tps, eps_k, sched);
                masked_mix(x, xk, known->mask);
            }
        }
    }
    if (known) masked_mix(x, known->x_known, known->mask);
    return x;
}

}  // namespace grlb::diffusion
