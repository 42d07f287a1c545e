#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "plateinspect/nn/tensor.hpp"

namespace plateinspect::nn {

// Batched latent distribution parameters (n x d each).
template <typename T>
struct LatentParams {
    int n = 0, d = 0;
    std::vector<T> mu, logvar;

    LatentParams() = default;
    LatentParams(int n_, int d_)
        : n(n_), d(d_), mu(static_cast<size_t>(n_) * d_, T(0)),
          logvar(static_cast<size_t>(n_) * d_, T(0)) {}
};

// z = mu + eps .* exp(0.5 * logvar), one row per sample.
template <typename T>
std::vector<T> reparameterize(const LatentParams<T>& lp, const std::vector<T>& eps) {
    if (eps.size() != lp.mu.size())
        throw std::invalid_argument("reparameterize: eps size mismatch");
    std::vector<T> z(lp.mu.size());
    for (size_t i = 0; i < z.size(); ++i)
        z[i] = lp.mu[i] + eps[i] * static_cast<T>(std::exp(0.5 * static_cast<double>(lp.logvar[i])));
    return z;
}

// -1/2 sum_j (1 + logvar - mu^2 - exp(logvar)), mean over the batch.
template <typename T>
double loss_kl(const LatentParams<T>& lp) {
    double total = 0.0;
    for (size_t i = 0; i < lp.mu.size(); ++i) {
        const double m = lp.mu[i], lv = lp.logvar[i];
        total += -0.5 * (1.0 + lv - m * m - std::exp(lv));
    }
    return lp.n > 0 ? total / lp.n : 0.0;
}

// Accumulates d(scale * KL)/dmu and /dlogvar.
template <typename T>
void loss_kl_backward(const LatentParams<T>& lp, double scale, std::vector<T>& dmu,
                      std::vector<T>& dlogvar) {
    const double s = scale / lp.n;
    for (size_t i = 0; i < lp.mu.size(); ++i) {
        dmu[i] += static_cast<T>(s * lp.mu[i]);
        dlogvar[i] += static_cast<T>(s * 0.5 * (std::exp(static_cast<double>(lp.logvar[i])) - 1.0));
    }
}

// Mean of squared elementwise differences over every element.
template <typename T>
double loss_mse(const Tensor<T>& x, const Tensor<T>& xhat) {
    if (!x.same_shape(xhat)) throw std::invalid_argument("loss_mse: shape mismatch");
    double total = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(xhat.v[i]) - x.v[i];
        total += d * d;
    }
    return total / x.size();
}

template <typename T>
void loss_mse_backward(const Tensor<T>& x, const Tensor<T>& xhat, double scale, Tensor<T>& dxhat) {
    const double s = 2.0 * scale / x.size();
    for (size_t i = 0; i < x.size(); ++i)
        dxhat.v[i] += static_cast<T>(s * (static_cast<double>(xhat.v[i]) - x.v[i]));
}

// ---------------------------------------------------------------------------
// SSIM loss: 11x11 Gaussian windows (sigma 1.5), valid positions, averaged
// over windows, channels and batch; loss = 1 - mean SSIM.
// ---------------------------------------------------------------------------

struct SsimConstants {
    double c1 = 0.0016;  // (0.01 * R)^2 with R = 2 for [-1,1] data
    double c2 = 0.0144;  // (0.03 * R)^2
    int window = 11;
    double sigma = 1.5;
};

namespace detail {

inline std::vector<double> ssim_kernel_1d(int win, double sigma) {
    std::vector<double> k(win);
    const int r = win / 2;
    double sum = 0.0;
    for (int i = 0; i < win; ++i) {
        const double d = i - r;
        k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Valid-mode separable Gaussian filter of one plane.
template <typename T>
void gauss_valid(const T* src, int h, int w, const std::vector<double>& k, std::vector<double>& tmp,
                 std::vector<double>& dst) {
    const int win = static_cast<int>(k.size());
    const int ow = w - win + 1, oh = h - win + 1;
    tmp.assign(static_cast<size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < win; ++i) acc += k[i] * src[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = acc;
        }
    dst.assign(static_cast<size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < win; ++i) acc += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
            dst[static_cast<size_t>(y) * ow + x] = acc;
        }
}

}  // namespace detail

// Shared forward/backward machinery. When dxhat is non-null, accumulates
// d(scale * loss)/dxhat.
template <typename T>
double ssim_loss_impl(const Tensor<T>& x, const Tensor<T>& xhat, const SsimConstants& cs,
                      double scale, Tensor<T>* dxhat) {
    if (!x.same_shape(xhat)) throw std::invalid_argument("loss_ssim: shape mismatch");
    const int win = cs.window;
    if (x.h < win || x.w < win)
        throw std::invalid_argument("loss_ssim: image smaller than the SSIM window");
    const auto k1 = detail::ssim_kernel_1d(win, cs.sigma);
    const int oh = x.h - win + 1, ow = x.w - win + 1;
    const double n_windows = static_cast<double>(x.n) * x.c * oh * ow;

    // 2-D window weights for the backward scatter
    std::vector<double> k2(static_cast<size_t>(win) * win);
    for (int a = 0; a < win; ++a)
        for (int b = 0; b < win; ++b) k2[static_cast<size_t>(a) * win + b] = k1[a] * k1[b];

    std::vector<double> tmp, mx, my, mxx, myy, mxy;
    std::vector<double> plane_a(static_cast<size_t>(x.h) * x.w), plane_b(plane_a.size()),
        plane_ab(plane_a.size());

    double ssim_sum = 0.0;
    for (int s = 0; s < x.n; ++s) {
        for (int ch = 0; ch < x.c; ++ch) {
            const T* pa = x.sample(s) + static_cast<size_t>(ch) * x.plane_size();
            const T* pb = xhat.sample(s) + static_cast<size_t>(ch) * x.plane_size();
            for (size_t i = 0; i < plane_a.size(); ++i) {
                plane_a[i] = pa[i];
                plane_b[i] = pb[i];
                plane_ab[i] = plane_a[i] * plane_b[i];
            }
            detail::gauss_valid(plane_a.data(), x.h, x.w, k1, tmp, mx);
            detail::gauss_valid(plane_b.data(), x.h, x.w, k1, tmp, my);
            std::vector<double> sq(plane_a.size());
            for (size_t i = 0; i < sq.size(); ++i) sq[i] = plane_a[i] * plane_a[i];
            detail::gauss_valid(sq.data(), x.h, x.w, k1, tmp, mxx);
            for (size_t i = 0; i < sq.size(); ++i) sq[i] = plane_b[i] * plane_b[i];
            detail::gauss_valid(sq.data(), x.h, x.w, k1, tmp, myy);
            detail::gauss_valid(plane_ab.data(), x.h, x.w, k1, tmp, mxy);

            T* pd = dxhat ? dxhat->sample(s) + static_cast<size_t>(ch) * x.plane_size() : nullptr;
            for (int wy = 0; wy < oh; ++wy) {
                for (int wx = 0; wx < ow; ++wx) {
                    const size_t wi = static_cast<size_t>(wy) * ow + wx;
                    const double ux = mx[wi], uy = my[wi];
                    const double vx = mxx[wi] - ux * ux;
                    const double vy = myy[wi] - uy * uy;
                    const double cxy = mxy[wi] - ux * uy;
                    const double a1 = 2.0 * ux * uy + cs.c1;
                    const double a2 = 2.0 * cxy + cs.c2;
                    const double b1 = ux * ux + uy * uy + cs.c1;
                    const double b2 = vx + vy + cs.c2;
                    const double S = (a1 * a2) / (b1 * b2);
                    ssim_sum += S;
                    if (!pd) continue;

                    // d(scale*(1-meanS))/dxhat via the window statistics
                    const double dS = -scale / n_windows;
                    const double dS_duy = 2.0 * (ux * a2 * b1 - uy * a1 * a2) / (b1 * b1 * b2);
                    const double dS_dvy = -a1 * a2 / (b1 * b2 * b2);
                    const double dS_dcxy = 2.0 * a1 / (b1 * b2);
                    const double c_mu = dS * (dS_duy - 2.0 * dS_dvy * uy - dS_dcxy * ux);
                    const double c_y = dS * 2.0 * dS_dvy;
                    const double c_x = dS * dS_dcxy;
                    for (int a = 0; a < win; ++a) {
                        const size_t row = static_cast<size_t>(wy + a) * x.w + wx;
                        const double* kk = &k2[static_cast<size_t>(a) * win];
                        for (int b = 0; b < win; ++b) {
                            const size_t q = row + b;
                            pd[q] += static_cast<T>(kk[b] * (c_mu + c_y * plane_b[q] + c_x * plane_a[q]));
                        }
                    }
                }
            }
        }
    }
    return 1.0 - ssim_sum / n_windows;
}

template <typename T>
double loss_ssim(const Tensor<T>& x, const Tensor<T>& xhat, double c1, double c2) {
    if (c1 <= 0.0 || c2 <= 0.0) throw std::invalid_argument("loss_ssim: c1, c2 must be > 0");
    SsimConstants cs;
    cs.c1 = c1;
    cs.c2 = c2;
    return ssim_loss_impl(x, xhat, cs, 0.0, static_cast<Tensor<T>*>(nullptr));
}

template <typename T>
double loss_ssim_backward(const Tensor<T>& x, const Tensor<T>& xhat, const SsimConstants& cs,
                          double scale, Tensor<T>& dxhat) {
    return ssim_loss_impl(x, xhat, cs, scale, &dxhat);
}

}  // namespace plateinspect::nn
