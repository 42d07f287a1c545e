#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "plateinspect/common.hpp"
#include "plateinspect/nn/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace plateinspect::nn {

// Worker count for the batch-parallel loops. Gradient accumulation is
// per-thread with a fixed reduction order, so results are identical for any
// fixed thread count.
int thread_count();
void set_thread_count(int n);

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// Parameter visitor: name, values, gradient (same length).
template <typename T>
using ParamVisitor = std::function<void(const std::string&, std::vector<T>&, std::vector<T>&)>;

// ---------------------------------------------------------------------------
// Conv2d: im2col + GEMM, batch-parallel over samples
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2d {
    int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;
    std::vector<T> w;   // [out_c][in_c][k][k]
    std::vector<T> b;   // [out_c]
    std::vector<T> dw, db;

    Conv2d() = default;
    Conv2d(int ic, int oc, int kk, int s, int p) : in_c(ic), out_c(oc), k(kk), stride(s), pad(p) {
        w.assign(static_cast<size_t>(oc) * ic * kk * kk, T(0));
        b.assign(oc, T(0));
        dw.assign(w.size(), T(0));
        db.assign(b.size(), T(0));
    }

    void init_he(Rng& rng) {
        const double std = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
        for (auto& x : w) x = static_cast<T>(rng.normal() * std);
        std::fill(b.begin(), b.end(), T(0));
    }

    int out_h(int hin) const { return (hin + 2 * pad - k) / stride + 1; }
    int out_w(int win) const { return (win + 2 * pad - k) / stride + 1; }

    void im2col(const T* x, int hin, int win, T* cols) const {
        const int oh = out_h(hin), ow = out_w(win);
        const int K = in_c * k * k;
        // cols is K x (oh*ow), column-major by output position
        for (int p = 0; p < oh * ow; ++p) {
            const int oy = p / ow, ox = p % ow;
            T* col = cols + static_cast<size_t>(p) * K;
            int idx = 0;
            for (int ci = 0; ci < in_c; ++ci) {
                const T* plane = x + static_cast<size_t>(ci) * hin * win;
                for (int ky = 0; ky < k; ++ky) {
                    const int y = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int xx = ox * stride - pad + kx;
                        col[idx++] = (y < 0 || y >= hin || xx < 0 || xx >= win)
                                         ? T(0)
                                         : plane[static_cast<size_t>(y) * win + xx];
                    }
                }
            }
        }
    }

    void col2im(const T* cols, int hin, int win, T* x) const {
        const int oh = out_h(hin), ow = out_w(win);
        const int K = in_c * k * k;
        for (int p = 0; p < oh * ow; ++p) {
            const int oy = p / ow, ox = p % ow;
            const T* col = cols + static_cast<size_t>(p) * K;
            int idx = 0;
            for (int ci = 0; ci < in_c; ++ci) {
                T* plane = x + static_cast<size_t>(ci) * hin * win;
                for (int ky = 0; ky < k; ++ky) {
                    const int y = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int xx = ox * stride - pad + kx;
                        if (y >= 0 && y < hin && xx >= 0 && xx < win)
                            plane[static_cast<size_t>(y) * win + xx] += col[idx];
                        ++idx;
                    }
                }
            }
        }
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const int oh = out_h(x.h), ow = out_w(x.w);
        Tensor<T> y(x.n, out_c, oh, ow);
        const int K = in_c * k * k, P = oh * ow;
        const Eigen::Map<const MatRM<T>> W(w.data(), out_c, K);
        const int nt = thread_count();
        std::vector<std::vector<T>> cols_buf(nt, std::vector<T>(static_cast<size_t>(K) * P));
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int s = 0; s < x.n; ++s) {
#ifdef _OPENMP
            T* cols = cols_buf[omp_get_thread_num()].data();
#else
            T* cols = cols_buf[0].data();
#endif
            im2col(x.sample(s), x.h, x.w, cols);
            Eigen::Map<const MatCM<T>> C(cols, K, P);
            Eigen::Map<MatRM<T>> Y(y.sample(s), out_c, P);
            Y.noalias() = W * C;
            for (int oc = 0; oc < out_c; ++oc) Y.row(oc).array() += b[oc];
        }
        return y;
    }

    // Accumulates dw/db; returns dx.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
        const int oh = dy.h, ow = dy.w;
        const int K = in_c * k * k, P = oh * ow;
        Tensor<T> dx(x.n, x.c, x.h, x.w);
        const Eigen::Map<const MatRM<T>> W(w.data(), out_c, K);
        const int nt = thread_count();
        std::vector<std::vector<T>> cols_buf(nt, std::vector<T>(static_cast<size_t>(K) * P));
        std::vector<std::vector<T>> dcols_buf(nt, std::vector<T>(static_cast<size_t>(K) * P));
        std::vector<std::vector<T>> dw_acc(nt, std::vector<T>(w.size(), T(0)));
        std::vector<std::vector<T>> db_acc(nt, std::vector<T>(b.size(), T(0)));
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int s = 0; s < x.n; ++s) {
#ifdef _OPENMP
            const int tid = omp_get_thread_num();
#else
            const int tid = 0;
#endif
            T* cols = cols_buf[tid].data();
            T* dcols = dcols_buf[tid].data();
            im2col(x.sample(s), x.h, x.w, cols);
            Eigen::Map<const MatCM<T>> C(cols, K, P);
            Eigen::Map<const MatRM<T>> DY(dy.sample(s), out_c, P);
            Eigen::Map<MatRM<T>> DWacc(dw_acc[tid].data(), out_c, K);
            DWacc.noalias() += DY * C.transpose();
            for (int oc = 0; oc < out_c; ++oc) db_acc[tid][oc] += DY.row(oc).sum();
            Eigen::Map<MatCM<T>> DC(dcols, K, P);
            DC.noalias() = W.transpose() * DY;
            col2im(dcols, x.h, x.w, dx.sample(s));
        }
        for (int t = 0; t < nt; ++t) {
            for (size_t i = 0; i < w.size(); ++i) dw[i] += dw_acc[t][i];
            for (size_t i = 0; i < b.size(); ++i) db[i] += db_acc[t][i];
        }
        return dx;
    }

    // dx only, for frozen-weight backprop (perceptual net).
    Tensor<T> backward_data(const Tensor<T>& dy, int in_h, int in_w) const {
        const int oh = dy.h, ow = dy.w;
        const int K = in_c * k * k, P = oh * ow;
        Tensor<T> dx(dy.n, in_c, in_h, in_w);
        const Eigen::Map<const MatRM<T>> W(w.data(), out_c, K);
        const int nt = thread_count();
        std::vector<std::vector<T>> dcols_buf(nt, std::vector<T>(static_cast<size_t>(K) * P));
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int s = 0; s < dy.n; ++s) {
#ifdef _OPENMP
            T* dcols = dcols_buf[omp_get_thread_num()].data();
#else
            T* dcols = dcols_buf[0].data();
#endif
            Eigen::Map<const MatRM<T>> DY(dy.sample(s), out_c, P);
            Eigen::Map<MatCM<T>> DC(dcols, K, P);
            DC.noalias() = W.transpose() * DY;
            col2im(dcols, in_h, in_w, dx.sample(s));
        }
        return dx;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".weight", w, dw);
        fn(prefix + ".bias", b, db);
    }
};

// ---------------------------------------------------------------------------
// ConvTranspose2d specialized for 1x1 -> kxk upsampling of the latent
// ---------------------------------------------------------------------------

template <typename T>
struct ConvTranspose2d {
    int in_c = 0, out_c = 0, k = 4;
    std::vector<T> w;  // [in_c][out_c][k][k]
    std::vector<T> b;  // [out_c]
    std::vector<T> dw, db;

    ConvTranspose2d() = default;
    ConvTranspose2d(int ic, int oc, int kk) : in_c(ic), out_c(oc), k(kk) {
        w.assign(static_cast<size_t>(ic) * oc * kk * kk, T(0));
        b.assign(oc, T(0));
        dw.assign(w.size(), T(0));
        db.assign(b.size(), T(0));
    }

    void init_he(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(in_c));
        for (auto& x : w) x = static_cast<T>(rng.normal() * std);
        std::fill(b.begin(), b.end(), T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        if (x.h != 1 || x.w != 1)
            throw std::invalid_argument("ConvTranspose2d: expected 1x1 spatial input");
        Tensor<T> y(x.n, out_c, k, k);
        const int M = out_c * k * k;
        const Eigen::Map<const MatRM<T>> W(w.data(), in_c, M);
        Eigen::Map<const MatRM<T>> X(x.v.data(), x.n, in_c);
        Eigen::Map<MatRM<T>> Y(y.v.data(), x.n, M);
        Y.noalias() = X * W;
        for (int s = 0; s < x.n; ++s)
            for (int oc = 0; oc < out_c; ++oc)
                for (int p = 0; p < k * k; ++p) y.v[(static_cast<size_t>(s) * out_c + oc) * k * k + p] += b[oc];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
        const int M = out_c * k * k;
        Tensor<T> dx(x.n, x.c, 1, 1);
        const Eigen::Map<const MatRM<T>> W(w.data(), in_c, M);
        Eigen::Map<const MatRM<T>> X(x.v.data(), x.n, in_c);
        Eigen::Map<const MatRM<T>> DY(dy.v.data(), x.n, M);
        Eigen::Map<MatRM<T>> DX(dx.v.data(), x.n, in_c);
        Eigen::Map<MatRM<T>> DW(dw.data(), in_c, M);
        DX.noalias() = DY * W.transpose();
        DW.noalias() += X.transpose() * DY;
        for (int oc = 0; oc < out_c; ++oc) {
            T s = T(0);
            for (int i = 0; i < x.n; ++i)
                for (int p = 0; p < k * k; ++p) s += dy.v[(static_cast<size_t>(i) * out_c + oc) * k * k + p];
            db[oc] += s;
        }
        return dx;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".weight", w, dw);
        fn(prefix + ".bias", b, db);
    }
};

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNorm2d {
    int c = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    std::vector<T> gamma, beta, dgamma, dbeta;
    std::vector<T> running_mean, running_var;

    // saved batch statistics for backward
    std::vector<double> save_mean, save_invstd;
    Tensor<T> save_xhat;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int ch) : c(ch) {
        gamma.assign(ch, T(1));
        beta.assign(ch, T(0));
        dgamma.assign(ch, T(0));
        dbeta.assign(ch, T(0));
        running_mean.assign(ch, T(0));
        running_var.assign(ch, T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> y(x.n, x.c, x.h, x.w);
        const size_t plane = x.plane_size();
        const long cnt = static_cast<long>(x.n) * plane;
        if (training) {
            save_mean.assign(c, 0.0);
            save_invstd.assign(c, 0.0);
            save_xhat = Tensor<T>(x.n, x.c, x.h, x.w);
            for (int ch = 0; ch < c; ++ch) {
                double sum = 0.0, sum2 = 0.0;
                for (int s = 0; s < x.n; ++s) {
                    const T* p = x.sample(s) + ch * plane;
                    for (size_t i = 0; i < plane; ++i) {
                        sum += p[i];
                        sum2 += static_cast<double>(p[i]) * p[i];
                    }
                }
                const double mean = sum / cnt;
                const double var = std::max(0.0, sum2 / cnt - mean * mean);  // biased
                const double invstd = 1.0 / std::sqrt(var + eps);
                save_mean[ch] = mean;
                save_invstd[ch] = invstd;
                const double unbiased = cnt > 1 ? var * cnt / (cnt - 1) : var;
                running_mean[ch] = static_cast<T>((1 - momentum) * running_mean[ch] + momentum * mean);
                running_var[ch] = static_cast<T>((1 - momentum) * running_var[ch] + momentum * unbiased);
                for (int s = 0; s < x.n; ++s) {
                    const T* p = x.sample(s) + ch * plane;
                    T* xq = save_xhat.sample(s) + ch * plane;
                    T* q = y.sample(s) + ch * plane;
                    for (size_t i = 0; i < plane; ++i) {
                        const T xh = static_cast<T>((p[i] - mean) * invstd);
                        xq[i] = xh;
                        q[i] = gamma[ch] * xh + beta[ch];
                    }
                }
            }
        } else {
            for (int ch = 0; ch < c; ++ch) {
                const double mean = running_mean[ch];
                const double invstd = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps);
                for (int s = 0; s < x.n; ++s) {
                    const T* p = x.sample(s) + ch * plane;
                    T* q = y.sample(s) + ch * plane;
                    for (size_t i = 0; i < plane; ++i)
                        q[i] = static_cast<T>(gamma[ch] * (p[i] - mean) * invstd + beta[ch]);
                }
            }
        }
        return y;
    }

    // Training-mode backward using the saved batch statistics.
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
        const size_t plane = dy.plane_size();
        const double cnt = static_cast<double>(dy.n) * plane;
        for (int ch = 0; ch < c; ++ch) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int s = 0; s < dy.n; ++s) {
                const T* pdy = dy.sample(s) + ch * plane;
                const T* pxh = save_xhat.sample(s) + ch * plane;
                for (size_t i = 0; i < plane; ++i) {
                    sum_dy += pdy[i];
                    sum_dy_xhat += static_cast<double>(pdy[i]) * pxh[i];
                }
            }
            dbeta[ch] += static_cast<T>(sum_dy);
            dgamma[ch] += static_cast<T>(sum_dy_xhat);
            const double g = gamma[ch];
            const double invstd = save_invstd[ch];
            for (int s = 0; s < dy.n; ++s) {
                const T* pdy = dy.sample(s) + ch * plane;
                const T* pxh = save_xhat.sample(s) + ch * plane;
                T* pdx = dx.sample(s) + ch * plane;
                for (size_t i = 0; i < plane; ++i) {
                    const double t = cnt * pdy[i] - sum_dy - pxh[i] * sum_dy_xhat;
                    pdx[i] = static_cast<T>(g * invstd * t / cnt);
                }
            }
        }
        return dx;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".gamma", gamma, dgamma);
        fn(prefix + ".beta", beta, dbeta);
    }
};

// ---------------------------------------------------------------------------
// Activations and resampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> elu_forward(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (size_t i = 0; i < x.size(); ++i) {
        const T v = x.v[i];
        y.v[i] = v > T(0) ? v : static_cast<T>(std::expm1(static_cast<double>(v)));
    }
    return y;
}

// dx from the ELU *output* (monotone, so y<0 iff x<0); alpha = 1.
template <typename T>
Tensor<T> elu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    Tensor<T> dx(y.n, y.c, y.h, y.w);
    for (size_t i = 0; i < y.size(); ++i)
        dx.v[i] = y.v[i] > T(0) ? dy.v[i] : dy.v[i] * (y.v[i] + T(1));
    return dx;
}

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (size_t i = 0; i < x.size(); ++i) y.v[i] = static_cast<T>(std::tanh(static_cast<double>(x.v[i])));
    return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    Tensor<T> dx(y.n, y.c, y.h, y.w);
    for (size_t i = 0; i < y.size(); ++i) dx.v[i] = dy.v[i] * (T(1) - y.v[i] * y.v[i]);
    return dx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    Tensor<T> dx(y.n, y.c, y.h, y.w);
    for (size_t i = 0; i < y.size(); ++i) dx.v[i] = y.v[i] > T(0) ? dy.v[i] : T(0);
    return dx;
}

template <typename T>
Tensor<T> upsample2x_forward(const Tensor<T>& x) {
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int s = 0; s < x.n; ++s)
        for (int ch = 0; ch < x.c; ++ch)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx)
                    y.at(s, ch, yy, xx) = x.at(s, ch, yy / 2, xx / 2);
    return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int s = 0; s < dy.n; ++s)
        for (int ch = 0; ch < dy.c; ++ch)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx)
                    dx.at(s, ch, yy / 2, xx / 2) += dy.at(s, ch, yy, xx);
    return dx;
}

// 2x2 stride-2 max pool (the perceptual net's pooling stages).
template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& x, std::vector<int>* argmax = nullptr) {
    Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
    if (argmax) argmax->assign(y.size(), 0);
    size_t oi = 0;
    for (int s = 0; s < x.n; ++s)
        for (int ch = 0; ch < x.c; ++ch)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx, ++oi) {
                    T best = x.at(s, ch, yy * 2, xx * 2);
                    int bi = 0;
                    for (int d = 1; d < 4; ++d) {
                        const T v = x.at(s, ch, yy * 2 + (d >> 1), xx * 2 + (d & 1));
                        if (v > best) {
                            best = v;
                            bi = d;
                        }
                    }
                    y.v[oi] = best;
                    if (argmax) (*argmax)[oi] = bi;
                }
    return y;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& dy, const std::vector<int>& argmax, int in_h,
                              int in_w) {
    Tensor<T> dx(dy.n, dy.c, in_h, in_w);
    size_t oi = 0;
    for (int s = 0; s < dy.n; ++s)
        for (int ch = 0; ch < dy.c; ++ch)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx, ++oi) {
                    const int d = argmax[oi];
                    dx.at(s, ch, yy * 2 + (d >> 1), xx * 2 + (d & 1)) += dy.v[oi];
                }
    return dx;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<std::vector<double>> m, v;

    void step(std::vector<std::pair<std::vector<T>*, std::vector<T>*>>& params) {
        if (m.empty()) {
            m.resize(params.size());
            v.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m[i].assign(params[i].first->size(), 0.0);
                v[i].assign(params[i].first->size(), 0.0);
            }
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i].first;
            auto& g = *params[i].second;
            for (size_t j = 0; j < p.size(); ++j) {
                const double gj = g[j];
                m[i][j] = beta1 * m[i][j] + (1 - beta1) * gj;
                v[i][j] = beta2 * v[i][j] + (1 - beta2) * gj * gj;
                const double mh = m[i][j] / bc1;
                const double vh = v[i][j] / bc2;
                p[j] = static_cast<T>(p[j] - lr * mh / (std::sqrt(vh) + eps));
            }
        }
    }
};

}  // namespace plateinspect::nn
