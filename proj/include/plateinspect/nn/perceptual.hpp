#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "plateinspect/nn/layers.hpp"
#include "plateinspect/nn/tensor.hpp"

namespace plateinspect::nn {

// Fixed VGG19-style feature extractor: 16 conv layers (3x3, stride 1, pad 1,
// ReLU) in blocks of 2/2/4/4/4 with 2x2 max pooling after the first four
// blocks; the fifth pooling stage is omitted. Loss taps sit after each
// pooling stage (L = 4), so the fifth conv block never contributes to the
// loss and forward evaluation stops at the last tap. Weights are frozen.
template <typename T>
struct PerceptualNet {
    static constexpr std::array<int, 5> kBlockSizes{2, 2, 4, 4, 4};
    static constexpr std::array<int, 5> kBlockChannels{64, 128, 256, 512, 512};
    static constexpr int kTaps = 4;

    std::vector<Conv2d<T>> convs;  // 16 layers

    static PerceptualNet make_arch() {
        PerceptualNet net;
        int in_c = 3;
        for (size_t blk = 0; blk < kBlockSizes.size(); ++blk) {
            for (int i = 0; i < kBlockSizes[blk]; ++i) {
                net.convs.emplace_back(in_c, kBlockChannels[blk], 3, 1, 1);
                in_c = kBlockChannels[blk];
            }
        }
        return net;
    }

    // Seeded orthogonal feature fallback used when no pretrained container is
    // supplied; the weights are fixed after construction.
    static PerceptualNet random_features(uint64_t seed) {
        PerceptualNet net = make_arch();
        Rng rng(seed);
        for (auto& conv : net.convs) {
            const int rows = conv.out_c;
            const int cols = conv.in_c * conv.k * conv.k;
            const int big = std::max(rows, cols), small = std::min(rows, cols);
            MatCM<double> M(big, small);
            for (int j = 0; j < small; ++j)
                for (int i = 0; i < big; ++i) M(i, j) = rng.normal();
            Eigen::HouseholderQR<MatCM<double>> qr(M);
            MatCM<double> Q = qr.householderQ() * MatCM<double>::Identity(big, small);
            const double gain = std::sqrt(2.0);
            for (int oc = 0; oc < rows; ++oc)
                for (int kk = 0; kk < cols; ++kk) {
                    const double v = rows <= cols ? Q(kk, oc) : Q(oc, kk);
                    conv.w[static_cast<size_t>(oc) * cols + kk] = static_cast<T>(gain * v);
                }
            std::fill(conv.b.begin(), conv.b.end(), T(0));
        }
        return net;
    }

    int convs_until_last_tap() const {
        int n = 0;
        for (int blk = 0; blk < kTaps; ++blk) n += kBlockSizes[blk];
        return n;  // 12
    }

    struct Cache {
        std::vector<Tensor<T>> relu_out;          // per evaluated conv
        std::vector<std::vector<int>> pool_argmax;  // per pool stage
        std::vector<std::pair<int, int>> pool_in_hw;
    };

    // Tap activations (after each pooling stage). The cache, when given,
    // holds what backward_data needs.
    std::vector<Tensor<T>> forward_taps(const Tensor<T>& x, Cache* cache) const {
        std::vector<Tensor<T>> taps;
        Tensor<T> cur = x;
        int conv_idx = 0;
        for (int blk = 0; blk < kTaps; ++blk) {
            for (int i = 0; i < kBlockSizes[blk]; ++i, ++conv_idx) {
                Tensor<T> y = relu_forward(convs[conv_idx].forward(cur));
                if (cache) cache->relu_out.push_back(y);
                cur = std::move(y);
            }
            std::vector<int> argmax;
            if (cache) cache->pool_in_hw.emplace_back(cur.h, cur.w);
            Tensor<T> pooled = maxpool2x2_forward(cur, cache ? &argmax : nullptr);
            if (cache) cache->pool_argmax.push_back(std::move(argmax));
            taps.push_back(pooled);
            cur = std::move(pooled);
        }
        return taps;
    }

    // Propagates tap gradients back to the input; weights stay frozen.
    Tensor<T> backward_data(const Cache& cache, const std::vector<Tensor<T>>& dtaps) const {
        Tensor<T> grad;  // gradient flowing backward from the deepest tap
        int conv_idx = convs_until_last_tap();
        for (int blk = kTaps - 1; blk >= 0; --blk) {
            Tensor<T> d = dtaps[blk];
            if (grad.size() > 0)
                for (size_t i = 0; i < d.size(); ++i) d.v[i] += grad.v[i];
            Tensor<T> dcur = maxpool2x2_backward(d, cache.pool_argmax[blk],
                                                 cache.pool_in_hw[blk].first,
                                                 cache.pool_in_hw[blk].second);
            for (int i = kBlockSizes[blk] - 1; i >= 0; --i) {
                --conv_idx;
                dcur = relu_backward(cache.relu_out[conv_idx], dcur);
                // 3x3 stride-1 pad-1 convs preserve spatial dims
                dcur = convs[conv_idx].backward_data(dcur, dcur.h, dcur.w);
            }
            grad = std::move(dcur);
        }
        return grad;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        for (size_t i = 0; i < convs.size(); ++i)
            convs[i].visit(prefix + ".conv" + std::to_string(i), fn);
    }
};

// Eq.-6-style feature loss: mean over taps of per-feature MSE, averaged over
// the batch. When dxhat is non-null, accumulates d(scale*loss)/dxhat.
// Evaluates in chunks to bound activation memory.
template <typename T>
double loss_perceptual_impl(const Tensor<T>& x, const Tensor<T>& xhat, const PerceptualNet<T>& net,
                            double scale, Tensor<T>* dxhat, int chunk = 8) {
    if (!x.same_shape(xhat)) throw std::invalid_argument("loss_perceptual: shape mismatch");
    double total = 0.0;
    for (int s0 = 0; s0 < x.n; s0 += chunk) {
        const int cn = std::min(chunk, x.n - s0);
        Tensor<T> xc(cn, x.c, x.h, x.w), yc(cn, x.c, x.h, x.w);
        std::copy_n(x.sample(s0), xc.size(), xc.v.data());
        std::copy_n(xhat.sample(s0), yc.size(), yc.v.data());

        const auto taps_x = net.forward_taps(xc, nullptr);
        typename PerceptualNet<T>::Cache cache;
        const auto taps_y = net.forward_taps(yc, dxhat ? &cache : nullptr);

        std::vector<Tensor<T>> dtaps;
        for (int l = 0; l < PerceptualNet<T>::kTaps; ++l) {
            const auto& tx = taps_x[l];
            const auto& ty = taps_y[l];
            const double n_l = static_cast<double>(tx.sample_size());
            double sq = 0.0;
            for (size_t i = 0; i < tx.size(); ++i) {
                const double d = static_cast<double>(ty.v[i]) - tx.v[i];
                sq += d * d;
            }
            total += sq / (n_l * PerceptualNet<T>::kTaps * x.n);
            if (dxhat) {
                Tensor<T> dt(ty.n, ty.c, ty.h, ty.w);
                const double c = 2.0 * scale / (n_l * PerceptualNet<T>::kTaps * x.n);
                for (size_t i = 0; i < tx.size(); ++i)
                    dt.v[i] = static_cast<T>(c * (static_cast<double>(ty.v[i]) - tx.v[i]));
                dtaps.push_back(std::move(dt));
            }
        }
        if (dxhat) {
            Tensor<T> dchunk = net.backward_data(cache, dtaps);
            for (size_t i = 0; i < dchunk.size(); ++i)
                dxhat->v[static_cast<size_t>(s0) * x.sample_size() + i] += dchunk.v[i];
        }
    }
    return total;
}

template <typename T>
double loss_perceptual(const Tensor<T>& x, const Tensor<T>& xhat, const PerceptualNet<T>& net) {
    return loss_perceptual_impl(x, xhat, net, 0.0, static_cast<Tensor<T>*>(nullptr));
}

}  // namespace plateinspect::nn
