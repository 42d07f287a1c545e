#pragma once

#include <string>
#include <vector>

#include "plateinspect/nn/layers.hpp"
#include "plateinspect/nn/losses.hpp"
#include "plateinspect/nn/tensor.hpp"

namespace plateinspect::nn {

// Channel ladder and latent width. The production model is
// {16,32,64,128,256}/256 on 64x64 input; tests use a shrunken ladder.
struct ResVaeArch {
    int input_size = 64;
    std::vector<int> channels = {16, 32, 64, 128, 256};
    int latent = 256;

    int final_spatial() const {
        return input_size >> (static_cast<int>(channels.size()) - 1);
    }
};

inline constexpr double kLogvarClampLo = -30.0;
inline constexpr double kLogvarClampHi = 20.0;

// Residual VAE: initial 7x7 conv, ResDown blocks (stride-2 conv1 + conv2 with
// a stride-2 3x3 projection skip, bn1+ELU after conv1, bn2+ELU after the
// addition), two parallel convs to mu/logvar, transposed-conv latent
// upsampling, mirrored ResUp blocks (nearest-neighbor x2 + convs + 3x3
// projection skip) and a tanh output conv.
template <typename T>
struct ResVaeNet {
    ResVaeArch arch;

    struct DownBlock {
        Conv2d<T> conv1, conv2, skip;
        BatchNorm2d<T> bn1, bn2;
    };
    struct UpBlock {
        Conv2d<T> conv1, conv2, skip;
        BatchNorm2d<T> bn1, bn2;
    };

    Conv2d<T> init_conv;
    std::vector<DownBlock> downs;
    Conv2d<T> mu_conv, logvar_conv;
    ConvTranspose2d<T> tconv;
    std::vector<UpBlock> ups;
    Conv2d<T> out_conv;

    static ResVaeNet make(const ResVaeArch& arch, uint64_t seed) {
        if (arch.channels.size() < 2)
            throw std::invalid_argument("ResVaeNet: need at least two channel stages");
        if (arch.final_spatial() < 1)
            throw std::invalid_argument("ResVaeNet: channel ladder too deep for input size");
        ResVaeNet net;
        net.arch = arch;
        const auto& ch = arch.channels;
        const int fs = arch.final_spatial();

        net.init_conv = Conv2d<T>(3, ch[0], 7, 1, 3);
        for (size_t i = 0; i + 1 < ch.size(); ++i) {
            DownBlock d;
            d.conv1 = Conv2d<T>(ch[i], ch[i + 1], 3, 2, 1);
            d.conv2 = Conv2d<T>(ch[i + 1], ch[i + 1], 3, 1, 1);
            d.skip = Conv2d<T>(ch[i], ch[i + 1], 3, 2, 1);
            d.bn1 = BatchNorm2d<T>(ch[i + 1]);
            d.bn2 = BatchNorm2d<T>(ch[i + 1]);
            net.downs.push_back(std::move(d));
        }
        net.mu_conv = Conv2d<T>(ch.back(), arch.latent, fs, 1, 0);
        net.logvar_conv = Conv2d<T>(ch.back(), arch.latent, fs, 1, 0);
        net.tconv = ConvTranspose2d<T>(arch.latent, ch.back(), fs);
        for (size_t i = ch.size() - 1; i > 0; --i) {
            UpBlock u;
            u.conv1 = Conv2d<T>(ch[i], ch[i - 1], 3, 1, 1);
            u.conv2 = Conv2d<T>(ch[i - 1], ch[i - 1], 3, 1, 1);
            u.skip = Conv2d<T>(ch[i], ch[i - 1], 3, 1, 1);
            u.bn1 = BatchNorm2d<T>(ch[i - 1]);
            u.bn2 = BatchNorm2d<T>(ch[i - 1]);
            net.ups.push_back(std::move(u));
        }
        net.out_conv = Conv2d<T>(ch[0], 3, 3, 1, 1);

        Rng rng(seed);
        net.init_conv.init_he(rng);
        for (auto& d : net.downs) {
            d.conv1.init_he(rng);
            d.conv2.init_he(rng);
            d.skip.init_he(rng);
        }
        net.mu_conv.init_he(rng);
        net.logvar_conv.init_he(rng);
        net.tconv.init_he(rng);
        for (auto& u : net.ups) {
            u.conv1.init_he(rng);
            u.conv2.init_he(rng);
            u.skip.init_he(rng);
        }
        net.out_conv.init_he(rng);
        return net;
    }

    void check_input(const Tensor<T>& x) const {
        if (x.c != 3 || x.h != arch.input_size || x.w != arch.input_size)
            throw std::invalid_argument("ResVaeNet: expected n x 3 x " +
                                        std::to_string(arch.input_size) + " x " +
                                        std::to_string(arch.input_size) + " input");
        x.require_finite("ResVaeNet input");
    }

    // ------------------------------ inference ------------------------------

    LatentParams<T> encode(const Tensor<T>& x) {
        check_input(x);
        Tensor<T> a = init_conv.forward(x);
        for (auto& d : downs) {
            Tensor<T> c1 = d.conv1.forward(a);
            Tensor<T> e1 = elu_forward(d.bn1.forward(c1, false));
            Tensor<T> c2 = d.conv2.forward(e1);
            Tensor<T> sk = d.skip.forward(a);
            for (size_t i = 0; i < c2.size(); ++i) c2.v[i] += sk.v[i];
            a = elu_forward(d.bn2.forward(c2, false));
        }
        const Tensor<T> mu_t = mu_conv.forward(a);
        const Tensor<T> lv_t = logvar_conv.forward(a);
        LatentParams<T> lp(x.n, arch.latent);
        for (size_t i = 0; i < lp.mu.size(); ++i) {
            lp.mu[i] = mu_t.v[i];
            lp.logvar[i] = static_cast<T>(
                std::clamp(static_cast<double>(lv_t.v[i]), kLogvarClampLo, kLogvarClampHi));
        }
        return lp;
    }

    Tensor<T> decode(const std::vector<T>& z, int n) {
        if (z.size() != static_cast<size_t>(n) * arch.latent)
            throw std::invalid_argument("ResVaeNet::decode: bad z size");
        for (const T& v : z)
            if (!std::isfinite(static_cast<double>(v)))
                throw std::invalid_argument("ResVaeNet::decode: non-finite z");
        Tensor<T> zt(n, arch.latent, 1, 1);
        zt.v.assign(z.begin(), z.end());
        Tensor<T> a = tconv.forward(zt);
        for (auto& u : ups) {
            Tensor<T> up = upsample2x_forward(a);
            Tensor<T> c1 = u.conv1.forward(up);
            Tensor<T> e1 = elu_forward(u.bn1.forward(c1, false));
            Tensor<T> c2 = u.conv2.forward(e1);
            Tensor<T> sk = u.skip.forward(up);
            for (size_t i = 0; i < c2.size(); ++i) c2.v[i] += sk.v[i];
            a = elu_forward(u.bn2.forward(c2, false));
        }
        return tanh_forward(out_conv.forward(a));
    }

    // Inference reconstruction at z = mu (deterministic anomaly scores).
    Tensor<T> reconstruct(const Tensor<T>& x) {
        LatentParams<T> lp = encode(x);
        return decode(lp.mu, x.n);
    }

    // ------------------------------ training -------------------------------

    struct TrainCache {
        Tensor<T> x;
        Tensor<T> enc_in0;                      // init_conv output
        std::vector<Tensor<T>> down_in, down_e1, down_out;
        Tensor<T> enc_feat;                     // encoder output feature map
        LatentParams<T> lp;
        Tensor<T> lv_raw;                       // pre-clamp logvar (clamp mask)
        std::vector<T> eps, z;
        Tensor<T> zt;
        Tensor<T> dec_in0;                      // tconv output
        std::vector<Tensor<T>> up_in, up_up, up_e1, up_out;
        Tensor<T> preact_out;                   // out_conv output (pre-tanh)
        Tensor<T> xhat;
    };

    void forward_train(const Tensor<T>& x, const std::vector<T>& eps, TrainCache& tc) {
        check_input(x);
        tc = TrainCache();
        tc.x = x;
        tc.eps = eps;

        tc.enc_in0 = init_conv.forward(x);
        Tensor<T> a = tc.enc_in0;
        for (auto& d : downs) {
            tc.down_in.push_back(a);
            Tensor<T> c1 = d.conv1.forward(a);
            Tensor<T> e1 = elu_forward(d.bn1.forward(c1, true));
            tc.down_e1.push_back(e1);
            Tensor<T> c2 = d.conv2.forward(e1);
            Tensor<T> sk = d.skip.forward(a);
            for (size_t i = 0; i < c2.size(); ++i) c2.v[i] += sk.v[i];
            a = elu_forward(d.bn2.forward(c2, true));
            tc.down_out.push_back(a);
        }
        tc.enc_feat = a;
        const Tensor<T> mu_t = mu_conv.forward(a);
        tc.lv_raw = logvar_conv.forward(a);
        tc.lp = LatentParams<T>(x.n, arch.latent);
        for (size_t i = 0; i < tc.lp.mu.size(); ++i) {
            tc.lp.mu[i] = mu_t.v[i];
            tc.lp.logvar[i] = static_cast<T>(
                std::clamp(static_cast<double>(tc.lv_raw.v[i]), kLogvarClampLo, kLogvarClampHi));
        }
        tc.z = nn::reparameterize(tc.lp, eps);

        tc.zt = Tensor<T>(x.n, arch.latent, 1, 1);
        tc.zt.v.assign(tc.z.begin(), tc.z.end());
        tc.dec_in0 = tconv.forward(tc.zt);
        Tensor<T> b = tc.dec_in0;
        for (auto& u : ups) {
            tc.up_in.push_back(b);
            Tensor<T> up = upsample2x_forward(b);
            tc.up_up.push_back(up);
            Tensor<T> c1 = u.conv1.forward(up);
            Tensor<T> e1 = elu_forward(u.bn1.forward(c1, true));
            tc.up_e1.push_back(e1);
            Tensor<T> c2 = u.conv2.forward(e1);
            Tensor<T> sk = u.skip.forward(up);
            for (size_t i = 0; i < c2.size(); ++i) c2.v[i] += sk.v[i];
            b = elu_forward(u.bn2.forward(c2, true));
            tc.up_out.push_back(b);
        }
        tc.preact_out = out_conv.forward(b);
        tc.xhat = tanh_forward(tc.preact_out);
    }

    // dxhat: gradient wrt the reconstruction; dmu/dlogvar: direct latent
    // gradients (the KL term). Parameter gradients accumulate into the layers.
    void backward_train(TrainCache& tc, const Tensor<T>& dxhat, const std::vector<T>& dmu_extra,
                        const std::vector<T>& dlogvar_extra) {
        // output stage
        Tensor<T> d = tanh_backward(tc.xhat, dxhat);
        d = out_conv.backward(tc.up_out.back(), d);

        for (int i = static_cast<int>(ups.size()) - 1; i >= 0; --i) {
            auto& u = ups[i];
            Tensor<T> d_b2 = elu_backward(tc.up_out[i], d);
            Tensor<T> d_add = u.bn2.backward(d_b2);
            Tensor<T> d_e1 = u.conv2.backward(tc.up_e1[i], d_add);
            Tensor<T> d_b1 = elu_backward(tc.up_e1[i], d_e1);
            Tensor<T> d_c1 = u.bn1.backward(d_b1);
            Tensor<T> d_up = u.conv1.backward(tc.up_up[i], d_c1);
            Tensor<T> d_sk = u.skip.backward(tc.up_up[i], d_add);
            for (size_t j = 0; j < d_up.size(); ++j) d_up.v[j] += d_sk.v[j];
            d = upsample2x_backward(d_up);
        }
        Tensor<T> d_z = tconv.backward(tc.zt, d);

        // latent: z = mu + eps * exp(0.5 logvar)
        std::vector<T> dmu(tc.lp.mu.size()), dlogvar(tc.lp.mu.size());
        for (size_t i = 0; i < dmu.size(); ++i) {
            dmu[i] = d_z.v[i] + dmu_extra[i];
            const double sigma = std::exp(0.5 * static_cast<double>(tc.lp.logvar[i]));
            dlogvar[i] = static_cast<T>(d_z.v[i] * tc.eps[i] * T(0.5) * static_cast<T>(sigma)) +
                         dlogvar_extra[i];
            // clamp gate
            const double raw = tc.lv_raw.v[i];
            if (raw <= kLogvarClampLo || raw >= kLogvarClampHi) dlogvar[i] = T(0);
        }
        Tensor<T> dmu_t(tc.x.n, arch.latent, 1, 1);
        dmu_t.v.assign(dmu.begin(), dmu.end());
        Tensor<T> dlv_t(tc.x.n, arch.latent, 1, 1);
        dlv_t.v.assign(dlogvar.begin(), dlogvar.end());

        Tensor<T> d_feat = mu_conv.backward(tc.enc_feat, dmu_t);
        Tensor<T> d_feat2 = logvar_conv.backward(tc.enc_feat, dlv_t);
        for (size_t i = 0; i < d_feat.size(); ++i) d_feat.v[i] += d_feat2.v[i];

        Tensor<T> de = d_feat;
        for (int i = static_cast<int>(downs.size()) - 1; i >= 0; --i) {
            auto& dn = downs[i];
            Tensor<T> d_b2 = elu_backward(tc.down_out[i], de);
            Tensor<T> d_add = dn.bn2.backward(d_b2);
            Tensor<T> d_e1 = dn.conv2.backward(tc.down_e1[i], d_add);
            Tensor<T> d_b1 = elu_backward(tc.down_e1[i], d_e1);
            Tensor<T> d_c1 = dn.bn1.backward(d_b1);
            Tensor<T> d_in = dn.conv1.backward(tc.down_in[i], d_c1);
            Tensor<T> d_sk = dn.skip.backward(tc.down_in[i], d_add);
            for (size_t j = 0; j < d_in.size(); ++j) d_in.v[j] += d_sk.v[j];
            de = std::move(d_in);
        }
        init_conv.backward(tc.x, de);
    }

    // ------------------------------ plumbing -------------------------------

    void visit_params(const ParamVisitor<T>& fn) {
        init_conv.visit("resvae.init_conv", fn);
        for (size_t i = 0; i < downs.size(); ++i) {
            const std::string p = "resvae.down" + std::to_string(i);
            downs[i].conv1.visit(p + ".conv1", fn);
            downs[i].conv2.visit(p + ".conv2", fn);
            downs[i].skip.visit(p + ".skip", fn);
            downs[i].bn1.visit(p + ".bn1", fn);
            downs[i].bn2.visit(p + ".bn2", fn);
        }
        mu_conv.visit("resvae.mu_conv", fn);
        logvar_conv.visit("resvae.logvar_conv", fn);
        tconv.visit("resvae.tconv", fn);
        for (size_t i = 0; i < ups.size(); ++i) {
            const std::string p = "resvae.up" + std::to_string(i);
            ups[i].conv1.visit(p + ".conv1", fn);
            ups[i].conv2.visit(p + ".conv2", fn);
            ups[i].skip.visit(p + ".skip", fn);
            ups[i].bn1.visit(p + ".bn1", fn);
            ups[i].bn2.visit(p + ".bn2", fn);
        }
        out_conv.visit("resvae.out_conv", fn);
    }

    // Non-trained state (batch-norm running statistics).
    void visit_buffers(const std::function<void(const std::string&, std::vector<T>&)>& fn) {
        for (size_t i = 0; i < downs.size(); ++i) {
            const std::string p = "resvae.down" + std::to_string(i);
            fn(p + ".bn1.running_mean", downs[i].bn1.running_mean);
            fn(p + ".bn1.running_var", downs[i].bn1.running_var);
            fn(p + ".bn2.running_mean", downs[i].bn2.running_mean);
            fn(p + ".bn2.running_var", downs[i].bn2.running_var);
        }
        for (size_t i = 0; i < ups.size(); ++i) {
            const std::string p = "resvae.up" + std::to_string(i);
            fn(p + ".bn1.running_mean", ups[i].bn1.running_mean);
            fn(p + ".bn1.running_var", ups[i].bn1.running_var);
            fn(p + ".bn2.running_mean", ups[i].bn2.running_mean);
            fn(p + ".bn2.running_var", ups[i].bn2.running_var);
        }
    }

    void zero_grad() {
        visit_params([](const std::string&, std::vector<T>& p, std::vector<T>& g) {
            (void)p;
            std::fill(g.begin(), g.end(), T(0));
        });
    }
};

}  // namespace plateinspect::nn
