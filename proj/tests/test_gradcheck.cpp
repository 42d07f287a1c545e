#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "plateinspect/common.hpp"
#include "plateinspect/nn/perceptual.hpp"
#include "plateinspect/nn/resvae_net.hpp"

using namespace plateinspect;
using nn::ResVaeArch;
using NetD = nn::ResVaeNet<double>;
using PnetD = nn::PerceptualNet<double>;
using T4 = nn::Tensor<double>;

namespace {

// Shrunken model for finite-difference checks: channels 2-4-8, latent 8,
// 3x16x16 input.
ResVaeArch tiny_arch() {
    ResVaeArch a;
    a.input_size = 16;
    a.channels = {2, 4, 8};
    a.latent = 8;
    return a;
}

T4 random_tensor(int n, int c, int h, int w, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    T4 t(n, c, h, w);
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

struct GradCheckContext {
    NetD net = NetD::make(tiny_arch(), 21);
    T4 x = random_tensor(2, 3, 16, 16, 22);
    T4 gt = random_tensor(2, 3, 16, 16, 23);
    std::vector<double> eps;

    GradCheckContext() {
        Rng rng(24);
        eps.resize(2 * 8);
        for (auto& e : eps) e = rng.normal();
    }

    std::vector<std::pair<std::vector<double>*, std::vector<double>*>> params() {
        std::vector<std::pair<std::vector<double>*, std::vector<double>*>> out;
        net.visit_params([&](const std::string&, std::vector<double>& p, std::vector<double>& g) {
            out.emplace_back(&p, &g);
        });
        return out;
    }
};

// term: computes the loss from a finished training forward and fills the
// gradient seeds (dxhat, dmu, dlogvar).
struct LossTerm {
    std::function<double(const NetD::TrainCache&)> value;
    std::function<void(const NetD::TrainCache&, T4&, std::vector<double>&, std::vector<double>&)>
        backward_seed;
};

void check_term(GradCheckContext& ctx, const LossTerm& term, int coords = 100,
                double tol = 1e-3) {
    auto params = ctx.params();

    // analytic gradient
    ctx.net.zero_grad();
    NetD::TrainCache tc;
    ctx.net.forward_train(ctx.x, ctx.eps, tc);
    T4 dxhat(ctx.x.n, 3, 16, 16);
    std::vector<double> dmu(ctx.eps.size(), 0.0), dlogvar(ctx.eps.size(), 0.0);
    term.backward_seed(tc, dxhat, dmu, dlogvar);
    ctx.net.backward_train(tc, dxhat, dmu, dlogvar);

    std::vector<std::vector<double>> grads;
    for (auto& [p, g] : params) grads.push_back(*g);

    // central finite differences on random coordinates
    Rng rng(777);
    int worst_idx = -1;
    double worst = 0.0;
    for (int k = 0; k < coords; ++k) {
        const size_t pi = rng.uniform_int(params.size());
        auto& vec = *params[pi].first;
        const size_t ci = rng.uniform_int(vec.size());
        const double theta = vec[ci];
        // small step: the perceptual path crosses max-pool argmax boundaries,
        // whose kink error scales with h, while double roundoff stays ~1e-7
        const double h = 3e-7 * std::max(1.0, std::abs(theta));

        vec[ci] = theta + h;
        NetD::TrainCache tp;
        ctx.net.forward_train(ctx.x, ctx.eps, tp);
        const double lp = term.value(tp);
        vec[ci] = theta - h;
        NetD::TrainCache tm;
        ctx.net.forward_train(ctx.x, ctx.eps, tm);
        const double lm = term.value(tm);
        vec[ci] = theta;

        const double fd = (lp - lm) / (2 * h);
        const double an = grads[pi][ci];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        if (rel > worst) {
            worst = rel;
            worst_idx = k;
        }
        CHECK_MESSAGE(rel < tol, "coord ", k, " param ", pi, "/", ci, " fd=", fd, " an=", an);
    }
    (void)worst_idx;
    MESSAGE("worst relative error: ", worst);
}

}  // namespace

TEST_CASE("finite differences: MSE term") {
    GradCheckContext ctx;
    LossTerm term;
    term.value = [&](const NetD::TrainCache& tc) { return nn::loss_mse(ctx.gt, tc.xhat); };
    term.backward_seed = [&](const NetD::TrainCache& tc, T4& dxhat, std::vector<double>&,
                             std::vector<double>&) {
        nn::loss_mse_backward(ctx.gt, tc.xhat, 1.0, dxhat);
    };
    check_term(ctx, term);
}

TEST_CASE("finite differences: KL term") {
    GradCheckContext ctx;
    LossTerm term;
    term.value = [&](const NetD::TrainCache& tc) { return nn::loss_kl(tc.lp); };
    term.backward_seed = [&](const NetD::TrainCache& tc, T4&, std::vector<double>& dmu,
                             std::vector<double>& dlogvar) {
        nn::loss_kl_backward(tc.lp, 1.0, dmu, dlogvar);
    };
    check_term(ctx, term);
}

TEST_CASE("finite differences: SSIM term") {
    GradCheckContext ctx;
    const nn::SsimConstants cs;
    LossTerm term;
    term.value = [&](const NetD::TrainCache& tc) {
        return nn::loss_ssim(ctx.gt, tc.xhat, cs.c1, cs.c2);
    };
    term.backward_seed = [&](const NetD::TrainCache& tc, T4& dxhat, std::vector<double>&,
                             std::vector<double>&) {
        nn::loss_ssim_backward(ctx.gt, tc.xhat, cs, 1.0, dxhat);
    };
    check_term(ctx, term);
}

TEST_CASE("finite differences: perceptual term") {
    GradCheckContext ctx;
    const PnetD pnet = PnetD::random_features(31);
    LossTerm term;
    term.value = [&](const NetD::TrainCache& tc) {
        return nn::loss_perceptual(ctx.gt, tc.xhat, pnet);
    };
    term.backward_seed = [&](const NetD::TrainCache& tc, T4& dxhat, std::vector<double>&,
                             std::vector<double>&) {
        nn::loss_perceptual_impl(ctx.gt, tc.xhat, pnet, 1.0, &dxhat);
    };
    check_term(ctx, term);
}

TEST_CASE("finite differences: weighted total") {
    GradCheckContext ctx;
    const PnetD pnet = PnetD::random_features(32);
    const double alpha = 0.25, beta = 0.25, gamma = 0.25, kappa = 0.25;
    const nn::SsimConstants cs;
    LossTerm term;
    term.value = [&](const NetD::TrainCache& tc) {
        return alpha * nn::loss_mse(ctx.gt, tc.xhat) + beta * nn::loss_kl(tc.lp) +
               gamma * nn::loss_ssim(ctx.gt, tc.xhat, cs.c1, cs.c2) +
               kappa * nn::loss_perceptual(ctx.gt, tc.xhat, pnet);
    };
    term.backward_seed = [&](const NetD::TrainCache& tc, T4& dxhat, std::vector<double>& dmu,
                             std::vector<double>& dlogvar) {
        nn::loss_mse_backward(ctx.gt, tc.xhat, alpha, dxhat);
        nn::loss_kl_backward(tc.lp, beta, dmu, dlogvar);
        nn::loss_ssim_backward(ctx.gt, tc.xhat, cs, gamma, dxhat);
        nn::loss_perceptual_impl(ctx.gt, tc.xhat, pnet, kappa, &dxhat);
    };
    check_term(ctx, term);
}
