#include "plateinspect/resvae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "plateinspect/common.hpp"
#include "plateinspect/image_io.hpp"
#include "plateinspect/weights_io.hpp"

namespace plateinspect::vae {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kWeightSumTol = 1e-6;

void LossWeights::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || kappa < 0)
        throw std::invalid_argument("loss weights must be non-negative");
    if (std::abs(sum() - 1.0) > kWeightSumTol)
        throw std::invalid_argument("loss weights must sum to 1 within 1e-6 (got " +
                                    std::to_string(sum()) + ")");
}

LossWeights LossWeights::renormalized(double a, double b, double g, double k) {
    const double s = a + b + g + k;
    if (s <= 0.0) throw std::invalid_argument("loss weights sum must be positive");
    return {a / s, b / s, g / s, k / s};
}

void AnnealSchedule::validate() const {
    if (beta_start > beta_end)
        throw std::invalid_argument("anneal: beta_start must be <= beta_end");
    if (anneal_epochs < 1) throw std::invalid_argument("anneal: anneal_epochs must be >= 1");
}

double AnnealSchedule::beta_at(int epoch) const {
    const double t = std::min(epoch, anneal_epochs) / static_cast<double>(anneal_epochs);
    return beta_start + (beta_end - beta_start) * t;
}

LossWeights annealed_weights(const LossWeights& base, const AnnealSchedule& sched, int epoch) {
    sched.validate();
    const double beta = sched.beta_at(epoch);
    const double rest = base.alpha + base.gamma + base.kappa;
    if (rest <= 0.0) throw std::invalid_argument("anneal: alpha+gamma+kappa must be positive");
    const double s = (1.0 - beta) / rest;
    return {base.alpha * s, beta, base.gamma * s, base.kappa * s};
}

LossBreakdown total_loss(const Tensor4f& x, const Tensor4f& xhat, const nn::LatentParams<float>& lp,
                         const LossWeights& w, const PerceptualNetF* pnet) {
    w.validate();
    if (w.kappa > 0.0 && !pnet)
        throw std::invalid_argument("total_loss: kappa > 0 requires a perceptual net");
    LossBreakdown b;
    b.mse = nn::loss_mse(x, xhat);
    b.kl = nn::loss_kl(lp);
    const nn::SsimConstants cs;
    b.ssim = nn::loss_ssim(x, xhat, cs.c1, cs.c2);
    if (w.kappa > 0.0) b.perceptual = nn::loss_perceptual(x, xhat, *pnet);
    b.total = w.alpha * b.mse + w.beta * b.kl + w.gamma * b.ssim + w.kappa * b.perceptual;
    return b;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

Tensor4f preprocess_chars(const std::vector<GrayImage>& crops, int input_size, bool reinvert) {
    Tensor4f t(static_cast<int>(crops.size()), 3, input_size, input_size);
    for (size_t s = 0; s < crops.size(); ++s) {
        if (crops[s].empty()) throw std::invalid_argument("preprocess_char: empty crop");
        GrayImage img = crops[s];
        if (reinvert) img = invert(img);
        if (img.width != input_size || img.height != input_size)
            img = resize(img, input_size, input_size, ResizeMode::Bilinear);
        float* plane0 = t.sample(static_cast<int>(s));
        const size_t plane = t.plane_size();
        for (size_t i = 0; i < plane; ++i) {
            const float v = static_cast<float>(img.data[i]) / 255.0f * 2.0f - 1.0f;
            plane0[i] = v;
            plane0[i + plane] = v;
            plane0[i + 2 * plane] = v;
        }
    }
    return t;
}

Tensor4f preprocess_char(const GrayImage& crop, int input_size, bool reinvert) {
    return preprocess_chars({crop}, input_size, reinvert);
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

Dataset Dataset::load_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open manifest " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    Dataset ds;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("bad manifest line in " + manifest_path + ": " + e.what());
        }
        DatasetSample s;
        auto resolve = [&](const std::string& p) {
            return fs::path(p).is_absolute() ? p : (base / p).string();
        };
        s.input = read_image(resolve(j.at("path").get<std::string>()));
        s.ground_truth = read_image(resolve(j.at("gt_path").get<std::string>()));
        const std::string glyph = j.at("glyph").get<std::string>();
        s.glyph = glyph.empty() ? '0' : glyph[0];
        s.defective = j.at("label").get<std::string>() == "defective";
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw IoError("manifest " + manifest_path + " has no samples");
    return ds;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

Tensor4f gather_batch(const Dataset& ds, const std::vector<int>& order, size_t first, size_t count,
                      bool ground_truth, int input_size) {
    std::vector<GrayImage> crops;
    crops.reserve(count);
    for (size_t i = first; i < first + count; ++i) {
        const auto& s = ds.samples[order[i]];
        crops.push_back(ground_truth ? s.ground_truth : s.input);
    }
    return preprocess_chars(crops, input_size);
}

}  // namespace

std::vector<EpochStats> train(ResVaeModel& model, const PerceptualNetF* pnet,
                              const Dataset& train_set, const Dataset* val_set,
                              const TrainConfig& cfg) {
    if (train_set.samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.epochs < 1 || cfg.batch < 1) throw std::invalid_argument("train: bad epochs/batch");
    cfg.weights.validate();
    if (cfg.anneal) cfg.anneal->validate();
    if (cfg.weights.kappa > 0.0 && !pnet)
        throw std::invalid_argument("train: kappa > 0 requires a perceptual net");

    const int n = static_cast<int>(train_set.samples.size());
    const int input_size = model.arch.input_size;
    const int latent = model.arch.latent;

    nn::Adam<float> adam;
    adam.lr = cfg.lr;
    std::vector<std::pair<std::vector<float>*, std::vector<float>*>> params;
    model.visit_params([&](const std::string&, std::vector<float>& p, std::vector<float>& g) {
        params.emplace_back(&p, &g);
    });

    const nn::SsimConstants ssim_cs;
    std::vector<EpochStats> curve;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const LossWeights w =
            cfg.anneal ? annealed_weights(cfg.weights, *cfg.anneal, epoch) : cfg.weights;
        if (std::abs(w.sum() - 1.0) > kWeightSumTol)
            throw std::logic_error("train: loss weights drifted from the sum-to-1 constraint");

        // deterministic shuffle and noise streams
        Rng shuffle_rng = Rng::derive(cfg.seed, 0xA0000 + epoch);
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(i + 1));
            std::swap(order[i], order[j]);
        }
        Rng eps_rng = Rng::derive(cfg.seed, 0xB0000 + epoch);

        EpochStats stats;
        stats.epoch = epoch;
        stats.alpha = w.alpha;
        stats.beta = w.beta;
        stats.gamma = w.gamma;
        stats.kappa = w.kappa;
        int batches = 0;

        for (int b0 = 0; b0 < n; b0 += cfg.batch) {
            const int bn = std::min(cfg.batch, n - b0);
            Tensor4f x = gather_batch(train_set, order, b0, bn, false, input_size);
            Tensor4f gt = gather_batch(train_set, order, b0, bn, true, input_size);

            std::vector<float> eps(static_cast<size_t>(bn) * latent);
            for (auto& e : eps) e = static_cast<float>(eps_rng.normal());

            nn::ResVaeNet<float>::TrainCache tc;
            model.zero_grad();
            model.forward_train(x, eps, tc);

            const double mse = nn::loss_mse(gt, tc.xhat);
            const double kl = nn::loss_kl(tc.lp);
            Tensor4f dxhat(bn, 3, input_size, input_size);
            nn::loss_mse_backward(gt, tc.xhat, w.alpha, dxhat);
            double ssim_val;
            if (w.gamma > 0.0) {
                ssim_val = nn::loss_ssim_backward(gt, tc.xhat, ssim_cs, w.gamma, dxhat);
            } else {
                ssim_val = nn::loss_ssim(gt, tc.xhat, ssim_cs.c1, ssim_cs.c2);
            }
            double perc_val = 0.0;
            if (w.kappa > 0.0)
                perc_val = nn::loss_perceptual_impl(gt, tc.xhat, *pnet, w.kappa, &dxhat);

            std::vector<float> dmu(eps.size(), 0.f), dlogvar(eps.size(), 0.f);
            nn::loss_kl_backward(tc.lp, w.beta, dmu, dlogvar);

            const double total =
                w.alpha * mse + w.beta * kl + w.gamma * ssim_val + w.kappa * perc_val;
            if (!std::isfinite(total))
                throw TrainingDivergedError("training loss went non-finite", epoch, b0 / cfg.batch,
                                            adam.lr);

            model.backward_train(tc, dxhat, dmu, dlogvar);
            adam.step(params);

            stats.total += total;
            stats.mse += mse;
            stats.kl += kl;
            stats.ssim += ssim_val;
            stats.perceptual += perc_val;
            ++batches;
        }
        stats.total /= batches;
        stats.mse /= batches;
        stats.kl /= batches;
        stats.ssim /= batches;
        stats.perceptual /= batches;

        if (val_set && !val_set->samples.empty()) {
            // validation loss at z = mu, batched over the full set
            double vtotal = 0.0;
            int vbatches = 0;
            std::vector<int> vorder(val_set->samples.size());
            std::iota(vorder.begin(), vorder.end(), 0);
            for (size_t v0 = 0; v0 < vorder.size(); v0 += static_cast<size_t>(cfg.batch)) {
                const size_t vn = std::min<size_t>(cfg.batch, vorder.size() - v0);
                Tensor4f vx = gather_batch(*val_set, vorder, v0, vn, false, input_size);
                Tensor4f vgt = gather_batch(*val_set, vorder, v0, vn, true, input_size);
                auto lp = model.encode(vx);
                Tensor4f vhat = model.decode(lp.mu, static_cast<int>(vn));
                const auto lb = total_loss(vgt, vhat, lp, w, w.kappa > 0.0 ? pnet : nullptr);
                vtotal += lb.total;
                ++vbatches;
            }
            stats.val_total = vtotal / vbatches;
        }

        if (!cfg.checkpoint_path.empty()) save_model(model, pnet, cfg.checkpoint_path);
        if (cfg.verbose)
            std::fprintf(stderr,
                         "epoch %3d  total %.6f  mse %.6f  kl %.4f  ssim %.4f  perc %.4f  beta %.4f\n",
                         epoch, stats.total, stats.mse, stats.kl, stats.ssim, stats.perceptual,
                         stats.beta);
        curve.push_back(stats);
    }
    return curve;
}

std::string loss_curve_csv(const std::vector<EpochStats>& curve) {
    std::ostringstream os;
    os << "epoch,total,mse,kl,ssim,perceptual,alpha,beta,gamma,kappa,val_total\n";
    for (const auto& e : curve)
        os << e.epoch << "," << e.total << "," << e.mse << "," << e.kl << "," << e.ssim << ","
           << e.perceptual << "," << e.alpha << "," << e.beta << "," << e.gamma << "," << e.kappa
           << "," << e.val_total << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_model(ResVaeModel& model, const PerceptualNetF* pnet, const std::string& path) {
    WeightContainer wc;
    wc.meta["arch"] = {{"input_size", model.arch.input_size},
                       {"channels", model.arch.channels},
                       {"latent", model.arch.latent}};
    wc.meta["has_pnet"] = pnet != nullptr;
    model.visit_params([&](const std::string& name, std::vector<float>& p, std::vector<float>&) {
        wc.add(name, {static_cast<int>(p.size())}, p);
    });
    model.visit_buffers([&](const std::string& name, std::vector<float>& b) {
        wc.add(name, {static_cast<int>(b.size())}, b);
    });
    if (pnet) {
        auto* mutable_pnet = const_cast<PerceptualNetF*>(pnet);
        mutable_pnet->visit(
            "pnet", [&](const std::string& name, std::vector<float>& p, std::vector<float>&) {
                wc.add(name, {static_cast<int>(p.size())}, p);
            });
    }
    wc.save(path);
}

LoadedModel load_model(const std::string& path) {
    const WeightContainer wc = WeightContainer::load(path);
    nn::ResVaeArch arch;
    arch.input_size = wc.meta.at("arch").at("input_size").get<int>();
    arch.channels = wc.meta.at("arch").at("channels").get<std::vector<int>>();
    arch.latent = wc.meta.at("arch").at("latent").get<int>();

    LoadedModel lm{ResVaeModel::make(arch, 0), std::nullopt};
    lm.model.visit_params([&](const std::string& name, std::vector<float>& p, std::vector<float>&) {
        const auto& t = wc.require(name);
        if (t.data.size() != p.size()) throw ConfigError("tensor size mismatch for " + name);
        p = t.data;
    });
    lm.model.visit_buffers([&](const std::string& name, std::vector<float>& b) {
        const auto& t = wc.require(name);
        if (t.data.size() != b.size()) throw ConfigError("tensor size mismatch for " + name);
        b = t.data;
    });
    if (wc.meta.value("has_pnet", false)) {
        lm.pnet = PerceptualNetF::make_arch();
        lm.pnet->visit("pnet",
                       [&](const std::string& name, std::vector<float>& p, std::vector<float>&) {
                           const auto& t = wc.require(name);
                           if (t.data.size() != p.size())
                               throw ConfigError("tensor size mismatch for " + name);
                           p = t.data;
                       });
    }
    return lm;
}

}  // namespace plateinspect::vae
