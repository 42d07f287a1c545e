#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plateinspect/image.hpp"
#include "plateinspect/nn/perceptual.hpp"
#include "plateinspect/nn/resvae_net.hpp"

namespace plateinspect::vae {

using nn::Tensor4f;
using ResVaeModel = nn::ResVaeNet<float>;
using PerceptualNetF = nn::PerceptualNet<float>;

// Loss-term weights (MSE, KL, SSIM, perceptual); must sum to 1 within 1e-6.
struct LossWeights {
    double alpha = 0.4;
    double beta = 0.3;
    double gamma = 0.0;
    double kappa = 0.3;

    double sum() const { return alpha + beta + gamma + kappa; }
    void validate() const;
    // Scales a published row that misses the sum-to-1 constraint.
    static LossWeights renormalized(double a, double b, double g, double k);
};

// Linear KL-weight schedule: beta grows from beta_start to beta_end over
// anneal_epochs, then holds; the other weights are rescaled per epoch so the
// four weights keep summing to 1.
struct AnnealSchedule {
    double beta_start = 0.03;
    double beta_end = 0.3;
    int anneal_epochs = 200;

    void validate() const;
    double beta_at(int epoch) const;
};

LossWeights annealed_weights(const LossWeights& base, const AnnealSchedule& sched, int epoch);

struct LossBreakdown {
    double total = 0.0;
    double mse = 0.0;
    double kl = 0.0;
    double ssim = 0.0;        // 1 - SSIM
    double perceptual = 0.0;
};

// Weighted Eq.-7 combination; rejects weights violating the sum-to-1
// constraint. pnet may be null only when kappa == 0.
LossBreakdown total_loss(const Tensor4f& x, const Tensor4f& xhat, const nn::LatentParams<float>& lp,
                         const LossWeights& w, const PerceptualNetF* pnet);

// [0,255] crop -> 1x3x64x64 tensor in [-1,1] with replicated channels.
// reinvert undoes optical inversion when the capture path flags it.
Tensor4f preprocess_char(const GrayImage& crop, int input_size = 64, bool reinvert = false);

// Batch variant used by training and plate inspection.
Tensor4f preprocess_chars(const std::vector<GrayImage>& crops, int input_size = 64,
                          bool reinvert = false);

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct DatasetSample {
    GrayImage input;
    GrayImage ground_truth;
    char glyph = '0';
    bool defective = false;
};

struct Dataset {
    std::vector<DatasetSample> samples;

    // JSON-lines manifest {"path","glyph","label","gt_path"}; relative paths
    // resolve against the manifest's directory.
    static Dataset load_manifest(const std::string& manifest_path);
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 50;
    int batch = 64;
    double lr = 0.001;
    LossWeights weights;
    std::optional<AnnealSchedule> anneal;
    uint64_t seed = 1;
    std::string checkpoint_path;  // overwritten each epoch when set
    bool verbose = false;
};

struct EpochStats {
    int epoch = 0;
    double total = 0.0, mse = 0.0, kl = 0.0, ssim = 0.0, perceptual = 0.0;
    double alpha = 0.0, beta = 0.0, gamma = 0.0, kappa = 0.0;
    double val_total = 0.0;  // 0 when no validation set was given
};

// Minimizes total_loss(gt, decode(reparameterize(encode(input)))). Throws
// TrainingDivergedError on non-finite loss. Deterministic given seed and
// thread count.
std::vector<EpochStats> train(ResVaeModel& model, const PerceptualNetF* pnet,
                              const Dataset& train_set, const Dataset* val_set,
                              const TrainConfig& cfg);

std::string loss_curve_csv(const std::vector<EpochStats>& curve);

// ---------------------------------------------------------------------------
// Serialization (RVW1 container; ResVAE and PerceptualNet share the file
// under distinct name prefixes)
// ---------------------------------------------------------------------------

void save_model(ResVaeModel& model, const PerceptualNetF* pnet, const std::string& path);

struct LoadedModel {
    ResVaeModel model;
    std::optional<PerceptualNetF> pnet;
};

LoadedModel load_model(const std::string& path);

}  // namespace plateinspect::vae
