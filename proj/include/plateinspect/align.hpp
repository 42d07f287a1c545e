#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "plateinspect/image.hpp"

namespace plateinspect {

struct Keypoint {
    double x = 0.0;   // subpixel, image coordinates
    double y = 0.0;
    double score = 0.0;
    std::vector<float> descriptor;  // zero-mean, unit-norm patch
};

struct Match {
    int idx_a = -1;
    int idx_b = -1;
    double distance = 0.0;  // euclidean descriptor distance
    double ratio = 0.0;     // best / second-best distance
};

// 3x3 projective transform mapping reference coordinates to captured
// coordinates, normalized so m[8] == 1.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return {}; }
    double det() const;
    Homography inverse() const;
    void apply(double x, double y, double& ox, double& oy) const;
    Homography then(const Homography& outer) const;  // outer * this
};

struct DetectorConfig {
    int max_keypoints = 1500;
    int patch = 16;            // descriptor patch side
    double quality = 0.01;     // keep corners with response > quality * max response
    double harris_k = 0.04;
};

// Harris corner response + zero-mean unit-norm patch descriptors. Plates are
// fixtured (rotations < 10 deg), so rotation-invariant descriptors are not
// needed. Returns at most max_keypoints, sorted by descending score;
// an image smaller than the patch yields an empty list.
std::vector<Keypoint> detect_features(const GrayImage& img, int max_keypoints,
                                      const DetectorConfig& cfg = {});

// Exhaustive nearest-neighbor matching with Lowe ratio test (d1/d2 < ratio),
// one-to-one by keeping the lowest-distance claim per b index.
std::vector<Match> match_features(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                  double ratio);

struct PointPair {
    double x1, y1;  // reference
    double x2, y2;  // captured
};

struct RansacResult {
    Homography h;
    std::vector<bool> inliers;
    int inlier_count = 0;
    double mean_inlier_error = 0.0;
};

// RANSAC over 4-point samples with degenerate-sample redraw, best model by
// inlier count (ties by lower mean reprojection error), refit on all inliers
// via Hartley-normalized DLT. Deterministic given seed.
RansacResult estimate_homography_ransac(const std::vector<PointPair>& matches, int iters,
                                        double reproj_tol, uint64_t seed);

// Inverse-mapping warp with bilinear sampling; samples outside the source
// image are 0.
GrayImage warp_perspective(const GrayImage& img, const Homography& h, int out_w, int out_h);

struct AlignConfig {
    int work_w = 960;   // alignment runs at reduced resolution
    int work_h = 800;
    DetectorConfig detector;
    double ratio = 0.75;
    int top_n = 200;    // lowest-distance matches kept for RANSAC
    int ransac_iters = 2000;
    double reproj_tol = 3.0;
    double inlier_floor = 0.25;
    uint64_t seed = 7;
};

struct AlignDiagnostics {
    int keypoints_reference = 0;
    int keypoints_captured = 0;
    int raw_matches = 0;
    int retained_matches = 0;
    int inliers = 0;
    double inlier_ratio = 0.0;
    double mean_reproj_error = 0.0;
};

struct AlignResult {
    GrayImage aligned;      // reference warped into the captured frame
    Homography h;           // full-resolution reference -> captured
    AlignDiagnostics diag;
};

// Full alignment stage: resize to working resolution, detect, match, RANSAC,
// rescale the homography to full resolution and warp the reference. Throws
// AlignmentError when fewer than 4 matches survive or the inlier ratio is
// below the floor.
AlignResult align_reference(const GrayImage& reference, const GrayImage& captured,
                            const AlignConfig& cfg);

}  // namespace plateinspect
