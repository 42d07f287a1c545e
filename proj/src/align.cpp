#include "plateinspect/align.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "plateinspect/common.hpp"

namespace plateinspect {

double Homography::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const double d = det();
    if (std::abs(d) < 1e-12) throw std::invalid_argument("Homography::inverse: singular matrix");
    Homography r;
    r.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    r.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    r.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    r.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    r.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    r.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    r.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    r.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    r.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    if (std::abs(r.m[8]) > 1e-12) {
        const double s = r.m[8];
        for (auto& v : r.m) v /= s;
    }
    return r;
}

void Homography::apply(double x, double y, double& ox, double& oy) const {
    const double w = m[6] * x + m[7] * y + m[8];
    ox = (m[0] * x + m[1] * y + m[2]) / w;
    oy = (m[3] * x + m[4] * y + m[5]) / w;
}

Homography Homography::then(const Homography& outer) const {
    Homography r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += outer.m[i * 3 + k] * m[k * 3 + j];
            r.m[i * 3 + j] = s;
        }
    if (std::abs(r.m[8]) > 1e-12)
        for (int i = 8; i >= 0; --i) r.m[i] /= r.m[8];
    return r;
}

// ---------------------------------------------------------------------------
// Feature detection
// ---------------------------------------------------------------------------

std::vector<Keypoint> detect_features(const GrayImage& img, int max_keypoints,
                                      const DetectorConfig& cfg) {
    std::vector<Keypoint> out;
    if (max_keypoints <= 0) return out;
    const int W = img.width, H = img.height;
    if (W < cfg.patch + 2 || H < cfg.patch + 2) return out;

    // Sobel gradients
    std::vector<float> ix(img.size(), 0.f), iy(img.size(), 0.f);
    for (int y = 1; y < H - 1; ++y) {
        for (int x = 1; x < W - 1; ++x) {
            const float gx =
                (img.at(x + 1, y - 1) + 2.f * img.at(x + 1, y) + img.at(x + 1, y + 1)) -
                (img.at(x - 1, y - 1) + 2.f * img.at(x - 1, y) + img.at(x - 1, y + 1));
            const float gy =
                (img.at(x - 1, y + 1) + 2.f * img.at(x, y + 1) + img.at(x + 1, y + 1)) -
                (img.at(x - 1, y - 1) + 2.f * img.at(x, y - 1) + img.at(x + 1, y - 1));
            ix[static_cast<size_t>(y) * W + x] = gx;
            iy[static_cast<size_t>(y) * W + x] = gy;
        }
    }

    // Structure tensor smoothed with a small box window, then Harris response
    const int r = 2;
    std::vector<float> resp(img.size(), 0.f);
    float max_resp = 0.f;
    for (int y = r + 1; y < H - r - 1; ++y) {
        for (int x = r + 1; x < W - r - 1; ++x) {
            double sxx = 0, syy = 0, sxy = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const size_t i = static_cast<size_t>(y + dy) * W + (x + dx);
                    sxx += double(ix[i]) * ix[i];
                    syy += double(iy[i]) * iy[i];
                    sxy += double(ix[i]) * iy[i];
                }
            const double det = sxx * syy - sxy * sxy;
            const double tr = sxx + syy;
            const double R = det - cfg.harris_k * tr * tr;
            resp[static_cast<size_t>(y) * W + x] = static_cast<float>(R);
            if (R > max_resp) max_resp = static_cast<float>(R);
        }
    }
    if (max_resp <= 0.f) return out;  // constant or featureless image
    const float thresh = static_cast<float>(cfg.quality) * max_resp;

    const int margin = cfg.patch / 2 + 1;
    struct Cand {
        int x, y;
        float score;
    };
    std::vector<Cand> cands;
    for (int y = margin; y < H - margin; ++y) {
        for (int x = margin; x < W - margin; ++x) {
            const float v = resp[static_cast<size_t>(y) * W + x];
            if (v <= thresh) continue;
            bool is_max = true;  // 3x3 non-max suppression
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (resp[static_cast<size_t>(y + dy) * W + (x + dx)] > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) cands.push_back({x, y, v});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    if (static_cast<int>(cands.size()) > max_keypoints) cands.resize(max_keypoints);

    const int half = cfg.patch / 2;
    out.reserve(cands.size());
    for (const auto& c : cands) {
        Keypoint kp;
        // quadratic sub-pixel refinement along each axis
        const auto rv = [&](int dx, int dy) {
            return static_cast<double>(resp[static_cast<size_t>(c.y + dy) * W + (c.x + dx)]);
        };
        const double denx = rv(-1, 0) - 2 * rv(0, 0) + rv(1, 0);
        const double deny = rv(0, -1) - 2 * rv(0, 0) + rv(0, 1);
        double sx = 0.0, sy = 0.0;
        if (std::abs(denx) > 1e-12) sx = std::clamp(0.5 * (rv(-1, 0) - rv(1, 0)) / denx, -0.5, 0.5);
        if (std::abs(deny) > 1e-12) sy = std::clamp(0.5 * (rv(0, -1) - rv(0, 1)) / deny, -0.5, 0.5);
        kp.x = c.x + sx;
        kp.y = c.y + sy;
        kp.score = c.score;

        kp.descriptor.resize(static_cast<size_t>(cfg.patch) * cfg.patch);
        double mean = 0.0;
        for (int dy = 0; dy < cfg.patch; ++dy)
            for (int dx = 0; dx < cfg.patch; ++dx) {
                const float v = img.at(c.x - half + dx, c.y - half + dy);
                kp.descriptor[static_cast<size_t>(dy) * cfg.patch + dx] = v;
                mean += v;
            }
        mean /= kp.descriptor.size();
        double norm2 = 0.0;
        for (auto& v : kp.descriptor) {
            v -= static_cast<float>(mean);
            norm2 += double(v) * v;
        }
        if (norm2 < 1e-9) continue;  // flat patch carries no signal
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (auto& v : kp.descriptor) v *= inv;
        out.push_back(std::move(kp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

std::vector<Match> match_features(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b,
                                  double ratio) {
    if (ratio <= 0.0 || ratio >= 1.0)
        throw std::invalid_argument("match_features: ratio must be in (0,1)");
    std::vector<Match> out;
    if (a.empty() || b.empty()) return out;
    const int d = static_cast<int>(a[0].descriptor.size());

    Eigen::MatrixXf A(static_cast<int>(a.size()), d), B(static_cast<int>(b.size()), d);
    for (size_t i = 0; i < a.size(); ++i)
        A.row(static_cast<int>(i)) = Eigen::Map<const Eigen::VectorXf>(a[i].descriptor.data(), d);
    for (size_t j = 0; j < b.size(); ++j)
        B.row(static_cast<int>(j)) = Eigen::Map<const Eigen::VectorXf>(b[j].descriptor.data(), d);
    const Eigen::MatrixXf dots = A * B.transpose();

    std::vector<Match> claims;
    for (int i = 0; i < A.rows(); ++i) {
        int j1 = -1, j2 = -1;
        double d1 = 0.0, d2 = 0.0;
        for (int j = 0; j < B.rows(); ++j) {
            // descriptors are unit-norm, so |a-b|^2 = 2 - 2 a.b
            const double dist2 = std::max(0.0, 2.0 - 2.0 * static_cast<double>(dots(i, j)));
            if (j1 < 0 || dist2 < d1) {
                j2 = j1;
                d2 = d1;
                j1 = j;
                d1 = dist2;
            } else if (j2 < 0 || dist2 < d2) {
                j2 = j;
                d2 = dist2;
            }
        }
        if (j1 < 0) continue;
        const double dist1 = std::sqrt(d1);
        if (j2 < 0) {
            claims.push_back({i, j1, dist1, 0.0});
            continue;
        }
        const double dist2n = std::sqrt(d2);
        if (dist2n <= 0.0) continue;  // duplicate descriptors, ambiguous
        const double rr = dist1 / dist2n;
        if (rr < ratio) claims.push_back({i, j1, dist1, rr});
    }

    // one-to-one: lowest-distance claim wins per b index
    std::vector<int> winner(b.size(), -1);
    for (size_t c = 0; c < claims.size(); ++c) {
        const int j = claims[c].idx_b;
        if (winner[j] < 0 || claims[c].distance < claims[winner[j]].distance)
            winner[j] = static_cast<int>(c);
    }
    for (size_t j = 0; j < winner.size(); ++j)
        if (winner[j] >= 0) out.push_back(claims[winner[j]]);
    std::sort(out.begin(), out.end(), [](const Match& x, const Match& y) {
        if (x.distance != y.distance) return x.distance < y.distance;
        return x.idx_a < y.idx_a;
    });
    return out;
}

// ---------------------------------------------------------------------------
// RANSAC homography
// ---------------------------------------------------------------------------

namespace {

struct NormTransform {
    double cx, cy, s;  // x' = s*(x-cx)
};

NormTransform hartley(const std::vector<PointPair>& pts, const std::vector<int>& idx, bool first) {
    double cx = 0, cy = 0;
    for (int i : idx) {
        cx += first ? pts[i].x1 : pts[i].x2;
        cy += first ? pts[i].y1 : pts[i].y2;
    }
    cx /= idx.size();
    cy /= idx.size();
    double dist = 0;
    for (int i : idx) {
        const double dx = (first ? pts[i].x1 : pts[i].x2) - cx;
        const double dy = (first ? pts[i].y1 : pts[i].y2) - cy;
        dist += std::sqrt(dx * dx + dy * dy);
    }
    dist /= idx.size();
    const double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
    return {cx, cy, s};
}

// DLT over the selected correspondences; returns false when the system is
// numerically degenerate.
bool fit_dlt(const std::vector<PointPair>& pts, const std::vector<int>& idx, Homography& out) {
    const auto ta = hartley(pts, idx, true);
    const auto tb = hartley(pts, idx, false);
    const int n = static_cast<int>(idx.size());
    Eigen::MatrixXd A(2 * n, 9);
    for (int k = 0; k < n; ++k) {
        const auto& p = pts[idx[k]];
        const double x = ta.s * (p.x1 - ta.cx), y = ta.s * (p.y1 - ta.cy);
        const double u = tb.s * (p.x2 - tb.cx), v = tb.s * (p.y2 - tb.cy);
        A.row(2 * k) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        A.row(2 * k + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d Hn;
    Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

    Eigen::Matrix3d Ta, Tb_inv;
    Ta << ta.s, 0, -ta.s * ta.cx, 0, ta.s, -ta.s * ta.cy, 0, 0, 1;
    Tb_inv << 1.0 / tb.s, 0, tb.cx, 0, 1.0 / tb.s, tb.cy, 0, 0, 1;
    Eigen::Matrix3d H = Tb_inv * Hn * Ta;
    if (std::abs(H(2, 2)) < 1e-12) return false;
    H /= H(2, 2);
    if (std::abs(H.determinant()) < 1e-12) return false;
    for (int i = 0; i < 9; ++i) out.m[i] = H(i / 3, i % 3);
    return true;
}

bool three_collinear(double ax, double ay, double bx, double by, double cx, double cy) {
    const double cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    const double scale = std::max({std::abs(bx - ax), std::abs(by - ay), std::abs(cx - ax),
                                   std::abs(cy - ay), 1.0});
    return std::abs(cross) < 1e-6 * scale * scale;
}

bool degenerate_sample(const std::vector<PointPair>& pts, const std::vector<int>& idx) {
    for (int skip = 0; skip < 4; ++skip) {
        double x[3], y[3], u[3], v[3];
        int k = 0;
        for (int i = 0; i < 4; ++i) {
            if (i == skip) continue;
            x[k] = pts[idx[i]].x1;
            y[k] = pts[idx[i]].y1;
            u[k] = pts[idx[i]].x2;
            v[k] = pts[idx[i]].y2;
            ++k;
        }
        if (three_collinear(x[0], y[0], x[1], y[1], x[2], y[2])) return true;
        if (three_collinear(u[0], v[0], u[1], v[1], u[2], v[2])) return true;
    }
    return false;
}

double reproj_error2(const Homography& h, const PointPair& p) {
    double ox, oy;
    h.apply(p.x1, p.y1, ox, oy);
    const double dx = ox - p.x2, dy = oy - p.y2;
    return dx * dx + dy * dy;
}

}  // namespace

RansacResult estimate_homography_ransac(const std::vector<PointPair>& matches, int iters,
                                        double reproj_tol, uint64_t seed) {
    if (matches.size() < 4)
        throw InsufficientDataError("estimate_homography_ransac: need at least 4 matches");
    if (iters < 1) throw std::invalid_argument("estimate_homography_ransac: iters must be >= 1");
    if (reproj_tol <= 0.0)
        throw std::invalid_argument("estimate_homography_ransac: reproj_tol must be > 0");

    Rng rng(seed);
    const size_t n = matches.size();
    const double tol2 = reproj_tol * reproj_tol;

    int best_count = -1;
    double best_err = 0.0;
    Homography best_h;
    std::vector<int> sample(4);

    for (int it = 0; it < iters; ++it) {
        // draw 4 distinct indices; redraw degenerate samples a bounded number
        // of times so pathological inputs cannot spin forever
        bool ok = false;
        for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
            for (int k = 0; k < 4; ++k) {
                bool dup = true;
                while (dup) {
                    sample[k] = static_cast<int>(rng.uniform_int(n));
                    dup = false;
                    for (int j = 0; j < k; ++j)
                        if (sample[j] == sample[k]) dup = true;
                }
            }
            ok = !degenerate_sample(matches, sample);
        }
        if (!ok) continue;

        Homography h;
        if (!fit_dlt(matches, sample, h)) continue;

        int count = 0;
        double err_sum = 0.0;
        for (const auto& p : matches) {
            const double e2 = reproj_error2(h, p);
            if (e2 <= tol2) {
                ++count;
                err_sum += std::sqrt(e2);
            }
        }
        const double mean_err = count > 0 ? err_sum / count : 0.0;
        if (count > best_count || (count == best_count && mean_err < best_err)) {
            best_count = count;
            best_err = mean_err;
            best_h = h;
        }
    }
    if (best_count < 4) throw InsufficientDataError("RANSAC found no valid model");

    // refit on all inliers of the best model
    std::vector<int> inlier_idx;
    for (size_t i = 0; i < n; ++i)
        if (reproj_error2(best_h, matches[i]) <= tol2) inlier_idx.push_back(static_cast<int>(i));

    Homography refit = best_h;
    if (inlier_idx.size() >= 4 && fit_dlt(matches, inlier_idx, refit)) {
        int count = 0;
        for (const auto& p : matches)
            if (reproj_error2(refit, p) <= tol2) ++count;
        if (count < best_count) refit = best_h;  // refit made things worse, keep sample model
    } else {
        refit = best_h;
    }

    RansacResult res;
    res.h = refit;
    res.inliers.resize(n, false);
    double err_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e2 = reproj_error2(refit, matches[i]);
        if (e2 <= tol2) {
            res.inliers[i] = true;
            ++res.inlier_count;
            err_sum += std::sqrt(e2);
        }
    }
    res.mean_inlier_error = res.inlier_count > 0 ? err_sum / res.inlier_count : 0.0;
    if (res.inlier_count < 4) throw InsufficientDataError("RANSAC refit lost all inliers");
    return res;
}

GrayImage warp_perspective(const GrayImage& img, const Homography& h, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw std::invalid_argument("warp_perspective: bad output size");
    const Homography inv = h.inverse();  // throws on singular h
    GrayImage out(out_w, out_h, 0);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double sx, sy;
            inv.apply(x, y, sx, sy);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            if (x0 < -1 || y0 < -1 || x0 >= img.width || y0 >= img.height) continue;
            const double wx = sx - x0, wy = sy - y0;
            auto sample = [&](int xx, int yy) -> double {
                if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) return 0.0;
                return img.at(xx, yy);
            };
            const double v = (1 - wy) * ((1 - wx) * sample(x0, y0) + wx * sample(x0 + 1, y0)) +
                             wy * ((1 - wx) * sample(x0, y0 + 1) + wx * sample(x0 + 1, y0 + 1));
            out.at(x, y) = static_cast<uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
        }
    }
    return out;
}

AlignResult align_reference(const GrayImage& reference, const GrayImage& captured,
                            const AlignConfig& cfg) {
    if (reference.empty() || captured.empty())
        throw std::invalid_argument("align_reference: empty image");

    const GrayImage ref_w = resize(reference, cfg.work_w, cfg.work_h, ResizeMode::Bilinear);
    const GrayImage cap_w = resize(captured, cfg.work_w, cfg.work_h, ResizeMode::Bilinear);

    AlignResult res;
    auto kp_ref = detect_features(ref_w, cfg.detector.max_keypoints, cfg.detector);
    auto kp_cap = detect_features(cap_w, cfg.detector.max_keypoints, cfg.detector);
    res.diag.keypoints_reference = static_cast<int>(kp_ref.size());
    res.diag.keypoints_captured = static_cast<int>(kp_cap.size());

    auto matches = match_features(kp_ref, kp_cap, cfg.ratio);
    res.diag.raw_matches = static_cast<int>(matches.size());
    if (static_cast<int>(matches.size()) > cfg.top_n) matches.resize(cfg.top_n);
    res.diag.retained_matches = static_cast<int>(matches.size());
    if (matches.size() < 4)
        throw AlignmentError("align_reference: fewer than 4 matches survived the ratio test");

    std::vector<PointPair> pairs;
    pairs.reserve(matches.size());
    for (const auto& mt : matches)
        pairs.push_back({kp_ref[mt.idx_a].x, kp_ref[mt.idx_a].y, kp_cap[mt.idx_b].x,
                         kp_cap[mt.idx_b].y});

    RansacResult rr;
    try {
        rr = estimate_homography_ransac(pairs, cfg.ransac_iters, cfg.reproj_tol, cfg.seed);
    } catch (const InsufficientDataError& e) {
        throw AlignmentError(std::string("align_reference: ") + e.what());
    }
    res.diag.inliers = rr.inlier_count;
    res.diag.inlier_ratio = static_cast<double>(rr.inlier_count) / pairs.size();
    res.diag.mean_reproj_error = rr.mean_inlier_error;
    if (res.diag.inlier_ratio < cfg.inlier_floor)
        throw AlignmentError("align_reference: inlier ratio below floor");

    // rescale the working-resolution homography to full resolution; the
    // resize used pixel-center mapping, so include the half-pixel offsets
    auto scale_h = [](double sx, double sy) {
        Homography s;
        s.m = {sx, 0, 0.5 * sx - 0.5, 0, sy, 0.5 * sy - 0.5, 0, 0, 1};
        return s;
    };
    const Homography ref_full_to_work = scale_h(static_cast<double>(cfg.work_w) / reference.width,
                                                static_cast<double>(cfg.work_h) / reference.height);
    const Homography cap_work_to_full = scale_h(static_cast<double>(cfg.work_w) / captured.width,
                                                static_cast<double>(cfg.work_h) / captured.height)
                                            .inverse();
    // full ref -> work ref -> work cap -> full cap
    res.h = ref_full_to_work.then(rr.h).then(cap_work_to_full);
    res.aligned = warp_perspective(reference, res.h, captured.width, captured.height);
    return res;
}

}  // namespace plateinspect
