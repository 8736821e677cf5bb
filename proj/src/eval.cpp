// Copyright (c) 2026 The rvsam Authors
// SPDX-License-Identifier: Apache-2.0

#include "rvsam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace rvsam {
namespace {

void require_mask(const Tensor<float>& m, const char* op) {
    if (m.rank() != 2) throw ShapeError(std::string(op) + ": expected an (h, w) map, got " + shape_string(m.shape()));
}

void require_same_dims(const Tensor<float>& a, const Tensor<float>& b, const char* op) {
    require_mask(a, op);
    require_mask(b, op);
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": dims differ: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

bool on(float v) { return v > 0.5f; }

std::size_t area(const Tensor<float>& m) {
    return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(), on));
}

float clamped(const Tensor<float>& m, std::ptrdiff_t y, std::ptrdiff_t x) {
    const auto h = static_cast<std::ptrdiff_t>(m.dim(0));
    const auto w = static_cast<std::ptrdiff_t>(m.dim(1));
    return m.at(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y, 0, h - 1)),
                static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x, 0, w - 1)));
}

struct Gradient {
    Tensor<float> gx;
    Tensor<float> gy;
};

Gradient sobel(const Tensor<float>& m) {
    require_mask(m, "sobel");
    Gradient g{Tensor<float>(m.shape()), Tensor<float>(m.shape())};
    for (std::size_t y = 0; y < m.dim(0); ++y) {
        for (std::size_t x = 0; x < m.dim(1); ++x) {
            const auto yy = static_cast<std::ptrdiff_t>(y);
            const auto xx = static_cast<std::ptrdiff_t>(x);
            auto p = [&](std::ptrdiff_t dy, std::ptrdiff_t dx) { return clamped(m, yy + dy, xx + dx); };
            g.gx.at(y, x) = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
            g.gy.at(y, x) = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
        }
    }
    return g;
}

double f1(std::size_t tp, std::size_t predicted, std::size_t truth) {
    if (tp == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + truth);
}

}  // namespace

std::vector<GridPoint> generate_point_grid(std::size_t n) {
    std::vector<GridPoint> pts;
    pts.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            pts.push_back({(static_cast<double>(j) + 0.5) / static_cast<double>(n),
                           (static_cast<double>(i) + 0.5) / static_cast<double>(n)});
        }
    }
    return pts;
}

double mask_iou(const Tensor<float>& a, const Tensor<float>& b) {
    require_same_dims(a, b, "mask_iou");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = on(a[i]);
        const bool y = on(b[i]);
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MaskSet mask_nms(const MaskSet& masks, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("mask_nms: threshold must be in (0, 1]");
    std::vector<std::size_t> order(masks.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return masks[a].score > masks[b].score; });
    MaskSet kept;
    for (std::size_t i : order) {
        const bool keep = std::all_of(kept.begin(), kept.end(), [&](const ScoredMask& k) {
            return mask_iou(masks[i].mask, k.mask) <= iou_threshold;
        });
        if (keep) kept.push_back(masks[i]);
    }
    return kept;
}

Tensor<float> sobel_edges(const Tensor<float>& prob) {
    const Gradient g = sobel(prob);
    Tensor<float> mag(prob.shape());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(g.gx[i], g.gy[i]);
    return mag;
}

Tensor<float> edge_nms(const Tensor<float>& mag) {
    const Gradient g = sobel(mag);
    const auto h = static_cast<std::ptrdiff_t>(mag.dim(0));
    const auto w = static_cast<std::ptrdiff_t>(mag.dim(1));
    auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        return (y < 0 || x < 0 || y >= h || x >= w) ? 0.0f
                                                    : mag.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    Tensor<float> out(mag.shape());
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            const float m = at(y, x);
            if (m <= 0.0f) continue;
            const auto i = static_cast<std::size_t>(y * w + x);
            double deg = std::atan2(static_cast<double>(g.gy[i]), static_cast<double>(g.gx[i])) * 180.0 / std::numbers::pi;
            if (deg < 0) deg += 180.0;
            std::ptrdiff_t dy = 0;
            std::ptrdiff_t dx = 1;
            if (deg >= 22.5 && deg < 67.5) {
                dy = 1;
                dx = 1;
            } else if (deg >= 67.5 && deg < 112.5) {
                dy = 1;
                dx = 0;
            } else if (deg >= 112.5 && deg < 157.5) {
                dy = 1;
                dx = -1;
            }
            const float fwd = at(y + dy, x + dx);
            const float back = at(y - dy, x - dx);
            if (m > back && m >= fwd) out[i] = m;
        }
    }
    return out;
}

std::vector<double> edge_thresholds(std::size_t n) {
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = static_cast<double>(k + 1) / static_cast<double>(n + 1);
    return t;
}

EdgeMatch match_edges(const Tensor<float>& pred_binary, const Tensor<float>& gt, double tolerance) {
    require_same_dims(pred_binary, gt, "match_edges");
    const auto h = static_cast<std::ptrdiff_t>(gt.dim(0));
    const auto w = static_cast<std::ptrdiff_t>(gt.dim(1));
    const auto r = static_cast<std::ptrdiff_t>(std::floor(tolerance));
    const double r2 = tolerance * tolerance;
    std::vector<char> used(gt.size(), 0);
    EdgeMatch m;
    m.ground_truth = area(gt);
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            if (!on(pred_binary.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)))) continue;
            ++m.predicted;
            std::ptrdiff_t best = -1;
            double best_d = r2 + 1e-9;
            for (std::ptrdiff_t yy = std::max<std::ptrdiff_t>(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
                for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
                    const std::ptrdiff_t j = yy * w + xx;
                    if (used[static_cast<std::size_t>(j)] || !on(gt[static_cast<std::size_t>(j)])) continue;
                    const double d = static_cast<double>((yy - y) * (yy - y) + (xx - x) * (xx - x));
                    if (d < best_d) {
                        best_d = d;
                        best = j;
                    }
                }
            }
            if (best >= 0) {
                used[static_cast<std::size_t>(best)] = 1;
                ++m.matched;
            }
        }
    }
    return m;
}

EdgeMetrics edge_metrics(const std::vector<Tensor<float>>& strengths, const std::vector<Tensor<float>>& gts,
                         double tolerance_px, std::size_t num_thresholds) {
    if (strengths.size() != gts.size()) throw ShapeError("edge_metrics: prediction and ground-truth counts differ");
    const auto thresholds = edge_thresholds(num_thresholds);
    const std::size_t n = strengths.size();
    std::vector<std::vector<EdgeMatch>> per(n, std::vector<EdgeMatch>(thresholds.size()));
    std::size_t total_gt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        require_same_dims(strengths[i], gts[i], "edge_metrics");
        total_gt += area(gts[i]);
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            Tensor<float> bin(strengths[i].shape());
            for (std::size_t p = 0; p < bin.size(); ++p) {
                bin[p] = static_cast<double>(strengths[i][p]) >= thresholds[k] ? 1.0f : 0.0f;
            }
            per[i][k] = match_edges(bin, gts[i], tolerance_px);
        }
    }
    if (total_gt == 0) throw DataError("edge_metrics: no ground-truth edge pixels in the whole set");

    EdgeMetrics out;
    std::vector<std::pair<double, double>> pr;  // (recall, precision)
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        std::size_t tp = 0;
        std::size_t predicted = 0;
        for (std::size_t i = 0; i < n; ++i) {
            tp += per[i][k].matched;
            predicted += per[i][k].predicted;
        }
        out.ods = std::max(out.ods, f1(tp, predicted, total_gt));
        if (predicted > 0) {
            pr.emplace_back(static_cast<double>(tp) / static_cast<double>(total_gt),
                            static_cast<double>(tp) / static_cast<double>(predicted));
        }
    }
    std::size_t images_with_gt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (per[i].front().ground_truth == 0) continue;
        ++images_with_gt;
        double best = 0;
        for (const EdgeMatch& m : per[i]) best = std::max(best, f1(m.matched, m.predicted, m.ground_truth));
        out.ois += best;
    }
    out.ois /= static_cast<double>(images_with_gt);
    if (!pr.empty()) {
        std::stable_sort(pr.begin(), pr.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        pr.insert(pr.begin(), {0.0, pr.front().second});
        for (std::size_t i = 1; i < pr.size(); ++i) {
            out.ap += (pr[i].first - pr[i - 1].first) * 0.5 * (pr[i].second + pr[i - 1].second);
        }
    }
    return out;
}

std::vector<double> coco_iou_thresholds() {
    std::vector<double> t;
    for (int k = 0; k < 10; ++k) t.push_back(static_cast<double>(50 + 5 * k) / 100.0);
    return t;
}

std::optional<double> average_precision(const std::vector<ImageInstances>& images, double iou_threshold,
                                        AreaRange range) {
    auto in_range = [&](std::size_t a) {
        const double v = static_cast<double>(a);
        return v >= range.lo && v < range.hi;
    };
    struct Det {
        double score;
        std::size_t image;
        std::size_t index;
    };
    std::vector<Det> dets;
    std::vector<std::vector<std::vector<double>>> ious(images.size());
    std::vector<std::vector<char>> ignored(images.size());
    std::size_t num_gt = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ImageInstances& im = images[i];
        for (const auto& g : im.ground_truth) {
            const bool ign = !in_range(area(g));
            ignored[i].push_back(ign);
            num_gt += !ign;
        }
        ious[i].resize(im.predictions.size());
        for (std::size_t p = 0; p < im.predictions.size(); ++p) {
            dets.push_back({im.predictions[p].score, i, p});
            for (const auto& g : im.ground_truth) ious[i][p].push_back(mask_iou(im.predictions[p].mask, g));
        }
    }
    if (num_gt == 0) return std::nullopt;
    std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.score > b.score; });

    std::vector<std::vector<char>> matched(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) matched[i].assign(images[i].ground_truth.size(), 0);
    std::vector<double> recall;
    std::vector<double> precision;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const Det& d : dets) {
        const auto& row = ious[d.image][d.index];
        auto best_in = [&](bool want_ignored) {
            std::ptrdiff_t best = -1;
            double best_iou = iou_threshold;
            for (std::size_t g = 0; g < row.size(); ++g) {
                if (matched[d.image][g] || static_cast<bool>(ignored[d.image][g]) != want_ignored) continue;
                if (row[g] >= best_iou && (best < 0 || row[g] > best_iou)) {
                    best_iou = row[g];
                    best = static_cast<std::ptrdiff_t>(g);
                }
            }
            return best;
        };
        std::ptrdiff_t g = best_in(false);
        bool ign = false;
        if (g < 0) {
            g = best_in(true);
            ign = g >= 0;
        }
        if (g >= 0) {
            matched[d.image][static_cast<std::size_t>(g)] = 1;
            if (ign) continue;
            ++tp;
        } else {
            if (!in_range(area(images[d.image].predictions[d.index].mask))) continue;
            ++fp;
        }
        recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double sum = 0;
    for (int r = 0; r <= 100; ++r) {
        const double level = static_cast<double>(r) / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), level);
        if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 101.0;
}

ApScores instance_ap(const std::vector<ImageInstances>& images) {
    auto mean_over_thresholds = [&](AreaRange range) -> std::optional<double> {
        double sum = 0;
        for (double t : coco_iou_thresholds()) {
            const auto ap = average_precision(images, t, range);
            if (!ap) return std::nullopt;
            sum += *ap;
        }
        return sum / 10.0;
    };
    const auto all = mean_over_thresholds(kAreaAll);
    if (!all) throw DataError("instance_ap: no ground-truth instances");
    ApScores s;
    s.ap = *all;
    s.ap_small = mean_over_thresholds(kAreaSmall);
    s.ap_medium = mean_over_thresholds(kAreaMedium);
    s.ap_large = mean_over_thresholds(kAreaLarge);
    return s;
}

SaliencyResult saliency_mae(const std::vector<Tensor<float>>& candidates, const Tensor<float>& gt) {
    if (candidates.empty()) throw DataError("saliency_mae: empty candidate set");
    SaliencyResult r;
    r.iou = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double iou = mask_iou(candidates[i], gt);
        if (iou > r.iou) {
            r.iou = iou;
            r.best = i;
        }
    }
    const Tensor<float>& best = candidates[r.best];
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) wrong += on(best[i]) != on(gt[i]);
    r.mae = static_cast<double>(wrong) / static_cast<double>(gt.size());
    return r;
}

double max_f1_pixel(const std::vector<Tensor<float>>& scores, const std::vector<Tensor<float>>& gts) {
    if (scores.size() != gts.size() || scores.empty()) throw ShapeError("max_f1_pixel: score/gt counts differ");
    std::vector<std::pair<float, bool>> px;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        require_same_dims(scores[i], gts[i], "max_f1_pixel");
        for (std::size_t p = 0; p < scores[i].size(); ++p) {
            const bool g = on(gts[i][p]);
            positives += g;
            px.emplace_back(scores[i][p], g);
        }
    }
    if (positives == 0) throw DataError("max_f1_pixel: ground truth is empty");
    // Descending score, so a prefix is the set with score >= t.
    std::sort(px.begin(), px.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<float> unique;
    for (const auto& p : px) {
        if (unique.empty() || p.first != unique.back()) unique.push_back(p.first);
    }
    std::vector<float> thresholds;
    constexpr std::size_t kMaxThresholds = 256;
    if (unique.size() <= kMaxThresholds) {
        thresholds = unique;
    } else {
        for (std::size_t k = 0; k < kMaxThresholds; ++k) {
            thresholds.push_back(unique[(k * (unique.size() - 1) + (kMaxThresholds - 1) / 2) / (kMaxThresholds - 1)]);
        }
    }
    double best = 0;
    std::size_t taken = 0;
    std::size_t tp = 0;
    for (float t : thresholds) {  // descending
        while (taken < px.size() && px[taken].first >= t) tp += px[taken++].second;
        best = std::max(best, f1(tp, taken, positives));
    }
    return best;
}

double max_f1_pixel(const Tensor<float>& scores, const Tensor<float>& gt) {
    return max_f1_pixel(std::vector<Tensor<float>>{scores}, std::vector<Tensor<float>>{gt});
}

}  // namespace rvsam
