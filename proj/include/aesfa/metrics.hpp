#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "aesfa/image_io.hpp"
#include "aesfa/image_ops.hpp"
#include "aesfa/losses.hpp"
#include "aesfa/model.hpp"

#include <json.hpp>

namespace aesfa {

namespace detail {

inline std::vector<double> gaussian_window_11() {
    std::vector<double> w(121);
    const double sigma = 1.5;
    double sum = 0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            const double dy = y - 5, dx = x - 5;
            w[static_cast<size_t>(y * 11 + x)] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            sum += w[static_cast<size_t>(y * 11 + x)];
        }
    for (double& v : w) v /= sum;
    return w;
}

// Valid-mode correlation of a single-channel plane with the separable
// Gaussian, in double.
inline std::vector<double> gauss_filter_valid(const std::vector<double>& img, int H, int W) {
    const double sigma = 1.5;
    double k[11];
    double ksum = 0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        k[i] = std::exp(-d * d / (2 * sigma * sigma));
        ksum += k[i];
    }
    for (double& v : k) v /= ksum;
    const int OW = W - 10;
    const int OH = H - 10;
    std::vector<double> tmp(static_cast<size_t>(H) * OW);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < OW; ++x) {
            double acc = 0;
            for (int i = 0; i < 11; ++i) acc += k[i] * img[static_cast<size_t>(y) * W + x + i];
            tmp[static_cast<size_t>(y) * OW + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(OH) * OW);
    for (int y = 0; y < OH; ++y)
        for (int x = 0; x < OW; ++x) {
            double acc = 0;
            for (int i = 0; i < 11; ++i) acc += k[i] * tmp[static_cast<size_t>(y + i) * OW + x];
            out[static_cast<size_t>(y) * OW + x] = acc;
        }
    return out;
}

}  // namespace detail

// Mean structural similarity over all valid 11x11 windows (Gaussian weights,
// sigma 1.5, K1=0.01, K2=0.03, dynamic range 1). RGB inputs are reduced to
// luma first.
inline double ssim(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape != b.shape) throw InvalidArgument("ssim: image dims differ");
    check_4d(a, "ssim");
    const int H = a.dim(2), W = a.dim(3);
    if (H < 11 || W < 11) throw InvalidArgument("ssim: images must be at least 11x11");

    Tensor<float> la = a.dim(1) == 3 ? rgb_to_luma(a) : a;
    Tensor<float> lb = b.dim(1) == 3 ? rgb_to_luma(b) : b;
    const int64_t hw = static_cast<int64_t>(H) * W;
    std::vector<double> x(static_cast<size_t>(hw)), y(static_cast<size_t>(hw));
    std::vector<double> xx(static_cast<size_t>(hw)), yy(static_cast<size_t>(hw)), xy(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) {
        x[static_cast<size_t>(i)] = la.data[static_cast<size_t>(i)];
        y[static_cast<size_t>(i)] = lb.data[static_cast<size_t>(i)];
        xx[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        yy[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
        xy[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
    }
    auto mu1 = detail::gauss_filter_valid(x, H, W);
    auto mu2 = detail::gauss_filter_valid(y, H, W);
    auto m11 = detail::gauss_filter_valid(xx, H, W);
    auto m22 = detail::gauss_filter_valid(yy, H, W);
    auto m12 = detail::gauss_filter_valid(xy, H, W);

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double acc = 0;
    for (size_t i = 0; i < mu1.size(); ++i) {
        const double u1 = mu1[i], u2 = mu2[i];
        const double s11 = m11[i] - u1 * u1;
        const double s22 = m22[i] - u2 * u2;
        const double s12 = m12[i] - u1 * u2;
        acc += ((2 * u1 * u2 + c1) * (2 * s12 + c2)) / ((u1 * u1 + u2 * u2 + c1) * (s11 + s22 + c2));
    }
    return acc / static_cast<double>(mu1.size());
}

struct EvalRecord {
    std::string content;
    std::string style;
    bool ok = false;
    std::string error;
    double ssim_value = 0;
    double style_loss_value = 0;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    double mean_ssim = 0;
    double mean_style_loss = 0;
    int evaluated = 0;
    int failed = 0;

    nlohmann::json summary_json() const {
        return nlohmann::json{{"pairs", records.size()},
                              {"evaluated", evaluated},
                              {"failed", failed},
                              {"mean_ssim", mean_ssim},
                              {"mean_style_loss", mean_style_loss}};
    }
};

// Stylizes every (content, style) pair and scores SSIM against the content
// plus the style perceptual distance against the style. Decode failures are
// recorded per pair rather than aborting the sweep.
template <typename T>
EvalReport eval_pairs_with(const std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&)>& stylize_fn,
                           const std::vector<std::string>& contents, const std::vector<std::string>& styles,
                           const PerceptualExtractor<T>& ext) {
    if (contents.empty() || styles.empty()) throw ConfigError("eval_pairs: empty content or style set");
    EvalReport report;
    double ssim_sum = 0, style_sum = 0;
    for (const auto& cpath : contents) {
        for (const auto& spath : styles) {
            EvalRecord rec;
            rec.content = cpath;
            rec.style = spath;
            try {
                Tensor<float> content = load_image(cpath);
                Tensor<float> style = load_image(spath);
                Tensor<T> ct = content.template cast<T>();
                Tensor<T> stl = style.template cast<T>();
                Tensor<T> out = stylize_fn(ct, stl);
                Tensor<float> outf = out.template cast<float>();
                rec.ssim_value = ssim(outf, content);
                rec.style_loss_value = static_cast<double>(style_loss(out, stl, ext));
                rec.ok = true;
                ssim_sum += rec.ssim_value;
                style_sum += rec.style_loss_value;
                ++report.evaluated;
            } catch (const IoError& e) {
                rec.error = e.what();
                ++report.failed;
            }
            report.records.push_back(std::move(rec));
        }
    }
    if (report.evaluated > 0) {
        report.mean_ssim = ssim_sum / report.evaluated;
        report.mean_style_loss = style_sum / report.evaluated;
    }
    return report;
}

template <typename T>
EvalReport eval_pairs(const AesfaModel<T>& model, const std::vector<std::string>& contents,
                      const std::vector<std::string>& styles, const PerceptualExtractor<T>& ext) {
    return eval_pairs_with<T>(
        [&model](const Tensor<T>& c, const Tensor<T>& s) { return model.stylize_any(c, s, s); }, contents, styles,
        ext);
}

struct BenchStats {
    int reps = 0;
    int warmup = 0;
    int total_passes = 0;
    double mean_seconds = 0;
    double std_seconds = 0;
    double min_seconds = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"reps", reps},       {"warmup", warmup},           {"total_passes", total_passes},
                              {"mean_seconds", mean_seconds}, {"std_seconds", std_seconds}, {"min_seconds", min_seconds}};
    }
};

// Times the forward pass only, on a fixed seeded content/style pair at
// size x size. warmup passes run first and are not timed.
template <typename T>
BenchStats bench_inference(const AesfaModel<T>& model, int size, int reps, int warmup) {
    if (reps < 1) throw InvalidArgument("bench_inference: reps must be >= 1");
    if (warmup < 0) throw InvalidArgument("bench_inference: warmup must be >= 0");
    const int d = model.cfg.spatial_divisor();
    if (size % d != 0)
        throw InvalidArgument("bench_inference: size must be divisible by " + std::to_string(d));
    if (size < model.cfg.min_style_hw) throw InvalidArgument("bench_inference: size below the style minimum");

    Rng rng(hash_seed({0xbe9cULL, static_cast<uint64_t>(size)}));
    Tensor<T> content = Tensor<T>::random_uniform(Shape{1, 3, size, size}, rng, T(0), T(1));
    Tensor<T> style = Tensor<T>::random_uniform(Shape{1, 3, size, size}, rng, T(0), T(1));

    BenchStats stats;
    stats.reps = reps;
    stats.warmup = warmup;
    for (int i = 0; i < warmup; ++i) {
        (void)model.stylize(content, style);
        ++stats.total_passes;
    }
    std::vector<double> times;
    times.reserve(static_cast<size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)model.stylize(content, style);
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        ++stats.total_passes;
    }
    double sum = 0;
    stats.min_seconds = times[0];
    for (double t : times) {
        sum += t;
        stats.min_seconds = std::min(stats.min_seconds, t);
    }
    stats.mean_seconds = sum / reps;
    double var = 0;
    for (double t : times) var += (t - stats.mean_seconds) * (t - stats.mean_seconds);
    stats.std_seconds = reps > 1 ? std::sqrt(var / (reps - 1)) : 0.0;
    return stats;
}

}  // namespace aesfa
