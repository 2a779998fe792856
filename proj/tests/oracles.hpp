#pragma once

// Reference implementations used only by tests. Each is written as the
// plainest possible loop nest, independent of the library's kernels, so a
// disagreement points at the implementation rather than the test.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "aesfa/tensor.hpp"

namespace oracle {

using aesfa::Shape;
using aesfa::Tensor;

// Dense grouped convolution by direct summation.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride, int pad, int groups) {
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int OH = (H + 2 * pad - kh) / stride + 1;
    const int OW = (W + 2 * pad - kw) / stride + 1;
    const int cing = Cin / groups, coutg = Cout / groups;
    Tensor<T> out(Shape{N, Cout, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co) {
            const int g = co / coutg;
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = bias ? static_cast<double>(bias->data[(size_t)co]) : 0.0;
                    for (int ci_l = 0; ci_l < cing; ++ci_l)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += static_cast<double>(x.at4(n, g * cing + ci_l, iy, ix)) *
                                       static_cast<double>(w.at4(co, ci_l, ky, kx));
                            }
                    out.at4(n, co, oy, ox) = static_cast<T>(acc);
                }
        }
    return out;
}

// Expands grouped weights [Cout, Cin/g, kh, kw] into the equivalent dense
// block-diagonal layout [Cout, Cin, kh, kw].
template <typename T>
Tensor<T> block_diagonal_weights(const Tensor<T>& w, int groups, int cin_total) {
    const int Cout = w.dim(0), cing = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int coutg = Cout / groups;
    Tensor<T> dense(Shape{Cout, cin_total, kh, kw});
    for (int co = 0; co < Cout; ++co) {
        const int g = co / coutg;
        for (int ci_l = 0; ci_l < cing; ++ci_l)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) dense.at4(co, g * cing + ci_l, ky, kx) = w.at4(co, ci_l, ky, kx);
    }
    return dense;
}

// 2x2 block mean.
template <typename T>
Tensor<T> block_mean_pool(const Tensor<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out(Shape{N, C, H / 2, W / 2});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H / 2; ++y)
                for (int xcol = 0; xcol < W / 2; ++xcol) {
                    double acc = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) acc += x.at4(n, c, 2 * y + dy, 2 * xcol + dx);
                    out.at4(n, c, y, xcol) = static_cast<T>(acc / 4.0);
                }
    return out;
}

template <typename T>
Tensor<T> nearest_upsample2(const Tensor<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out(Shape{N, C, 2 * H, 2 * W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xcol = 0; xcol < 2 * W; ++xcol) out.at4(n, c, y, xcol) = x.at4(n, c, y / 2, xcol / 2);
    return out;
}

// Sort-and-scatter distribution matching: sorted y values placed at x's rank
// positions, ties in x by original index.
template <typename T>
std::vector<T> efdm_sort_scatter(const std::vector<T>& x, const std::vector<T>& y) {
    const size_t n = x.size();
    std::vector<size_t> rank(n);
    std::iota(rank.begin(), rank.end(), size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<T> ys = y;
    std::sort(ys.begin(), ys.end());
    std::vector<T> out(n);
    for (size_t r = 0; r < n; ++r) out[rank[r]] = ys[r];
    return out;
}

// Brute-force windowed SSIM on luma planes (doubles, valid windows only).
inline double ssim_reference(const std::vector<double>& a, const std::vector<double>& b, int H, int W) {
    const double sigma = 1.5;
    std::vector<double> win(121);
    double wsum = 0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            const double dy = y - 5, dx = x - 5;
            win[(size_t)(y * 11 + x)] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            wsum += win[(size_t)(y * 11 + x)];
        }
    for (double& v : win) v /= wsum;
    const double c1 = 1e-4, c2 = 9e-4;
    double acc = 0;
    int count = 0;
    for (int y0 = 0; y0 + 11 <= H; ++y0)
        for (int x0 = 0; x0 + 11 <= W; ++x0) {
            double mu1 = 0, mu2 = 0;
            for (int y = 0; y < 11; ++y)
                for (int x = 0; x < 11; ++x) {
                    const double wv = win[(size_t)(y * 11 + x)];
                    mu1 += wv * a[(size_t)((y0 + y) * W + (x0 + x))];
                    mu2 += wv * b[(size_t)((y0 + y) * W + (x0 + x))];
                }
            double s11 = 0, s22 = 0, s12 = 0;
            for (int y = 0; y < 11; ++y)
                for (int x = 0; x < 11; ++x) {
                    const double wv = win[(size_t)(y * 11 + x)];
                    const double av = a[(size_t)((y0 + y) * W + (x0 + x))];
                    const double bv = b[(size_t)((y0 + y) * W + (x0 + x))];
                    s11 += wv * av * av;
                    s22 += wv * bv * bv;
                    s12 += wv * av * bv;
                }
            s11 -= mu1 * mu1;
            s22 -= mu2 * mu2;
            s12 -= mu1 * mu2;
            acc += ((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) / ((mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2));
            ++count;
        }
    return acc / count;
}

// Relative error in the Frobenius norm; the pointwise form is meaningless
// where cancellation drives individual entries toward zero.
template <typename T>
double max_rel_err(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) return 1e30;
    if (a.data.empty()) return 0.0;
    double diff = 0, ref = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data[i], y = b.data[i];
        diff += (x - y) * (x - y);
        ref += y * y;
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-30);
}

template <typename T>
double max_abs_err(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) return 1e30;
    double worst = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::fabs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return worst;
}

}  // namespace oracle
