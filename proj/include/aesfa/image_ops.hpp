#pragma once

#include <algorithm>
#include <cmath>

#include "aesfa/tensor.hpp"

namespace aesfa {

// Mirror index into [0, n) without repeating the edge sample; folds as many
// times as needed so tiny images still pad correctly.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

template <typename T>
Tensor<T> reflect_pad_to_multiple(const Tensor<T>& img, int multiple) {
    check_4d(img, "reflect_pad_to_multiple");
    const int N = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
    const int PH = (H + multiple - 1) / multiple * multiple;
    const int PW = (W + multiple - 1) / multiple * multiple;
    if (PH == H && PW == W) return img;
    Tensor<T> out(Shape{N, C, PH, PW});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* src = img.ptr() + (static_cast<int64_t>(n) * C + c) * H * W;
            T* dst = out.ptr() + (static_cast<int64_t>(n) * C + c) * PH * PW;
            for (int y = 0; y < PH; ++y) {
                const T* srow = src + static_cast<int64_t>(reflect_index(y, H)) * W;
                T* drow = dst + static_cast<int64_t>(y) * PW;
                for (int x = 0; x < PW; ++x) drow[x] = srow[reflect_index(x, W)];
            }
        }
    return out;
}

template <typename T>
Tensor<T> crop_to(const Tensor<T>& img, int H, int W) {
    check_4d(img, "crop_to");
    const int N = img.dim(0), C = img.dim(1), IH = img.dim(2), IW = img.dim(3);
    if (H > IH || W > IW) throw InvalidArgument("crop_to: target larger than source");
    if (H == IH && W == IW) return img;
    Tensor<T> out(Shape{N, C, H, W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* src = img.ptr() + (static_cast<int64_t>(n) * C + c) * IH * IW;
            T* dst = out.ptr() + (static_cast<int64_t>(n) * C + c) * H * W;
            for (int y = 0; y < H; ++y) std::copy_n(src + static_cast<int64_t>(y) * IW, W, dst + static_cast<int64_t>(y) * W);
        }
    return out;
}

template <typename T>
Tensor<T> crop_region(const Tensor<T>& img, int y0, int x0, int H, int W) {
    check_4d(img, "crop_region");
    const int N = img.dim(0), C = img.dim(1), IH = img.dim(2), IW = img.dim(3);
    if (y0 < 0 || x0 < 0 || y0 + H > IH || x0 + W > IW) throw InvalidArgument("crop_region: window out of bounds");
    Tensor<T> out(Shape{N, C, H, W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* src = img.ptr() + (static_cast<int64_t>(n) * C + c) * IH * IW;
            T* dst = out.ptr() + (static_cast<int64_t>(n) * C + c) * H * W;
            for (int y = 0; y < H; ++y)
                std::copy_n(src + static_cast<int64_t>(y0 + y) * IW + x0, W, dst + static_cast<int64_t>(y) * W);
        }
    return out;
}

// Bilinear resize with half-pixel centers.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, int OH, int OW) {
    check_4d(img, "resize_bilinear");
    const int N = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
    if (OH < 1 || OW < 1) throw InvalidArgument("resize_bilinear: bad target size");
    Tensor<T> out(Shape{N, C, OH, OW});
    const double sy = static_cast<double>(H) / OH;
    const double sx = static_cast<double>(W) / OW;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* src = img.ptr() + (static_cast<int64_t>(n) * C + c) * H * W;
            T* dst = out.ptr() + (static_cast<int64_t>(n) * C + c) * OH * OW;
            for (int oy = 0; oy < OH; ++oy) {
                const double fy = (oy + 0.5) * sy - 0.5;
                int y0 = static_cast<int>(std::floor(fy));
                const double wy = fy - y0;
                const int y1 = std::min(std::max(y0 + 1, 0), H - 1);
                y0 = std::min(std::max(y0, 0), H - 1);
                for (int ox = 0; ox < OW; ++ox) {
                    const double fx = (ox + 0.5) * sx - 0.5;
                    int x0 = static_cast<int>(std::floor(fx));
                    const double wx = fx - x0;
                    const int x1 = std::min(std::max(x0 + 1, 0), W - 1);
                    x0 = std::min(std::max(x0, 0), W - 1);
                    const double v00 = src[static_cast<int64_t>(y0) * W + x0];
                    const double v01 = src[static_cast<int64_t>(y0) * W + x1];
                    const double v10 = src[static_cast<int64_t>(y1) * W + x0];
                    const double v11 = src[static_cast<int64_t>(y1) * W + x1];
                    dst[static_cast<int64_t>(oy) * OW + ox] = static_cast<T>(
                        v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx + v10 * wy * (1 - wx) + v11 * wy * wx);
                }
            }
        }
    return out;
}

// Rec.601 luma from an RGB image in [0,1]: [N,3,H,W] -> [N,1,H,W].
template <typename T>
Tensor<T> rgb_to_luma(const Tensor<T>& img) {
    check_4d(img, "rgb_to_luma");
    if (img.dim(1) != 3) throw InvalidArgument("rgb_to_luma: expected 3 channels");
    const int N = img.dim(0), H = img.dim(2), W = img.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<T> out(Shape{N, 1, H, W});
    for (int n = 0; n < N; ++n) {
        const T* r = img.ptr() + static_cast<int64_t>(n) * 3 * hw;
        const T* g = r + hw;
        const T* b = g + hw;
        T* y = out.ptr() + static_cast<int64_t>(n) * hw;
        for (int64_t i = 0; i < hw; ++i)
            y[i] = static_cast<T>(0.299) * r[i] + static_cast<T>(0.587) * g[i] + static_cast<T>(0.114) * b[i];
    }
    return out;
}

}  // namespace aesfa
