#pragma once

#include <cmath>
#include <utility>

#include "aesfa/nn_ops.hpp"

namespace aesfa {

// Channel split between the full-resolution (high-frequency) branch and the
// half-resolution (low-frequency) branch: c_low = floor(alpha * total).
inline std::pair<int, int> split_alpha(int total_channels, double alpha) {
    if (total_channels < 1) throw InvalidArgument("split_alpha: total_channels must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("split_alpha: alpha must lie in [0,1]");
    const int c_low = static_cast<int>(std::floor(alpha * total_channels));
    return {total_channels - c_low, c_low};
}

// Two-branch feature map. Both branches are always defined; a branch that
// carries no channels has dim(1) == 0 but keeps batch and spatial dims so
// shape arithmetic stays uniform. The low branch lives at exactly half the
// high branch's resolution.
template <typename T>
struct OctavePair {
    Var<T> high;
    Var<T> low;

    int batch() const { return high.value().dim(0); }
    int high_channels() const { return high.value().dim(1); }
    int low_channels() const { return low.value().dim(1); }

    void validate(const char* what = "octave pair") const {
        if (!high.defined() || !low.defined()) throw InvalidArgument(std::string(what) + ": branch not defined");
        check_4d(high.value(), what);
        check_4d(low.value(), what);
        const auto& hs = high.value().shape;
        const auto& ls = low.value().shape;
        if (hs[0] != ls[0]) throw InvalidArgument(std::string(what) + ": batch mismatch between branches");
        if (hs[2] % 2 != 0 || hs[3] % 2 != 0)
            throw InvalidArgument(std::string(what) + ": high branch dims must be even, got " + shape_str(hs));
        if (ls[2] != hs[2] / 2 || ls[3] != hs[3] / 2)
            throw InvalidArgument(std::string(what) + ": low branch must be half resolution, got " + shape_str(ls) +
                                  " vs " + shape_str(hs));
    }
};

// Makes the all-high pair for an RGB image (low branch has zero channels).
template <typename T>
OctavePair<T> image_as_octave(const Var<T>& image) {
    check_4d(image.value(), "image_as_octave");
    const auto& s = image.value().shape;
    if (s[2] % 2 != 0 || s[3] % 2 != 0) throw InvalidArgument("image_as_octave: image dims must be even");
    return OctavePair<T>{image, constant(Tensor<T>(Shape{s[0], 0, s[2] / 2, s[3] / 2}))};
}

// Four-path octave convolution weights. w_xy maps branch x to branch y;
// biases attach to output branches. A path whose source or target branch
// carries zero channels may be left undefined.
template <typename T>
struct OctConvParams {
    Var<T> w_hh, w_hl, w_lh, w_ll;
    Var<T> b_h, b_l;
    int stride = 1;
    int pad = 0;

    static bool path_present(const Var<T>& w) { return w.defined() && w.numel() > 0; }
    int out_high_channels() const {
        if (path_present(w_hh)) return w_hh.value().dim(0);
        if (path_present(w_lh)) return w_lh.value().dim(0);
        return 0;
    }
    int out_low_channels() const {
        if (path_present(w_ll)) return w_ll.value().dim(0);
        if (path_present(w_hl)) return w_hl.value().dim(0);
        return 0;
    }
};

// 2x2 mean pooling; the paper-side downsampling half of the octave exchange.
template <typename T>
Var<T> pool2(const Var<T>& x) {
    return avg_pool2(x);
}

// Nearest-neighbor x2; the upsampling half of the octave exchange.
template <typename T>
Var<T> upsample2(const Var<T>& x) {
    return upsample_nearest2(x);
}

namespace detail {

template <typename T>
void check_path_channels(const Var<T>& w, int in_ch, const char* name) {
    if (w.value().dim(1) != in_ch)
        throw InvalidArgument(std::string("octconv: path ") + name + " expects " + std::to_string(w.value().dim(1)) +
                              " input channels, got " + std::to_string(in_ch));
}

}  // namespace detail

// Octave convolution forward pass:
//   Y_H = f(X_H; W_hh) + f(upsample2(X_L); W_lh) [+ b_h]
//   Y_L = f(X_L; W_ll) + f(pool2(X_H);     W_hl) [+ b_l]
// Paths from or to zero-channel branches are skipped.
template <typename T>
OctavePair<T> octconv(const OctavePair<T>& x, const OctConvParams<T>& p) {
    x.validate("octconv input");
    const int in_h = x.high_channels();
    const int in_l = x.low_channels();
    const int out_h = p.out_high_channels();
    const int out_l = p.out_low_channels();

    const bool use_hh = in_h > 0 && out_h > 0 && OctConvParams<T>::path_present(p.w_hh);
    const bool use_lh = in_l > 0 && out_h > 0 && OctConvParams<T>::path_present(p.w_lh);
    const bool use_ll = in_l > 0 && out_l > 0 && OctConvParams<T>::path_present(p.w_ll);
    const bool use_hl = in_h > 0 && out_l > 0 && OctConvParams<T>::path_present(p.w_hl);
    if (in_h > 0 && out_h > 0 && !use_hh) throw InvalidArgument("octconv: missing high-to-high weights");
    if (in_l > 0 && out_l > 0 && !use_ll) throw InvalidArgument("octconv: missing low-to-low weights");
    if (use_hh) detail::check_path_channels(p.w_hh, in_h, "high-to-high");
    if (use_lh) detail::check_path_channels(p.w_lh, in_l, "low-to-high");
    if (use_ll) detail::check_path_channels(p.w_ll, in_l, "low-to-low");
    if (use_hl) detail::check_path_channels(p.w_hl, in_h, "high-to-low");
    if (use_hh && use_lh && p.w_hh.value().dim(0) != p.w_lh.value().dim(0))
        throw InvalidArgument("octconv: inconsistent high-branch output channels");
    if (use_ll && use_hl && p.w_ll.value().dim(0) != p.w_hl.value().dim(0))
        throw InvalidArgument("octconv: inconsistent low-branch output channels");

    Var<T> empty_bias;
    Var<T> y_high, y_low;
    if (out_h > 0) {
        if (use_hh) y_high = conv2d(x.high, p.w_hh, empty_bias, p.stride, p.pad, 1);
        if (use_lh) {
            Var<T> up = upsample2(x.low);
            Var<T> lh = conv2d(up, p.w_lh, empty_bias, p.stride, p.pad, 1);
            y_high = y_high.defined() ? add(y_high, lh) : lh;
        }
        if (!y_high.defined()) throw InvalidArgument("octconv: no inputs feed the high output branch");
        if (p.b_h.defined() && p.b_h.numel() > 0) y_high = add_channel_bias(y_high, p.b_h);
    }
    if (out_l > 0) {
        if (use_ll) y_low = conv2d(x.low, p.w_ll, empty_bias, p.stride, p.pad, 1);
        if (use_hl) {
            Var<T> down = pool2(x.high);
            Var<T> hl = conv2d(down, p.w_hl, empty_bias, p.stride, p.pad, 1);
            y_low = y_low.defined() ? add(y_low, hl) : hl;
        }
        if (!y_low.defined()) throw InvalidArgument("octconv: no inputs feed the low output branch");
        if (p.b_l.defined() && p.b_l.numel() > 0) y_low = add_channel_bias(y_low, p.b_l);
    }

    // Fill in the empty branch with matching spatial metadata.
    if (!y_high.defined()) {
        const auto& ls = y_low.value().shape;
        y_high = constant(Tensor<T>(Shape{ls[0], 0, ls[2] * 2, ls[3] * 2}));
    }
    if (!y_low.defined()) {
        const auto& hs = y_high.value().shape;
        y_low = constant(Tensor<T>(Shape{hs[0], 0, hs[2] / 2, hs[3] / 2}));
    }
    OctavePair<T> out{y_high, y_low};
    out.validate("octconv output");
    return out;
}

}  // namespace aesfa
