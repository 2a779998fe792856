#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "aesfa/autograd.hpp"
#include "aesfa/parallel.hpp"
#include "aesfa/tensor.hpp"

namespace aesfa {

// ---------------------------------------------------------------------------
// Raw tensor kernels (no tape). The conv kernels accumulate into per-plane
// buffers in a fixed loop order, so results are bitwise reproducible
// regardless of worker count: every output element is owned by one loop.
// ---------------------------------------------------------------------------

namespace detail {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    const int span = in + 2 * pad - k;
    if (span < 0) return -1;
    return span / stride + 1;
}

// Valid output-x range for a kernel column: 0 <= ox*stride + kx - pad < W.
inline void ox_range(int W, int OW, int stride, int kx, int pad, int& ox0, int& ox1) {
    int lo = pad - kx;
    ox0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
    int hi = W - 1 + pad - kx;
    ox1 = hi < 0 ? -1 : std::min(OW - 1, hi / stride);
}

}  // namespace detail

template <typename T>
void conv2d_shape_check(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride, int pad,
                        int groups) {
    check_4d(x, "conv2d input");
    check_4d(w, "conv2d weight");
    if (stride < 1 || pad < 0 || groups < 1) throw InvalidArgument("conv2d: bad stride/pad/groups");
    const int cin = x.dim(1), cout = w.dim(0);
    if (cin % groups != 0 || cout % groups != 0)
        throw InvalidArgument("conv2d: groups must divide channel counts");
    if (w.dim(1) != cin / groups)
        throw InvalidArgument("conv2d: weight expects " + std::to_string(w.dim(1) * groups) + " input channels, got " +
                              std::to_string(cin));
    if (bias && bias->defined() && bias->numel() != cout) throw InvalidArgument("conv2d: bias size mismatch");
    if (detail::conv_out_dim(x.dim(2), w.dim(2), stride, pad) < 1 ||
        detail::conv_out_dim(x.dim(3), w.dim(3), stride, pad) < 1)
        throw InvalidArgument("conv2d: kernel larger than padded input");
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, int stride, int pad,
                         int groups) {
    conv2d_shape_check(x, w, bias, stride, pad, groups);
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int OH = detail::conv_out_dim(H, kh, stride, pad);
    const int OW = detail::conv_out_dim(W, kw, stride, pad);
    const int cing = groups ? Cin / groups : 0;
    const int coutg = Cout / groups;

    Tensor<T> out(Shape{N, Cout, OH, OW});
    const int64_t planes = static_cast<int64_t>(N) * Cout;
    parallel_for(planes, [&](int64_t pb, int64_t pe) {
        for (int64_t p = pb; p < pe; ++p) {
            const int n = static_cast<int>(p / Cout);
            const int co = static_cast<int>(p % Cout);
            const int g = coutg ? co / coutg : 0;
            T* op = out.ptr() + p * OH * OW;
            if (bias && bias->defined()) {
                const T bv = bias->data[static_cast<size_t>(co)];
                std::fill(op, op + static_cast<int64_t>(OH) * OW, bv);
            }
            for (int ci_l = 0; ci_l < cing; ++ci_l) {
                const int ci = g * cing + ci_l;
                const T* xin = x.ptr() + (static_cast<int64_t>(n) * Cin + ci) * H * W;
                const T* wrow = w.ptr() + (static_cast<int64_t>(co) * cing + ci_l) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wv = wrow[ky * kw + kx];
                        int ox0, ox1;
                        detail::ox_range(W, OW, stride, kx, pad, ox0, ox1);
                        if (ox1 < ox0) continue;
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            const T* xrow = xin + static_cast<int64_t>(iy) * W;
                            T* orow = op + static_cast<int64_t>(oy) * OW;
                            if (stride == 1) {
                                const T* xoff = xrow + kx - pad;
                                for (int ox = ox0; ox <= ox1; ++ox) orow[ox] += wv * xoff[ox];
                            } else {
                                for (int ox = ox0; ox <= ox1; ++ox) orow[ox] += wv * xrow[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gout, const Tensor<T>& w, const Shape& x_shape, int stride, int pad,
                                int groups) {
    const int N = x_shape[0], Cin = x_shape[1], H = x_shape[2], W = x_shape[3];
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int OH = gout.dim(2), OW = gout.dim(3);
    const int cing = Cin / groups, coutg = Cout / groups;

    Tensor<T> dx(x_shape);
    const int64_t planes = static_cast<int64_t>(N) * Cin;
    parallel_for(planes, [&](int64_t pb, int64_t pe) {
        for (int64_t p = pb; p < pe; ++p) {
            const int n = static_cast<int>(p / Cin);
            const int ci = static_cast<int>(p % Cin);
            const int g = cing ? ci / cing : 0;
            const int ci_l = cing ? ci % cing : 0;
            T* dxp = dx.ptr() + p * H * W;
            for (int co = g * coutg; co < (g + 1) * coutg; ++co) {
                const T* gop = gout.ptr() + (static_cast<int64_t>(n) * Cout + co) * OH * OW;
                const T* wrow = w.ptr() + (static_cast<int64_t>(co) * cing + ci_l) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wv = wrow[ky * kw + kx];
                        int ox0, ox1;
                        detail::ox_range(W, OW, stride, kx, pad, ox0, ox1);
                        if (ox1 < ox0) continue;
                        for (int oy = 0; oy < OH; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            T* dxrow = dxp + static_cast<int64_t>(iy) * W;
                            const T* gorow = gop + static_cast<int64_t>(oy) * OW;
                            if (stride == 1) {
                                T* dxoff = dxrow + kx - pad;
                                for (int ox = ox0; ox <= ox1; ++ox) dxoff[ox] += wv * gorow[ox];
                            } else {
                                for (int ox = ox0; ox <= ox1; ++ox) dxrow[ox * stride + kx - pad] += wv * gorow[ox];
                            }
                        }
                    }
                }
            }
        }
    });
    return dx;
}

template <typename T>
Tensor<T> conv2d_backward_weight(const Tensor<T>& gout, const Tensor<T>& x, const Shape& w_shape, int stride, int pad,
                                 int groups) {
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w_shape[0], kh = w_shape[2], kw = w_shape[3];
    const int OH = gout.dim(2), OW = gout.dim(3);
    const int cing = w_shape[1], coutg = Cout / groups;

    Tensor<T> dw(w_shape);
    parallel_for(Cout, [&](int64_t cb, int64_t ce) {
        for (int64_t co = cb; co < ce; ++co) {
            const int g = coutg ? static_cast<int>(co) / coutg : 0;
            for (int ci_l = 0; ci_l < cing; ++ci_l) {
                const int ci = g * cing + ci_l;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        int ox0, ox1;
                        detail::ox_range(W, OW, stride, kx, pad, ox0, ox1);
                        T acc = T(0);
                        if (ox1 >= ox0) {
                            for (int n = 0; n < N; ++n) {
                                const T* xin = x.ptr() + (static_cast<int64_t>(n) * Cin + ci) * H * W;
                                const T* gop = gout.ptr() + (static_cast<int64_t>(n) * Cout + co) * OH * OW;
                                for (int oy = 0; oy < OH; ++oy) {
                                    const int iy = oy * stride + ky - pad;
                                    if (iy < 0 || iy >= H) continue;
                                    const T* xrow = xin + static_cast<int64_t>(iy) * W;
                                    const T* gorow = gop + static_cast<int64_t>(oy) * OW;
                                    if (stride == 1) {
                                        const T* xoff = xrow + kx - pad;
                                        for (int ox = ox0; ox <= ox1; ++ox) acc += xoff[ox] * gorow[ox];
                                    } else {
                                        for (int ox = ox0; ox <= ox1; ++ox)
                                            acc += xrow[ox * stride + kx - pad] * gorow[ox];
                                    }
                                }
                            }
                        }
                        dw.data[static_cast<size_t>(((co * cing + ci_l) * kh + ky) * kw + kx)] = acc;
                    }
                }
            }
        }
    });
    return dw;
}

template <typename T>
Tensor<T> conv2d_backward_bias(const Tensor<T>& gout) {
    const int N = gout.dim(0), C = gout.dim(1);
    const int64_t hw = static_cast<int64_t>(gout.dim(2)) * gout.dim(3);
    Tensor<T> db(Shape{C});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* p = gout.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
            T acc = T(0);
            for (int64_t i = 0; i < hw; ++i) acc += p[i];
            db.data[static_cast<size_t>(c)] += acc;
        }
    }
    return db;
}

// ---------------------------------------------------------------------------
// Tape-recording ops.
// ---------------------------------------------------------------------------

template <typename T>
Var<T> constant(Tensor<T> v) {
    return Var<T>(std::move(v), false);
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad, int groups) {
    const Tensor<T>* bias = (b.defined() && b.numel() > 0) ? &b.value() : nullptr;
    Tensor<T> out = conv2d_forward(x.value(), w.value(), bias, stride, pad, groups);
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    return Var<T>::from_op(std::move(out), {x, w, b}, [xn, wn, bn, stride, pad, groups](VarNode<T>& self) {
        if (xn->requires_grad) {
            Tensor<T> dx = conv2d_backward_input(self.grad, wn->value, xn->value.shape, stride, pad, groups);
            Tensor<T>& gx = xn->ensure_grad();
            for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += dx.data[i];
        }
        if (wn->requires_grad) {
            Tensor<T> dw = conv2d_backward_weight(self.grad, xn->value, wn->value.shape, stride, pad, groups);
            Tensor<T>& gw = wn->ensure_grad();
            for (size_t i = 0; i < gw.data.size(); ++i) gw.data[i] += dw.data[i];
        }
        if (bn && bn->requires_grad) {
            Tensor<T> db = conv2d_backward_bias(self.grad);
            Tensor<T>& gb = bn->ensure_grad();
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += db.data[i];
        }
    });
}

// Convolution whose weights carry a leading batch dimension: sample n of x is
// convolved with kernel slice n. Used for style-predicted kernels. Stride 1.
template <typename T>
Var<T> conv2d_per_sample(const Var<T>& x, const Var<T>& w5, const Var<T>& b2, int pad, int groups) {
    check_4d(x.value(), "conv2d_per_sample input");
    if (w5.value().ndim() != 5) throw InvalidArgument("conv2d_per_sample: weight must be 5-D [N,Cout,Cin/g,kh,kw]");
    const int N = x.value().dim(0);
    if (w5.value().dim(0) != N) throw InvalidArgument("conv2d_per_sample: batch mismatch between input and kernels");
    if (b2.defined() && b2.numel() > 0 && (b2.value().ndim() != 2 || b2.value().dim(0) != N))
        throw InvalidArgument("conv2d_per_sample: bias must be [N,Cout]");

    const int Cin = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    const int Cout = w5.value().dim(1), kh = w5.value().dim(3), kw = w5.value().dim(4);
    Shape wshape{Cout, w5.value().dim(2), kh, kw};
    const int64_t wsz = shape_numel(wshape);

    auto sample_x = [Cin, H, W](const Tensor<T>& t, int n) {
        Tensor<T> s(Shape{1, Cin, H, W});
        std::copy_n(t.ptr() + static_cast<int64_t>(n) * Cin * H * W, s.numel(), s.ptr());
        return s;
    };
    auto sample_w = [wshape, wsz](const Tensor<T>& t, int n) {
        Tensor<T> s(wshape);
        std::copy_n(t.ptr() + static_cast<int64_t>(n) * wsz, wsz, s.ptr());
        return s;
    };

    // Forward: per-sample planes are independent.
    Tensor<T> out;
    {
        const bool has_bias = b2.defined() && b2.numel() > 0;
        for (int n = 0; n < N; ++n) {
            Tensor<T> xs = sample_x(x.value(), n);
            Tensor<T> ws = sample_w(w5.value(), n);
            Tensor<T> bs;
            if (has_bias) {
                bs = Tensor<T>(Shape{Cout});
                std::copy_n(b2.value().ptr() + static_cast<int64_t>(n) * Cout, Cout, bs.ptr());
            }
            Tensor<T> os = conv2d_forward(xs, ws, has_bias ? &bs : nullptr, 1, pad, groups);
            if (n == 0) out = Tensor<T>(Shape{N, Cout, os.dim(2), os.dim(3)});
            std::copy_n(os.ptr(), os.numel(), out.ptr() + static_cast<int64_t>(n) * os.numel());
        }
        if (N == 0) throw InvalidArgument("conv2d_per_sample: empty batch");
    }

    auto xn = x.node();
    auto wn = w5.node();
    auto bn = (b2.defined() && b2.numel() > 0) ? b2.node() : nullptr;
    return Var<T>::from_op(std::move(out), {x, w5, b2}, [=](VarNode<T>& self) {
        const int OH = self.value.dim(2), OW = self.value.dim(3);
        for (int n = 0; n < N; ++n) {
            Tensor<T> gs(Shape{1, Cout, OH, OW});
            std::copy_n(self.grad.ptr() + static_cast<int64_t>(n) * Cout * OH * OW, gs.numel(), gs.ptr());
            Tensor<T> ws = sample_w(wn->value, n);
            if (xn->requires_grad) {
                Tensor<T> dx = conv2d_backward_input(gs, ws, Shape{1, Cin, H, W}, 1, pad, groups);
                Tensor<T>& gx = xn->ensure_grad();
                T* dst = gx.ptr() + static_cast<int64_t>(n) * Cin * H * W;
                for (int64_t i = 0; i < dx.numel(); ++i) dst[i] += dx.data[static_cast<size_t>(i)];
            }
            if (wn->requires_grad) {
                Tensor<T> xs = sample_x(xn->value, n);
                Tensor<T> dw = conv2d_backward_weight(gs, xs, wshape, 1, pad, groups);
                Tensor<T>& gw = wn->ensure_grad();
                T* dst = gw.ptr() + static_cast<int64_t>(n) * wsz;
                for (int64_t i = 0; i < wsz; ++i) dst[i] += dw.data[static_cast<size_t>(i)];
            }
            if (bn && bn->requires_grad) {
                Tensor<T> db = conv2d_backward_bias(gs);
                Tensor<T>& gb = bn->ensure_grad();
                T* dst = gb.ptr() + static_cast<int64_t>(n) * Cout;
                for (int c = 0; c < Cout; ++c) dst[c] += db.data[static_cast<size_t>(c)];
            }
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!same_shape(a.value(), b.value())) throw InvalidArgument("add: shape mismatch");
    Tensor<T> out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    auto an = a.node();
    auto bn = b.node();
    return Var<T>::from_op(std::move(out), {a, b}, [an, bn](VarNode<T>& self) {
        if (an->requires_grad) {
            Tensor<T>& g = an->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
        if (bn->requires_grad) {
            Tensor<T>& g = bn->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data) v *= s;
    auto an = a.node();
    return Var<T>::from_op(std::move(out), {a}, [an, s](VarNode<T>& self) {
        if (!an->requires_grad) return;
        Tensor<T>& g = an->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += s * self.grad.data[i];
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data) v += s;
    auto an = a.node();
    return Var<T>::from_op(std::move(out), {a}, [an](VarNode<T>& self) {
        if (!an->requires_grad) return;
        Tensor<T>& g = an->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    });
}

// Elementwise quotient for 1-element tensors.
template <typename T>
Var<T> div_scalars(const Var<T>& num, const Var<T>& den) {
    if (num.numel() != 1 || den.numel() != 1) throw InvalidArgument("div_scalars: scalar inputs required");
    const T nv = num.value().data[0], dv = den.value().data[0];
    Tensor<T> out = Tensor<T>::scalar(nv / dv);
    auto nn = num.node();
    auto dn = den.node();
    return Var<T>::from_op(std::move(out), {num, den}, [nn, dn, nv, dv](VarNode<T>& self) {
        const T g = self.grad.data[0];
        if (nn->requires_grad) nn->ensure_grad().data[0] += g / dv;
        if (dn->requires_grad) dn->ensure_grad().data[0] -= g * nv / (dv * dv);
    });
}

template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
    check_4d(x.value(), "add_channel_bias");
    const int C = x.value().dim(1);
    if (b.numel() != C) throw InvalidArgument("add_channel_bias: bias size mismatch");
    const int N = x.value().dim(0);
    const int64_t hw = static_cast<int64_t>(x.value().dim(2)) * x.value().dim(3);
    Tensor<T> out = x.value();
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            T* p = out.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
            const T bv = b.value().data[static_cast<size_t>(c)];
            for (int64_t i = 0; i < hw; ++i) p[i] += bv;
        }
    auto xn = x.node();
    auto bn = b.node();
    return Var<T>::from_op(std::move(out), {x, b}, [xn, bn, N, C, hw](VarNode<T>& self) {
        if (xn->requires_grad) {
            Tensor<T>& g = xn->ensure_grad();
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
        if (bn->requires_grad) {
            Tensor<T>& g = bn->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const T* p = self.grad.ptr() + (static_cast<int64_t>(n) * C + c) * hw;
                    T acc = T(0);
                    for (int64_t i = 0; i < hw; ++i) acc += p[i];
                    g.data[static_cast<size_t>(c)] += acc;
                }
        }
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out = x.value();
    for (auto& v : out.data)
        if (v < T(0)) v *= slope;
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn, slope](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        const auto& xv = xn->value.data;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * (xv[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data)
        if (v < T(0)) v = T(0);
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        const auto& xv = xn->value.data;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (xv[i] > T(0)) g.data[i] += self.grad.data[i];
    });
}

template <typename T>
Var<T> clamp01(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data) v = std::min(T(1), std::max(T(0), v));
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        const auto& xv = xn->value.data;
        for (size_t i = 0; i < g.data.size(); ++i)
            if (xv[i] > T(0) && xv[i] < T(1)) g.data[i] += self.grad.data[i];
    });
}

// 2x2 mean pooling, stride 2. Requires even spatial dims.
template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
    check_4d(x.value(), "avg_pool2");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw InvalidArgument("avg_pool2: spatial dims must be even, got " + shape_str(x.value().shape));
    const int OH = H / 2, OW = W / 2;
    Tensor<T> out(Shape{N, C, OH, OW});
    const int64_t planes = static_cast<int64_t>(N) * C;
    for (int64_t p = 0; p < planes; ++p) {
        const T* xp = x.value().ptr() + p * H * W;
        T* op = out.ptr() + p * OH * OW;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                const T* r0 = xp + static_cast<int64_t>(2 * oy) * W + 2 * ox;
                op[static_cast<int64_t>(oy) * OW + ox] = (r0[0] + r0[1] + r0[W] + r0[W + 1]) * T(0.25);
            }
    }
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn, planes, H, W, OH, OW](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        for (int64_t p = 0; p < planes; ++p) {
            T* gp = g.ptr() + p * H * W;
            const T* sp = self.grad.ptr() + p * OH * OW;
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    const T gv = sp[static_cast<int64_t>(oy) * OW + ox] * T(0.25);
                    T* r0 = gp + static_cast<int64_t>(2 * oy) * W + 2 * ox;
                    r0[0] += gv;
                    r0[1] += gv;
                    r0[W] += gv;
                    r0[W + 1] += gv;
                }
        }
    });
}

// 2x2 max pooling, stride 2 (used by the perceptual pyramid).
template <typename T>
Var<T> max_pool2(const Var<T>& x) {
    check_4d(x.value(), "max_pool2");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw InvalidArgument("max_pool2: spatial dims must be even");
    const int OH = H / 2, OW = W / 2;
    Tensor<T> out(Shape{N, C, OH, OW});
    auto argmax = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(out.numel()));
    const int64_t planes = static_cast<int64_t>(N) * C;
    for (int64_t p = 0; p < planes; ++p) {
        const T* xp = x.value().ptr() + p * H * W;
        T* op = out.ptr() + p * OH * OW;
        int32_t* ap = argmax->data() + p * OH * OW;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                const int64_t base = static_cast<int64_t>(2 * oy) * W + 2 * ox;
                const int64_t cand[4] = {base, base + 1, base + W, base + W + 1};
                int best = 0;
                for (int i = 1; i < 4; ++i)
                    if (xp[cand[i]] > xp[cand[best]]) best = i;
                op[static_cast<int64_t>(oy) * OW + ox] = xp[cand[best]];
                ap[static_cast<int64_t>(oy) * OW + ox] = static_cast<int32_t>(cand[best]);
            }
    }
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn, argmax, planes, H, W, OH, OW](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        const int64_t ohw = static_cast<int64_t>(OH) * OW;
        for (int64_t p = 0; p < planes; ++p) {
            T* gp = g.ptr() + p * H * W;
            const T* sp = self.grad.ptr() + p * ohw;
            const int32_t* ap = argmax->data() + p * ohw;
            for (int64_t i = 0; i < ohw; ++i) gp[ap[i]] += sp[i];
        }
    });
}

// Nearest-neighbor x2 upsampling.
template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
    check_4d(x.value(), "upsample_nearest2");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    const int OH = H * 2, OW = W * 2;
    Tensor<T> out(Shape{N, C, OH, OW});
    const int64_t planes = static_cast<int64_t>(N) * C;
    for (int64_t p = 0; p < planes; ++p) {
        const T* xp = x.value().ptr() + p * H * W;
        T* op = out.ptr() + p * OH * OW;
        for (int y = 0; y < H; ++y) {
            const T* xrow = xp + static_cast<int64_t>(y) * W;
            T* o0 = op + static_cast<int64_t>(2 * y) * OW;
            T* o1 = o0 + OW;
            for (int xcol = 0; xcol < W; ++xcol) {
                const T v = xrow[xcol];
                o0[2 * xcol] = v;
                o0[2 * xcol + 1] = v;
                o1[2 * xcol] = v;
                o1[2 * xcol + 1] = v;
            }
        }
    }
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn, planes, H, W, OW](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        for (int64_t p = 0; p < planes; ++p) {
            T* gp = g.ptr() + p * H * W;
            const T* sp = self.grad.ptr() + p * static_cast<int64_t>(H) * W * 4;
            for (int y = 0; y < H; ++y) {
                const T* s0 = sp + static_cast<int64_t>(2 * y) * OW;
                const T* s1 = s0 + OW;
                T* grow = gp + static_cast<int64_t>(y) * W;
                for (int xcol = 0; xcol < W; ++xcol)
                    grow[xcol] += s0[2 * xcol] + s0[2 * xcol + 1] + s1[2 * xcol] + s1[2 * xcol + 1];
            }
        }
    });
}

// Adaptive mean pooling to (oh, ow); window i covers [i*H/oh, ceil((i+1)*H/oh)).
template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, int oh, int ow) {
    check_4d(x.value(), "adaptive_avg_pool");
    if (oh < 1 || ow < 1) throw InvalidArgument("adaptive_avg_pool: output dims must be positive");
    const int N = x.value().dim(0), C = x.value().dim(1), H = x.value().dim(2), W = x.value().dim(3);
    if (H < 1 || W < 1) throw InvalidArgument("adaptive_avg_pool: empty input");
    auto lo = [](int i, int in, int out) { return (i * in) / out; };
    auto hi = [](int i, int in, int out) { return ((i + 1) * in + out - 1) / out; };
    Tensor<T> out(Shape{N, C, oh, ow});
    const int64_t planes = static_cast<int64_t>(N) * C;
    for (int64_t p = 0; p < planes; ++p) {
        const T* xp = x.value().ptr() + p * H * W;
        T* op = out.ptr() + p * oh * ow;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                const int y0 = lo(i, H, oh), y1 = hi(i, H, oh);
                const int x0 = lo(j, W, ow), x1 = hi(j, W, ow);
                T acc = T(0);
                for (int y = y0; y < y1; ++y)
                    for (int xc = x0; xc < x1; ++xc) acc += xp[static_cast<int64_t>(y) * W + xc];
                op[static_cast<int64_t>(i) * ow + j] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
            }
    }
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn, planes, H, W, oh, ow, lo, hi](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        for (int64_t p = 0; p < planes; ++p) {
            T* gp = g.ptr() + p * H * W;
            const T* sp = self.grad.ptr() + p * oh * ow;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    const int y0 = lo(i, H, oh), y1 = hi(i, H, oh);
                    const int x0 = lo(j, W, ow), x1 = hi(j, W, ow);
                    const T gv = sp[static_cast<int64_t>(i) * ow + j] / static_cast<T>((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int xc = x0; xc < x1; ++xc) gp[static_cast<int64_t>(y) * W + xc] += gv;
                }
        }
    });
}

// [N,C,H,W] -> [N,C] channel means.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    check_4d(x.value(), "global_avg_pool");
    const int N = x.value().dim(0), C = x.value().dim(1);
    const int64_t hw = static_cast<int64_t>(x.value().dim(2)) * x.value().dim(3);
    if (hw == 0) throw InvalidArgument("global_avg_pool: empty spatial dims");
    Tensor<T> out(Shape{N, C});
    for (int64_t p = 0; p < static_cast<int64_t>(N) * C; ++p) {
        const T* xp = x.value().ptr() + p * hw;
        T acc = T(0);
        for (int64_t i = 0; i < hw; ++i) acc += xp[i];
        out.data[static_cast<size_t>(p)] = acc / static_cast<T>(hw);
    }
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn, N, C, hw](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        for (int64_t p = 0; p < static_cast<int64_t>(N) * C; ++p) {
            const T gv = self.grad.data[static_cast<size_t>(p)] / static_cast<T>(hw);
            T* gp = g.ptr() + p * hw;
            for (int64_t i = 0; i < hw; ++i) gp[i] += gv;
        }
    });
}

// Fully connected map: x [N,D] with weight [O,D] and optional bias [O].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    if (x.value().ndim() != 2 || w.value().ndim() != 2) throw InvalidArgument("linear: 2-D input and weight required");
    const int N = x.value().dim(0), D = x.value().dim(1), O = w.value().dim(0);
    if (w.value().dim(1) != D) throw InvalidArgument("linear: dimension mismatch");
    const bool has_bias = b.defined() && b.numel() > 0;
    if (has_bias && b.numel() != O) throw InvalidArgument("linear: bias size mismatch");
    Tensor<T> out(Shape{N, O});
    for (int n = 0; n < N; ++n) {
        const T* xr = x.value().ptr() + static_cast<int64_t>(n) * D;
        T* orow = out.ptr() + static_cast<int64_t>(n) * O;
        for (int o = 0; o < O; ++o) {
            const T* wr = w.value().ptr() + static_cast<int64_t>(o) * D;
            T acc = has_bias ? b.value().data[static_cast<size_t>(o)] : T(0);
            for (int d = 0; d < D; ++d) acc += xr[d] * wr[d];
            orow[o] = acc;
        }
    }
    auto xn = x.node();
    auto wn = w.node();
    auto bn = has_bias ? b.node() : nullptr;
    return Var<T>::from_op(std::move(out), {x, w, b}, [xn, wn, bn, N, D, O](VarNode<T>& self) {
        if (xn->requires_grad) {
            Tensor<T>& g = xn->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const T* sr = self.grad.ptr() + static_cast<int64_t>(n) * O;
                T* gr = g.ptr() + static_cast<int64_t>(n) * D;
                for (int o = 0; o < O; ++o) {
                    const T sv = sr[o];
                    const T* wr = wn->value.ptr() + static_cast<int64_t>(o) * D;
                    for (int d = 0; d < D; ++d) gr[d] += sv * wr[d];
                }
            }
        }
        if (wn->requires_grad) {
            Tensor<T>& g = wn->ensure_grad();
            for (int o = 0; o < O; ++o) {
                T* gr = g.ptr() + static_cast<int64_t>(o) * D;
                for (int n = 0; n < N; ++n) {
                    const T sv = self.grad.ptr()[static_cast<int64_t>(n) * O + o];
                    const T* xr = xn->value.ptr() + static_cast<int64_t>(n) * D;
                    for (int d = 0; d < D; ++d) gr[d] += sv * xr[d];
                }
            }
        }
        if (bn && bn->requires_grad) {
            Tensor<T>& g = bn->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int o = 0; o < O; ++o) g.data[static_cast<size_t>(o)] += self.grad.ptr()[static_cast<int64_t>(n) * O + o];
        }
    });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape s) {
    if (shape_numel(s) != x.numel()) throw InvalidArgument("reshape: element count mismatch");
    Tensor<T> out;
    out.shape = std::move(s);
    out.data = x.value().data;
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    });
}

// Copy of sample i with batch dim kept: [1, ...rest].
template <typename T>
Var<T> slice_batch(const Var<T>& x, int i) {
    const auto& xs = x.value().shape;
    if (xs.empty() || i < 0 || i >= xs[0]) throw InvalidArgument("slice_batch: index out of range");
    const int64_t per = x.numel() / xs[0];
    Shape os = xs;
    os[0] = 1;
    Tensor<T> out;
    out.shape = std::move(os);
    out.data.assign(x.value().data.begin() + static_cast<int64_t>(i) * per,
                    x.value().data.begin() + static_cast<int64_t>(i + 1) * per);
    auto xn = x.node();
    return Var<T>::from_op(std::move(out), {x}, [xn, i, per](VarNode<T>& self) {
        if (!xn->requires_grad) return;
        Tensor<T>& g = xn->ensure_grad();
        T* dst = g.ptr() + static_cast<int64_t>(i) * per;
        for (int64_t k = 0; k < per; ++k) dst[k] += self.grad.data[static_cast<size_t>(k)];
    });
}

// ---------------------------------------------------------------------------
// Exact feature distribution matching. Per (batch, channel), the output
// carries y's sorted values placed at x's rank positions; ties in x keep
// original index order. Locally the output is constant in x (ranks are
// discrete), so the backward routes gradients to y through the sort
// permutation and sends none to x.
// ---------------------------------------------------------------------------

template <typename T>
void efdm_fill(const T* x, const T* y, int64_t n, T* out, int64_t* y_index_of_out) {
    std::vector<int64_t> ix(static_cast<size_t>(n)), iy(static_cast<size_t>(n));
    std::iota(ix.begin(), ix.end(), 0);
    std::iota(iy.begin(), iy.end(), 0);
    std::stable_sort(ix.begin(), ix.end(), [x](int64_t a, int64_t b) { return x[a] < x[b]; });
    std::stable_sort(iy.begin(), iy.end(), [y](int64_t a, int64_t b) { return y[a] < y[b]; });
    for (int64_t r = 0; r < n; ++r) {
        out[ix[static_cast<size_t>(r)]] = y[iy[static_cast<size_t>(r)]];
        if (y_index_of_out) y_index_of_out[ix[static_cast<size_t>(r)]] = iy[static_cast<size_t>(r)];
    }
}

// Flat-vector form (1-D in, 1-D out), no tape.
template <typename T>
Tensor<T> efdm(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.numel() != y.numel()) throw InvalidArgument("efdm: length mismatch");
    Tensor<T> out;
    out.shape = x.shape;
    out.data.resize(x.data.size());
    efdm_fill(x.ptr(), y.ptr(), x.numel(), out.ptr(), static_cast<int64_t*>(nullptr));
    return out;
}

// Tape form over [N,C,H,W] (or any >=2-D shape; trailing dims flatten per channel).
template <typename T>
Var<T> efdm_match(const Var<T>& x, const Var<T>& y) {
    if (!same_shape(x.value(), y.value())) throw InvalidArgument("efdm_match: shape mismatch");
    if (x.value().ndim() < 2) throw InvalidArgument("efdm_match: need batch and channel dims");
    const int64_t channels = static_cast<int64_t>(x.value().dim(0)) * x.value().dim(1);
    const int64_t spatial = channels > 0 ? x.numel() / channels : 0;
    Tensor<T> out;
    out.shape = x.value().shape;
    out.data.resize(x.value().data.size());
    auto perm = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
    for (int64_t c = 0; c < channels; ++c) {
        const int64_t base = c * spatial;
        efdm_fill(x.value().ptr() + base, y.value().ptr() + base, spatial, out.ptr() + base, perm->data() + base);
        for (int64_t i = 0; i < spatial; ++i) (*perm)[static_cast<size_t>(base + i)] += base;
    }
    auto yn = y.node();
    return Var<T>::from_op(std::move(out), {x, y}, [yn, perm](VarNode<T>& self) {
        if (!yn->requires_grad) return;
        Tensor<T>& g = yn->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i) g.data[static_cast<size_t>((*perm)[i])] += self.grad.data[i];
    });
}

// Euclidean distance ||a - b||_2 over all elements, as a scalar node.
template <typename T>
Var<T> l2_distance(const Var<T>& a, const Var<T>& b) {
    if (!same_shape(a.value(), b.value())) throw InvalidArgument("l2_distance: shape mismatch");
    double acc = 0.0;
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    for (size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    const T dist = static_cast<T>(std::sqrt(acc));
    auto an = a.node();
    auto bn = b.node();
    return Var<T>::from_op(Tensor<T>::scalar(dist), {a, b}, [an, bn, dist](VarNode<T>& self) {
        const T g = self.grad.data[0];
        const T denom = std::max(dist, static_cast<T>(1e-30));
        const auto& av = an->value.data;
        const auto& bv = bn->value.data;
        if (an->requires_grad) {
            Tensor<T>& ga = an->ensure_grad();
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g * (av[i] - bv[i]) / denom;
        }
        if (bn->requires_grad) {
            Tensor<T>& gb = bn->ensure_grad();
            for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g * (av[i] - bv[i]) / denom;
        }
    });
}

template <typename T>
T scalar_value(const Var<T>& v) {
    if (v.numel() != 1) throw InvalidArgument("scalar_value: not a scalar");
    return v.value().data[0];
}

}  // namespace aesfa
