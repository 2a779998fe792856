#pragma once

// Seeded fixture builders shared across the test binaries.

#include <string>
#include <vector>

#include "aesfa/freq_ops.hpp"
#include "aesfa/rng.hpp"
#include "aesfa/tensor.hpp"

namespace fixtures {

using aesfa::Rng;
using aesfa::Shape;
using aesfa::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape s, uint64_t seed, T lo = T(-1), T hi = T(1)) {
    Rng rng(aesfa::hash_seed({seed, 0xf1e77ULL}));
    return Tensor<T>::random_uniform(std::move(s), rng, lo, hi);
}

// Smooth-ish synthetic image in [0,1]: sinusoid mixtures plus a little noise,
// different per seed. Good enough to stand in for photos and paintings.
template <typename T>
Tensor<T> synthetic_image(int h, int w, uint64_t seed) {
    Rng rng(aesfa::hash_seed({seed, 0x1a3ULL}));
    const double fx = 1.0 + rng.next_double() * 7.0;
    const double fy = 1.0 + rng.next_double() * 7.0;
    const double ph = rng.next_double() * 6.28318;
    Tensor<T> img(Shape{1, 3, h, w});
    for (int c = 0; c < 3; ++c) {
        const double cshift = 0.25 * c + rng.next_double() * 0.2;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double u = static_cast<double>(x) / w;
                const double v = static_cast<double>(y) / h;
                double val = 0.5 + 0.25 * std::sin(fx * 6.28318 * u + ph + cshift) +
                             0.2 * std::cos(fy * 6.28318 * v + 2 * ph) + 0.05 * (rng.next_double() - 0.5);
                val = std::min(1.0, std::max(0.0, val));
                img.at4(0, c, y, x) = static_cast<T>(val);
            }
    }
    return img;
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& singles) {
    const auto& s0 = singles.front().shape;
    Tensor<T> out(Shape{static_cast<int>(singles.size()), s0[1], s0[2], s0[3]});
    const int64_t per = singles.front().numel();
    for (size_t n = 0; n < singles.size(); ++n)
        std::copy(singles[n].data.begin(), singles[n].data.end(), out.data.begin() + static_cast<int64_t>(n) * per);
    return out;
}

template <typename T>
Tensor<T> image_batch(int n, int h, int w, uint64_t seed) {
    std::vector<Tensor<T>> singles;
    for (int i = 0; i < n; ++i) singles.push_back(synthetic_image<T>(h, w, aesfa::hash_seed({seed, (uint64_t)i})));
    return stack_batch(singles);
}

}  // namespace fixtures
