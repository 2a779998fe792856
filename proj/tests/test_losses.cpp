#include <doctest.h>

#include "aesfa/losses.hpp"
#include "aesfa/model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace aesfa;

namespace {

// Eq-style brute force for the contrastive term: enumerate candidates, pick
// the k smallest selection distances, then accumulate num/den ratios from
// independently matched features. All reductions in double.
double contrastive_brute_force(const Tensor<float>& outputs, const Tensor<float>& styles,
                               const EncoderWeights<float>& enc, const PerceptualExtractor<float>& sel_ext, int k) {
    GradGuard guard(false);
    const int B = outputs.dim(0);

    auto branch_tensors = [&](const Tensor<float>& batch) {
        std::vector<std::vector<Tensor<float>>> per_sample(static_cast<size_t>(B));
        auto feats = encoder_features(enc, constant(batch));
        for (int i = 0; i < B; ++i)
            for (const auto& pair : feats) {
                for (const Var<float>* br : {&pair.high, &pair.low}) {
                    const auto& t = br->value();
                    if (t.dim(1) == 0) continue;
                    Tensor<float> s(Shape{1, t.dim(1), t.dim(2), t.dim(3)});
                    std::copy_n(t.ptr() + (int64_t)i * s.numel(), s.numel(), s.ptr());
                    per_sample[(size_t)i].push_back(std::move(s));
                }
            }
        return per_sample;
    };

    auto norm_to_matched = [](const Tensor<float>& x, const Tensor<float>& y) {
        const int C = x.dim(1);
        const int64_t sp = (int64_t)x.dim(2) * x.dim(3);
        double acc = 0;
        for (int c = 0; c < C; ++c) {
            std::vector<float> xc(x.data.begin() + c * sp, x.data.begin() + (c + 1) * sp);
            std::vector<float> yc(y.data.begin() + c * sp, y.data.begin() + (c + 1) * sp);
            auto matched = oracle::efdm_sort_scatter(xc, yc);
            for (int64_t i = 0; i < sp; ++i) {
                const double d = (double)xc[(size_t)i] - matched[(size_t)i];
                acc += d * d;
            }
        }
        return std::sqrt(acc);
    };

    // Selection distances under the selection extractor.
    auto sel_dist = [&](const Tensor<float>& out_img, const Tensor<float>& style_img) {
        auto fo = sel_ext.features(out_img, 4);
        auto fs = sel_ext.features(style_img, 4);
        double acc = 0;
        for (size_t n = 0; n < fo.size(); ++n) acc += norm_to_matched(fo[n].value(), fs[n].value());
        return acc;
    };
    auto slice = [&](const Tensor<float>& batch, int i) {
        Tensor<float> s(Shape{1, batch.dim(1), batch.dim(2), batch.dim(3)});
        std::copy_n(batch.ptr() + (int64_t)i * s.numel(), s.numel(), s.ptr());
        return s;
    };

    std::vector<std::vector<int>> negs((size_t)B);
    for (int i = 0; i < B; ++i) {
        std::vector<std::pair<double, int>> cand;
        for (int j = 0; j < B; ++j) {
            if (j == i) continue;
            cand.emplace_back(sel_dist(slice(outputs, i), slice(styles, j)), j);
        }
        std::stable_sort(cand.begin(), cand.end(), [](auto& a, auto& b) { return a.first < b.first; });
        for (int r = 0; r < k; ++r) negs[(size_t)i].push_back(cand[(size_t)r].second);
    }

    auto fo = branch_tensors(outputs);
    auto fs = branch_tensors(styles);
    double total = 0;
    const size_t levels = fo[0].size();
    for (size_t l = 0; l < levels; ++l)
        for (int i = 0; i < B; ++i) {
            const double num = norm_to_matched(fo[(size_t)i][l], fs[(size_t)i][l]);
            double den = 0;
            for (int j : negs[(size_t)i]) den += norm_to_matched(fo[(size_t)i][l], fs[(size_t)j][l]);
            total += num / (den + 1e-8);
        }
    return total;
}

}  // namespace

TEST_CASE("efdm flat op: worked example, identity, constant target") {
    Tensor<float> x(Shape{3});
    x.data = {3, 1, 2};
    Tensor<float> y(Shape{3});
    y.data = {10, 30, 20};
    Tensor<float> out = efdm(x, y);
    CHECK(out.data == std::vector<float>{30, 10, 20});

    auto r = fixtures::random_tensor<float>(Shape{64}, 1);
    Tensor<float> same = efdm(r, r);
    CHECK(same.data == r.data);

    Tensor<float> c(Shape{64}, 0.7f);
    Tensor<float> flat = efdm(r, c);
    for (float v : flat.data) CHECK(v == 0.7f);

    Tensor<float> shorter(Shape{5});
    CHECK_THROWS_AS((void)efdm(r, shorter), InvalidArgument);
}

TEST_CASE("efdm: multiset preservation and rank order on random vectors") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(hash_seed({seed, 1000}));
        const int n = 1 + (int)rng.next_below(2000);
        auto x = fixtures::random_tensor<float>(Shape{n}, seed * 3 + 1);
        auto y = fixtures::random_tensor<float>(Shape{n}, seed * 3 + 2);
        Tensor<float> out = efdm(x, y);

        std::vector<float> a = out.data, b = y.data;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);  // bitwise multiset equality

        std::vector<int> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int p, int q) { return x.data[(size_t)p] < x.data[(size_t)q]; });
        for (int r = 1; r < n; ++r)
            CHECK(out.data[(size_t)idx[(size_t)r - 1]] <= out.data[(size_t)idx[(size_t)r]]);
    }
}

TEST_CASE("efdm ties break by original index order") {
    Tensor<float> x(Shape{4});
    x.data = {1, 1, 0, 1};
    Tensor<float> y(Shape{4});
    y.data = {4, 3, 2, 1};
    Tensor<float> out = efdm(x, y);
    // ranks: index 2 first, then indices 0,1,3 in order.
    CHECK(out.data == std::vector<float>{2, 3, 1, 4});
}

TEST_CASE("content loss: zero at identity, non-negative, norm oracle") {
    auto ext = PerceptualExtractor<float>::surrogate(5);
    auto img = fixtures::synthetic_image<float>(32, 32, 2);
    CHECK(content_loss(img, img, ext) == 0.0f);

    auto other = fixtures::synthetic_image<float>(32, 32, 3);
    const float lc = content_loss(img, other, ext);
    CHECK(lc >= 0.0f);

    // Recompute from the extracted stage-3 features.
    GradGuard guard(false);
    auto f1 = ext.features(img, 3).back();
    auto f2 = ext.features(other, 3).back();
    double acc = 0;
    for (size_t i = 0; i < f1.value().data.size(); ++i) {
        const double d = (double)f1.value().data[i] - f2.value().data[i];
        acc += d * d;
    }
    CHECK(std::fabs(lc - std::sqrt(acc)) <= 1e-6 * std::max(1.0, (double)std::fabs(lc)));

    Tensor<float> small(Shape{1, 3, 16, 16});
    CHECK_THROWS_AS((void)content_loss(img, small, ext), InvalidArgument);
}

TEST_CASE("style loss: zero at identity, matches sort-scatter + norm oracle") {
    auto ext = PerceptualExtractor<float>::surrogate(7);
    auto img = fixtures::synthetic_image<float>(32, 32, 4);
    CHECK(style_loss(img, img, ext) == 0.0f);

    auto out_img = fixtures::synthetic_image<float>(32, 32, 5);
    auto style_img = fixtures::synthetic_image<float>(32, 32, 6);
    const float ls = style_loss(out_img, style_img, ext);

    GradGuard guard(false);
    auto fo = ext.features(out_img, 4);
    auto fs = ext.features(style_img, 4);
    double want = 0;
    for (size_t n = 0; n < fo.size(); ++n) {
        const auto& a = fo[n].value();
        const auto& b = fs[n].value();
        const int C = a.dim(1);
        const int64_t sp = (int64_t)a.dim(2) * a.dim(3);
        double acc = 0;
        for (int c = 0; c < C; ++c) {
            std::vector<float> xc(a.data.begin() + c * sp, a.data.begin() + (c + 1) * sp);
            std::vector<float> yc(b.data.begin() + c * sp, b.data.begin() + (c + 1) * sp);
            auto matched = oracle::efdm_sort_scatter(xc, yc);
            for (int64_t i = 0; i < sp; ++i) {
                const double d = (double)xc[(size_t)i] - matched[(size_t)i];
                acc += d * d;
            }
        }
        want += std::sqrt(acc);
    }
    CHECK( (double)std::fabs(ls - want) <= 1e-5 * std::max(1.0, want));
}

TEST_CASE("select_negatives: contracts and exhaustive oracle") {
    auto ext = PerceptualExtractor<float>::surrogate(11);
    ContrastiveConfig<float> cfg{1, &ext};

    auto outputs2 = fixtures::image_batch<float>(2, 32, 32, 20);
    auto styles2 = fixtures::image_batch<float>(2, 32, 32, 21);
    auto sel = select_negatives(outputs2, styles2, cfg);
    CHECK(sel == std::vector<std::vector<int>>{{1}, {0}});

    // k = batch-1 returns all candidates in ascending distance order.
    auto outputs4 = fixtures::image_batch<float>(4, 32, 32, 22);
    auto styles4 = fixtures::image_batch<float>(4, 32, 32, 23);
    ContrastiveConfig<float> cfg3{3, &ext};
    auto sel3 = select_negatives(outputs4, styles4, cfg3);
    auto pair_dist = [&](const Tensor<float>& o, int i, const Tensor<float>& s, int j) {
        Tensor<float> oi(Shape{1, 3, 32, 32});
        std::copy_n(o.ptr() + (int64_t)i * oi.numel(), oi.numel(), oi.ptr());
        Tensor<float> sj(Shape{1, 3, 32, 32});
        std::copy_n(s.ptr() + (int64_t)j * sj.numel(), sj.numel(), sj.ptr());
        return style_loss(oi, sj, ext);
    };
    for (int i = 0; i < 4; ++i) {
        CHECK(sel3[(size_t)i].size() == 3);
        for (int j : sel3[(size_t)i]) CHECK(j != i);
        for (size_t r = 1; r < 3; ++r)
            CHECK(pair_dist(outputs4, i, styles4, sel3[(size_t)i][r - 1]) <=
                  pair_dist(outputs4, i, styles4, sel3[(size_t)i][r]));
    }

    // The selected negative is the exhaustive argmin.
    for (uint64_t seed = 0; seed < 5; ++seed) {
        auto o = fixtures::image_batch<float>(4, 32, 32, 100 + seed);
        auto s = fixtures::image_batch<float>(4, 32, 32, 200 + seed);
        auto picked = select_negatives(o, s, cfg);
        for (int i = 0; i < 4; ++i) {
            double best = 1e300;
            int best_j = -1;
            for (int j = 0; j < 4; ++j) {
                if (j == i) continue;
                Tensor<float> oi(Shape{1, 3, 32, 32});
                std::copy_n(o.ptr() + (int64_t)i * oi.numel(), oi.numel(), oi.ptr());
                Tensor<float> sj(Shape{1, 3, 32, 32});
                std::copy_n(s.ptr() + (int64_t)j * sj.numel(), sj.numel(), sj.ptr());
                const double d = style_loss(oi, sj, ext);
                if (d < best) {
                    best = d;
                    best_j = j;
                }
            }
            CHECK(picked[(size_t)i][0] == best_j);
        }
    }

    CHECK_THROWS_AS((void)select_negatives(fixtures::image_batch<float>(1, 32, 32, 30),
                                           fixtures::image_batch<float>(1, 32, 32, 31), cfg),
                    InvalidArgument);
}

TEST_CASE("a style identical to the positive is the nearest candidate when outputs match it") {
    auto ext = PerceptualExtractor<float>::surrogate(13);
    ContrastiveConfig<float> cfg{1, &ext};
    // Sample 0's output equals its own style; candidate style 2 is a copy of
    // style 0, so it must win the selection for sample 0.
    auto s0 = fixtures::synthetic_image<float>(32, 32, 40);
    auto s1 = fixtures::synthetic_image<float>(32, 32, 41);
    auto s2 = s0;
    auto s3 = fixtures::synthetic_image<float>(32, 32, 43);
    auto styles = fixtures::stack_batch<float>({s0, s1, s2, s3});
    auto outputs = fixtures::stack_batch<float>(
        {s0, fixtures::synthetic_image<float>(32, 32, 44), fixtures::synthetic_image<float>(32, 32, 45),
         fixtures::synthetic_image<float>(32, 32, 46)});
    auto sel = select_negatives(outputs, styles, cfg);
    CHECK(sel[0][0] == 2);
}

TEST_CASE("contrastive loss: zero when outputs equal positives, N*L*2 when negatives equal positives") {
    auto model = AesfaModel<float>::make(ModelConfig::micro(), 17);
    auto ext = PerceptualExtractor<float>::surrogate(17);
    ContrastiveConfig<float> cfg{1, &ext};

    auto styles = fixtures::image_batch<float>(3, 16, 16, 50);
    const float zero = aesthetic_contrastive_loss(styles, styles, model.aesthetic_encoder, cfg);
    CHECK(zero == 0.0f);

    // All styles identical: every negative equals the positive, each ratio 1.
    auto s = fixtures::synthetic_image<float>(16, 16, 51);
    auto same_styles = fixtures::stack_batch<float>({s, s, s});
    auto outputs = fixtures::image_batch<float>(3, 16, 16, 52);
    const float laes = aesthetic_contrastive_loss(outputs, same_styles, model.aesthetic_encoder, cfg);
    const int levels = model.cfg.encoder_blocks() + 1;
    CHECK(laes == doctest::Approx(3.0 * levels * 2).epsilon(1e-4));
}

TEST_CASE("contrastive loss matches the brute-force oracle") {
    auto model = AesfaModel<float>::make(ModelConfig::micro(), 19);
    auto ext = PerceptualExtractor<float>::surrogate(19);
    for (int k : {1, 2}) {
        ContrastiveConfig<float> cfg{k, &ext};
        auto outputs = fixtures::image_batch<float>(3, 16, 16, 60 + (uint64_t)k);
        auto styles = fixtures::image_batch<float>(3, 16, 16, 70 + (uint64_t)k);
        const float got = aesthetic_contrastive_loss(outputs, styles, model.aesthetic_encoder, cfg);
        const double want = contrastive_brute_force(outputs, styles, model.aesthetic_encoder, ext, k);
        CHECK((double)std::fabs(got - want) <= 1e-5 * std::max(1.0, want));
    }

    ContrastiveConfig<float> cfg{1, &ext};
    CHECK_THROWS_AS((void)aesthetic_contrastive_loss(fixtures::image_batch<float>(1, 16, 16, 80),
                                                     fixtures::image_batch<float>(1, 16, 16, 81),
                                                     model.aesthetic_encoder, cfg),
                    InvalidArgument);
}

TEST_CASE("total loss: worked example, zeros, linearity in the weights") {
    LossWeights<double> w;  // defaults 1, 10, 5
    CHECK(total_loss(2.0, 3.0, 4.0, w) == 52.0);
    CHECK(total_loss(0.0, 0.0, 0.0, w) == 0.0);

    Rng rng(hash_seed({99}));
    for (int i = 0; i < 10; ++i) {
        const double lc = rng.uniform(-5, 5), ls = rng.uniform(-5, 5), laes = rng.uniform(-5, 5);
        CHECK(total_loss(lc, ls, laes, w) == doctest::Approx(lc + 10 * ls + 5 * laes));
        LossWeights<double> w2{2 * w.lambda_c, w.lambda_s, w.lambda_aes};
        CHECK(total_loss(lc, ls, laes, w2) - total_loss(lc, ls, laes, w) == doctest::Approx(lc * w.lambda_c));
    }
}
