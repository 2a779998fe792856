#include <doctest.h>

#include "aesfa/kernel_prediction.hpp"
#include "fixtures.hpp"

using namespace aesfa;

namespace {

PredictorWeights<float> default_predictors(uint64_t seed = 0) {
    Rng rng(hash_seed({seed, 0x9e3ULL}));
    return PredictorWeights<float>::make({512, 256, 128}, 0.5, 8, 256, rng);
}

AestheticDescriptor<float> random_descriptor(int batch, uint64_t seed) {
    AestheticDescriptor<float> d;
    d.w_high = constant(fixtures::random_tensor<float>(Shape{batch, 256, 3, 3}, seed));
    d.w_low = constant(fixtures::random_tensor<float>(Shape{batch, 256, 3, 3}, seed + 1));
    return d;
}

}  // namespace

TEST_CASE("predicted kernel shapes follow the layer channel plan") {
    auto pred = default_predictors();
    auto d = random_descriptor(1, 1);

    auto k1 = predict_kernels(d, 1, Frequency::High, pred);
    CHECK(k1.spatial.shape() == Shape{1, 256, 32, 3, 3});
    CHECK(k1.pointwise.shape() == Shape{1, 256, 32, 1, 1});
    CHECK(k1.bias.shape() == Shape{1, 256});

    auto k3 = predict_kernels(d, 3, Frequency::Low, pred);
    CHECK(k3.spatial.shape() == Shape{1, 64, 8, 3, 3});
    CHECK(k3.pointwise.shape() == Shape{1, 64, 8, 1, 1});
    CHECK(k3.bias.shape() == Shape{1, 64});

    // Batch covariance across sizes 1..4 and both frequencies.
    for (int b = 1; b <= 4; ++b) {
        auto db = random_descriptor(b, 100 + (uint64_t)b);
        for (int layer = 1; layer <= 3; ++layer)
            for (auto freq : {Frequency::High, Frequency::Low}) {
                auto k = predict_kernels(db, layer, freq, pred);
                const int c = 256 >> (layer - 1);
                CHECK(k.spatial.shape() == Shape{b, c, c / 8, 3, 3});
                CHECK(k.pointwise.shape() == Shape{b, c, c / 8, 1, 1});
                CHECK(k.bias.shape() == Shape{b, c});
            }
    }
}

TEST_CASE("layer out of range is rejected") {
    auto pred = default_predictors();
    auto d = random_descriptor(1, 2);
    CHECK_THROWS_AS((void)predict_kernels(d, 0, Frequency::High, pred), InvalidArgument);
    CHECK_THROWS_AS((void)predict_kernels(d, 4, Frequency::High, pred), InvalidArgument);
}

TEST_CASE("predict_all: ordering, bitwise agreement, consistent groups") {
    auto pred = default_predictors();
    auto d = random_descriptor(1, 3);
    auto all = predict_all(d, pred);
    REQUIRE(all.size() == 6);

    auto k1h = predict_kernels(d, 1, Frequency::High, pred);
    CHECK(all[0].spatial.value().data == k1h.spatial.value().data);
    CHECK(all[0].pointwise.value().data == k1h.pointwise.value().data);
    CHECK(all[0].bias.value().data == k1h.bias.value().data);
    auto k2l = predict_kernels(d, 2, Frequency::Low, pred);
    CHECK(all[3].spatial.value().data == k2l.spatial.value().data);

    for (const auto& k : all) CHECK(k.groups == 8);
}

TEST_CASE("distinct styles give distinct kernels under seeded weights") {
    auto pred = default_predictors(7);
    auto d1 = random_descriptor(1, 40);
    auto d2 = random_descriptor(1, 41);
    auto a = predict_all(d1, pred);
    auto b = predict_all(d2, pred);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].spatial.value().data != b[i].spatial.value().data) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("descriptor shape is validated") {
    auto pred = default_predictors();
    AestheticDescriptor<float> bad;
    bad.w_high = constant(fixtures::random_tensor<float>(Shape{1, 256, 4, 4}, 50));
    bad.w_low = bad.w_high;
    CHECK_THROWS_AS((void)predict_kernels(bad, 1, Frequency::High, pred), InvalidArgument);
}
