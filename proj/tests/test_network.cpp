#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "rwf/network.hpp"
#include "rwf/verify.hpp"

using namespace rwf;

TEST_CASE("config validation") {
    ModelConfig bad = ModelConfig::desk();
    bad.base_channels = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    ModelConfig bad2 = ModelConfig::desk();
    bad2.depths[1] = 0;
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
    CHECK_NOTHROW(ModelConfig::desk().validate());
    CHECK_NOTHROW(ModelConfig::rwf_t().validate());
}

TEST_CASE("zero head makes the network the identity") {
    Model model(ModelConfig::desk(), 1);
    for (double& v : model.param("head.weight").vec()) v = 0.0;
    Rng rng(2);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    ModelOutput out = model.forward(img);
    CHECK(std::memcmp(out.restored.data(), img.data(), img.size() * sizeof(double)) == 0);
}

TEST_CASE("padding and cropping: arbitrary sizes in, same sizes out") {
    Model model(ModelConfig::desk(), 3);
    Rng rng(4);
    Tensor img = random_tensor({3, 20, 28}, rng, 0.0, 1.0);
    ModelOutput out = model.forward(img);
    CHECK(out.restored.shape() == std::vector<int>({3, 20, 28}));
    REQUIRE(out.msr.size() == 3);
    CHECK(out.msr[0].shape() == std::vector<int>({3, 10, 14}));
    CHECK(out.msr[1].shape() == std::vector<int>({3, 5, 7}));
    CHECK(out.msr[2].shape() == std::vector<int>({3, 2, 3}));
    CHECK(out.restored.all_finite());
    CHECK_THROWS_AS(model.forward(Tensor::zeros({3, 2, 2})), ShapeError);
}

TEST_CASE("attention record covers both branches at every scale") {
    Model model(ModelConfig::desk(), 5);
    Rng rng(6);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    ModelOutput out = model.forward(img, true);
    bool saw_rwam = false, saw_swam = false;
    int max_scale = 0;
    for (const auto& e : out.record.entries) {
        saw_rwam |= e.branch == "rwam";
        saw_swam |= e.branch == "swam";
        max_scale = std::max(max_scale, e.scale);
    }
    CHECK(saw_rwam);
    CHECK(saw_swam);
    CHECK(max_scale >= 4);  // decoder entries tagged 4 + scale
}

TEST_CASE("gradients reach every parameter") {
    Model model(ModelConfig::desk(), 7);
    Rng rng(8);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    ModelOutput out = model.forward(img);
    Tensor loss = mean_all(mul(out.restored, out.restored));
    for (size_t i = 0; i < out.msr.size(); ++i)
        loss = add(loss, mean_all(mul(out.msr[i], out.msr[i])));
    loss.backward();
    int nonzero = 0, total = 0;
    for (auto& [name, p] : model.params()) {
        ++total;
        REQUIRE(p.grad().size() == p.size());
        for (double g : p.grad())
            if (g != 0.0) {
                ++nonzero;
                break;
            }
    }
    // all parameter tensors receive gradient (biases of unused paths would be a bug)
    CHECK(nonzero == total);
}

TEST_CASE("parameter count: analytic report equals the live model") {
    ModelConfig cfg = ModelConfig::desk();
    Model model(cfg, 9);
    std::uint64_t live = 0;
    for (const auto& [k, t] : model.params()) live += t.size();
    CostReport rep = count_params_flops(cfg, 64, 64);
    CHECK(rep.params == live);
    std::uint64_t ps = 0, fs = 0;
    for (const auto& l : rep.layers) {
        ps += l.params;
        fs += l.flops;
    }
    CHECK(ps == rep.params);
    CHECK(fs == rep.flops);
}

TEST_CASE("rwf_t report magnitudes") {
    CostReport rep = count_params_flops(ModelConfig::rwf_t(), 256, 256);
    CHECK(rep.params > 5000000ull);
    CHECK(rep.params < 20000000ull);
    CHECK(rep.flops > 10000000000ull);
    CHECK(!rep.layers.empty());
}
