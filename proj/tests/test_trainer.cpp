#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rwf/trainer.hpp"
#include "rwf/verify.hpp"

using namespace rwf;

namespace {
std::filesystem::path tmp_dir() {
    auto d = std::filesystem::temp_directory_path() / "rwf_trainer_test";
    std::filesystem::create_directories(d);
    return d;
}
} // namespace

TEST_CASE("cosine schedule endpoints, midpoint, monotonicity") {
    Schedule s{1e-3, 1e-7, 1000};
    CHECK(cosine_lr(0, s) == 1e-3);
    CHECK(cosine_lr(1000, s) == 1e-7);
    CHECK(cosine_lr(-5, s) == 1e-3);
    CHECK(cosine_lr(5000, s) == 1e-7);
    CHECK(cosine_lr(500, s) == doctest::Approx(5.0005e-4).epsilon(1e-15));
    double prev = cosine_lr(0, s);
    for (int t = 1; t <= 1000; ++t) {
        double cur = cosine_lr(t, s);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("adamw matches an independent reference bitwise over 100 steps") {
    std::map<std::string, Tensor> params;
    params.emplace("w", Tensor::from_data({3}, {1.0, -2.0, 0.5}, true));
    OptimState opt;
    double rw[3] = {1.0, -2.0, 0.5}, rm[3] = {0, 0, 0}, rv[3] = {0, 0, 0};
    Rng rng(1);
    for (int step = 1; step <= 100; ++step) {
        std::vector<double> g(3);
        for (double& gv : g) gv = rng.uniform(-1, 1);
        params.at("w").grad_vec() = g;
        adamw_step(params, opt, 1e-3);
        for (int i = 0; i < 3; ++i) {
            rw[i] -= 1e-3 * 1e-4 * rw[i];
            rm[i] = 0.9 * rm[i] + (1.0 - 0.9) * g[i];
            rv[i] = 0.999 * rv[i] + (1.0 - 0.999) * g[i] * g[i];
            double mh = rm[i] / (1.0 - std::pow(0.9, step));
            double vh = rv[i] / (1.0 - std::pow(0.999, step));
            rw[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    CHECK(std::memcmp(params.at("w").data(), rw, sizeof rw) == 0);
}

TEST_CASE("adamw converges on a quadratic and rejects bad gradients") {
    std::map<std::string, Tensor> params;
    params.emplace("w", Tensor::from_data({1}, {5.0}, true));
    OptimState opt;
    opt.weight_decay = 0.0;
    for (int step = 0; step < 2000; ++step) {
        Tensor& w = params.at("w");
        w.zero_grad();
        w.grad_vec()[0] = 2.0 * w.data()[0];  // d/dw w^2
        adamw_step(params, opt, 1e-2);
    }
    CHECK(std::fabs(params.at("w").data()[0]) < 1e-2);
    params.at("w").grad_vec()[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(adamw_step(params, opt, 1e-3), NumericError);
}

TEST_CASE("sample_patch: joint crop and flip, deterministic under a seed") {
    Rng rng(2);
    Tensor x = random_tensor({3, 10, 12}, rng, 0.0, 1.0);
    Tensor y = random_tensor({3, 10, 12}, rng, 0.0, 1.0);
    Rng ra(7), rb(7);
    TrainSample a = sample_patch(x, y, 6, ra, true);
    TrainSample b = sample_patch(x, y, 6, rb, true);
    CHECK(std::memcmp(a.input.data(), b.input.data(), a.input.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.target.data(), b.target.data(), a.target.size() * sizeof(double)) == 0);
    CHECK(a.input.shape() == std::vector<int>({3, 6, 6}));
    // pixel-aligned loss is invariant under the joint flip
    CHECK(l1_loss(a.input, a.target).item() ==
          doctest::Approx(l1_loss(b.input, b.target).item()).epsilon(1e-15));
    Rng rc(3);
    CHECK_THROWS_AS(sample_patch(x, y, 20, rc, false), DataError);
}

TEST_CASE("checkpoint roundtrip is bitwise; corruption is rejected") {
    auto dir = tmp_dir();
    std::map<std::string, Tensor> tensors;
    Rng rng(4);
    tensors.emplace("alpha", random_tensor({3, 4}, rng));
    tensors.emplace("beta", random_tensor({2, 2, 2}, rng));
    std::string path = (dir / "t.rwfc").string();
    save_checkpoint(tensors, path);
    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == 2);
    for (auto& [k, t] : tensors) {
        REQUIRE(loaded.count(k) == 1);
        CHECK(loaded.at(k).shape() == t.shape());
        CHECK(std::memcmp(loaded.at(k).data(), t.data(), t.size() * sizeof(double)) == 0);
    }
    std::ifstream f(path, std::ios::binary);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::string bad = raw;
    bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 1);
    std::ofstream((dir / "bad.rwfc").string(), std::ios::binary)
        .write(bad.data(), static_cast<std::streamsize>(bad.size()));
    CHECK_THROWS_AS(load_checkpoint((dir / "bad.rwfc").string()), FormatError);
    std::string magic = raw;
    magic[0] = 'Z';
    std::ofstream((dir / "magic.rwfc").string(), std::ios::binary)
        .write(magic.data(), static_cast<std::streamsize>(magic.size()));
    CHECK_THROWS_AS(load_checkpoint((dir / "magic.rwfc").string()), FormatError);
    // f32 payloads load back within float precision
    save_checkpoint(tensors, path, true);
    auto f32 = load_checkpoint(path);
    CHECK(max_abs_diff(f32.at("alpha"), tensors.at("alpha")) < 1e-6);
}

TEST_CASE("optimizer state rides in a sibling file") {
    auto dir = tmp_dir();
    OptimState opt;
    opt.step = 17;
    opt.m["layer.w"] = {0.5, -0.5};
    opt.v["layer.w"] = {0.25, 0.25};
    std::string path = (dir / "s.rwfc.opt").string();
    save_optim_state(opt, path);
    OptimState back;
    load_optim_state(back, path);
    CHECK(back.step == 17);
    CHECK(back.m.at("layer.w") == opt.m.at("layer.w"));
    CHECK(back.v.at("layer.w") == opt.v.at("layer.w"));
}

TEST_CASE("training is deterministic for a fixed seed") {
    ModelConfig cfg = ModelConfig::desk();
    Rng rng(5);
    std::vector<std::pair<Tensor, Tensor>> data;
    data.emplace_back(random_tensor({3, 32, 32}, rng, 0.0, 1.0),
                      random_tensor({3, 32, 32}, rng, 0.0, 1.0));
    TrainConfig tc;
    tc.steps = 2;
    tc.batch = 1;
    tc.patch = 32;
    tc.sched.total_steps = 2;
    tc.ckpt_every = 0;
    auto run = [&] {
        Model m(cfg, 9);
        return train_loop(m, data, tc);
    };
    auto l1 = run(), l2 = run();
    REQUIRE(l1.size() == l2.size());
    for (std::size_t i = 0; i < l1.size(); ++i) {
        CHECK(l1[i].report.total == l2[i].report.total);
        CHECK(l1[i].lr == l2[i].lr);
    }
}
