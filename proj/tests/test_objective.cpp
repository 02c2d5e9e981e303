#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rwf/objective.hpp"
#include "rwf/verify.hpp"

using namespace rwf;

TEST_CASE("l1 loss examples") {
    Rng rng(1);
    Tensor x = random_tensor({3, 4, 4}, rng);
    CHECK(l1_loss(x, x).item() == 0.0);
    CHECK(l1_loss(add_scalar(x, 1.0), x).item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(l1_loss(x, Tensor::zeros({3, 4, 5})), ShapeError);
}

TEST_CASE("fft loss: delta example and self-distance") {
    Tensor delta = Tensor::from_data({1, 2, 2}, {1, 0, 0, 0});
    Tensor zero = Tensor::zeros({1, 2, 2});
    // spectrum of the delta is all-ones real, zero imag: mean over 8 components = 0.5
    CHECK(fft_loss(delta, zero).item() == doctest::Approx(0.5).epsilon(1e-12));
    Rng rng(2);
    Tensor x = random_tensor({2, 4, 4}, rng);
    CHECK(fft_loss(x, x).item() == 0.0);
    CHECK(fft_loss(x, x, true).item() < 1e-11);  // complex-modulus variant
}

TEST_CASE("composite loss components") {
    Rng rng(3);
    Tensor x = random_tensor({1, 4, 4}, rng), y = random_tensor({1, 4, 4}, rng);
    CHECK(composite_loss(x, y, 0.0).item() == doctest::Approx(l1_loss(x, y).item()).epsilon(1e-14));
    double want = l1_loss(x, y).item() + 0.1 * fft_loss(x, y).item();
    CHECK(composite_loss(x, y, 0.1).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("degrade_gt preserves constants and interior ramps") {
    Tensor cst = Tensor::full({3, 4, 4}, 0.7);
    CHECK(max_abs_diff(degrade_gt(cst), cst) < 1e-12);
    std::vector<double> ramp(64);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) ramp[y * 8 + x] = 0.05 * x + 0.1 * y;
    Tensor r = Tensor::from_data({1, 8, 8}, ramp);
    Tensor d = degrade_gt(r);
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x)
            CHECK(std::fabs(d.at({0, y, x}) - r.at({0, y, x})) < 1e-10);
    CHECK_THROWS_AS(degrade_gt(Tensor::zeros({1, 5, 5})), ShapeError);
}

TEST_CASE("msr loss: zero, perfect, and random residuals") {
    Rng rng(4);
    Tensor g = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    Tensor gc = Tensor::full({3, 16, 16}, 0.4);
    std::vector<Tensor> zr;
    for (int j = 1; j <= 3; ++j) zr.push_back(Tensor::zeros({3, 16 >> j, 16 >> j}));
    auto [tc, terms_c] = msr_loss(zr, gc, 0.1);
    CHECK(tc.item() < 1e-12);  // constants survive degrade_gt untouched
    std::vector<Tensor> perfect;
    for (int j = 1; j <= 3; ++j) {
        Tensor gi = bilinear_resize(g, 16 >> j, 16 >> j);
        perfect.push_back(sub(gi, degrade_gt(gi)));
    }
    auto [tp, terms_p] = msr_loss(perfect, g, 0.1);
    CHECK(tp.item() < 1e-12);
    auto [tz, terms_z] = msr_loss(zr, g, 0.1);
    double want = 0.0;
    for (int j = 1; j <= 3; ++j) {
        Tensor gi = bilinear_resize(g, 16 >> j, 16 >> j);
        want += composite_loss(degrade_gt(gi), gi, 0.1).item();
    }
    CHECK(tz.item() == doctest::Approx(want).epsilon(1e-10));
    REQUIRE(terms_z.size() == 3);
}

TEST_CASE("total loss report assembles its parts") {
    Rng rng(5);
    Tensor g = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    Tensor x = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    std::vector<Tensor> res;
    for (int j = 1; j <= 3; ++j) res.push_back(Tensor::zeros({3, 16 >> j, 16 >> j}));
    LossWeights wts;
    LossReport rep = total_loss(x, g, res, wts);
    double msr_sum = 0.0;
    for (double t : rep.msr_terms) msr_sum += t;
    double want = rep.l1 + wts.alpha * rep.fft + wts.lambda * msr_sum;
    CHECK(rep.total == doctest::Approx(want).epsilon(1e-12));
    CHECK(rep.total_tensor.item() == rep.total);
    // lambda = 0 drops the regularizer
    LossWeights w0;
    w0.lambda = 0.0;
    LossReport rep0 = total_loss(x, g, res, w0);
    CHECK(rep0.total == doctest::Approx(rep.l1 + wts.alpha * rep.fft).epsilon(1e-12));
}

TEST_CASE("loss gradients survive a finite-difference check") {
    Rng rng(6);
    Tensor x = random_tensor({1, 4, 4}, rng, 0.1, 0.9);
    Tensor y = random_tensor({1, 4, 4}, rng, 0.1, 0.9);
    auto f = [&](Tensor& t) { return composite_loss(t, y, 0.1); };
    CHECK(grad_check(f, x, 1e-6) < 1e-4);
}
