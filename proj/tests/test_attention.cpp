#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "rwf/attention.hpp"
#include "rwf/verify.hpp"

using namespace rwf;

TEST_CASE("bias index map: diagonal and coverage") {
    for (int k : {2, 3, 4}) {
        auto mp = bias_index_map(k);
        int span = 2 * k - 1, center = (k - 1) * span + (k - 1);
        for (int q = 0; q < k * k; ++q) CHECK(mp[q * k * k + q] == center);
        for (int e : mp) {
            CHECK(e >= 0);
            CHECK(e < span * span);
        }
    }
}

TEST_CASE("topk: descending order, ties to lowest slot, range check") {
    Tensor h = Tensor::from_data({1, 1, 4}, {0.25, 0.25, 0.25, 0.25});
    CHECK(topk_select(h, 2) == std::vector<int>({0, 1}));
    Tensor h2 = Tensor::from_data({1, 1, 4}, {0.1, 0.4, 0.2, 0.3});
    CHECK(topk_select(h2, 3) == std::vector<int>({1, 3, 2}));
    CHECK_THROWS_AS(topk_select(h2, 5), ConfigError);
    CHECK_THROWS_AS(topk_select(h2, 0), ConfigError);
}

TEST_CASE("regional similarity rows are stochastic") {
    Rng rng(1);
    WindowGrid g(2, 6, 6);
    IndexTable t = build_index_table(g, {RegionKind::Cross, 1});
    Tensor qd = random_tensor({3, 3, 4}, rng), kd = random_tensor({9, 1, 4}, rng);
    Tensor H = regional_similarity(qd, reshape(kd, {3, 3, 4}), t);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int r = 0; r < t.r_n; ++r) s += H.at({i, j, r});
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("rwam matches the brute-force oracle on randomized configs") {
    Rng rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        AttentionConfig cfg;
        cfg.k = (trial % 2 == 0) ? 2 : 4;
        int s_h = 1 + static_cast<int>(rng.uniform_int(3));
        int s_w = 1 + static_cast<int>(rng.uniform_int(3));
        cfg.heads = 1 + static_cast<int>(rng.uniform_int(2));
        int cb = cfg.heads * (1 + static_cast<int>(rng.uniform_int(2)));
        cfg.region.kind = (rng.next_u64() & 1) ? RegionKind::Cross : RegionKind::Rectangle;
        cfg.region.radius = 1 + static_cast<int>(rng.uniform_int(2));
        cfg.r_i = 1 + static_cast<int>(rng.uniform_int(2));
        Tensor x = random_tensor({cb, s_h * cfg.k, s_w * cfg.k}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        CHECK(max_abs_diff(rwam_forward(x, p, cfg), rwam_reference(x, p, cfg)) <= 1e-10);
    }
}

TEST_CASE("single-window image degenerates to center-only attention") {
    Rng rng(2);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 2;
    cfg.r_i = 2;
    cfg.region = {RegionKind::Rectangle, 1};
    Tensor x = random_tensor({4, 4, 4}, rng);
    AttnParams p = random_attn_params(4, cfg, rng);
    AttnDebug dbg;
    RouterSelection sel;
    dbg.selection_out = &sel;
    Tensor out = rwam_forward(x, p, cfg, nullptr, &dbg);
    for (int j : sel.absolute) CHECK(j == 0);
    CHECK(max_abs_diff(out, rwam_reference(x, p, cfg)) <= 1e-10);
}

TEST_CASE("full coverage with r_i = r_n equals dense attention over all windows") {
    Rng rng(3);
    AttentionConfig cfg;
    cfg.k = 2;
    cfg.heads = 1;
    cfg.region = {RegionKind::Rectangle, 1};
    cfg.r_i = cfg.region.candidate_count();
    Tensor x = random_tensor({2, 4, 4}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    CHECK(max_abs_diff(rwam_forward(x, p, cfg), rwam_reference(x, p, cfg)) <= 1e-10);
}

TEST_CASE("router is hard: sub-gap noise leaves output bitwise unchanged") {
    Rng rng(4);
    AttentionConfig cfg;
    cfg.k = 2;
    cfg.heads = 1;
    cfg.r_i = 1;
    cfg.region = {RegionKind::Cross, 1};
    Tensor x = random_tensor({2, 6, 6}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    AttnDebug d0;
    RouterSelection s0;
    d0.selection_out = &s0;
    Tensor base = rwam_forward(x, p, cfg, nullptr, &d0);
    std::vector<double> noise(s0.similarity.size(), 1e-13);
    AttnDebug d1;
    RouterSelection s1;
    d1.router_noise = &noise;
    d1.selection_out = &s1;
    Tensor pert = rwam_forward(x, p, cfg, nullptr, &d1);
    REQUIRE(s1.absolute == s0.absolute);
    CHECK(std::memcmp(base.data(), pert.data(), base.size() * sizeof(double)) == 0);
}

TEST_CASE("swam: shift-0 oracle, shifted oracle, mask") {
    Rng rng(5);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 2;
    cfg.shift = 0;
    Tensor x = random_tensor({4, 8, 8}, rng);
    AttnParams p = random_attn_params(4, cfg, rng);
    CHECK(max_abs_diff(swam_forward(x, p, cfg), swam_reference(x, p, cfg)) <= 1e-10);
    cfg.shift = 2;
    CHECK(max_abs_diff(swam_forward(x, p, cfg), swam_reference(x, p, cfg)) <= 1e-10);
    AttnRecord rec;
    swam_forward(x, p, cfg, &rec);
    double leaked = 0.0;
    for (const auto& e : rec.entries)
        for (int q = 0; q < e.nq; ++q)
            for (int kx = 0; kx < e.nk; ++kx) {
                double dy = std::fabs(e.q_coords[q].first - e.k_coords[kx].first);
                double dx = std::fabs(e.q_coords[q].second - e.k_coords[kx].second);
                if (dy > cfg.k || dx > cfg.k)
                    leaked = std::max(leaked, e.weights[q * e.nk + kx]);
            }
    CHECK(leaked < 1e-20);
}

TEST_CASE("instrumented MAC count matches the closed form") {
    Rng rng(6);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 2;
    cfg.r_i = 2;
    cfg.region = {RegionKind::Rectangle, 1};
    int cb = 4, h = 16, w = 16;
    Tensor x = random_tensor({cb, h, w}, rng);
    AttnParams p = random_attn_params(cb, cfg, rng);
    reset_attention_mac_count();
    rwam_forward(x, p, cfg);
    CHECK(attention_mac_count() == count_attention_macs(cfg, h, w, cb));
    CHECK(count_attention_macs(cfg, h, w, cb) == 2ull * 3 * 16 * 256 * 4);
}

TEST_CASE("recorded attention rows sum to one with in-bounds coordinates") {
    Rng rng(7);
    AttentionConfig cfg;
    cfg.k = 2;
    cfg.heads = 1;
    cfg.r_i = 1;
    cfg.region = {RegionKind::Cross, 1};
    Tensor x = random_tensor({2, 6, 6}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    AttnRecord rec;
    rwam_forward(x, p, cfg, &rec);
    REQUIRE(!rec.entries.empty());
    for (const auto& e : rec.entries) {
        for (int q = 0; q < e.nq; ++q) {
            double s = 0.0;
            for (int kx = 0; kx < e.nk; ++kx) s += e.weights[q * e.nk + kx];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
        for (auto& pc : e.q_coords) {
            CHECK(pc.first >= 0.0);
            CHECK(pc.first < 6.0);
            CHECK(pc.second >= 0.0);
            CHECK(pc.second < 6.0);
        }
    }
}
