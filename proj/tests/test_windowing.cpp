#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "rwf/verify.hpp"
#include "rwf/windowing.hpp"

using namespace rwf;

TEST_CASE("partition layout and roundtrip") {
    Rng rng(1);
    Tensor x = random_tensor({3, 8, 12}, rng);
    Tensor win = partition(x, 4);
    REQUIRE(win.shape() == std::vector<int>({2, 3, 3, 16}));
    // window (1,2), channel 0, slot 5 -> pixel (4+1, 8+1)
    CHECK(win.at({1, 2, 0, 5}) == x.at({0, 5, 9}));
    CHECK(max_abs_diff(merge(win, 4, 8, 12), x) == 0.0);
}

TEST_CASE("partition rejects indivisible planes") {
    Tensor x = Tensor::zeros({1, 6, 6});
    CHECK_THROWS_AS(partition(x, 4), ShapeError);
    CHECK_THROWS_AS(WindowGrid(4, 6, 8), ShapeError);
}

TEST_CASE("candidate offsets: shapes, counts, ordering") {
    RegionShape cross{RegionKind::Cross, 1};
    auto oc = candidate_offsets(cross);
    std::vector<std::pair<int, int>> want{{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
    CHECK(oc == want);
    for (int rho : {1, 2, 3}) {
        RegionShape c{RegionKind::Cross, rho}, r{RegionKind::Rectangle, rho};
        CHECK(static_cast<int>(candidate_offsets(c).size()) == 4 * rho);
        CHECK(static_cast<int>(candidate_offsets(r).size()) == (2 * rho + 1) * (2 * rho + 1) - 1);
        auto offs = candidate_offsets(r);
        CHECK(std::is_sorted(offs.begin(), offs.end()));
        CHECK(std::find(offs.begin(), offs.end(), std::pair{0, 0}) == offs.end());
    }
}

TEST_CASE("index table clamps borders") {
    WindowGrid g(2, 4, 4);
    IndexTable t = build_index_table(g, {RegionKind::Cross, 1});
    REQUIRE(t.r_n == 4);
    // offset (-1,0) is slot 0 of the sorted cross; clamps corner (0,0) to itself
    CHECK(t.at(0, 0, 0) == 0);
    for (int e : t.entries) {
        CHECK(e >= 0);
        CHECK(e < 4);
    }
}

TEST_CASE("interior windows see distinct candidates") {
    WindowGrid g(2, 12, 12);  // 6x6 grid
    IndexTable t = build_index_table(g, {RegionKind::Rectangle, 1});
    std::vector<int> mid;
    for (int s = 0; s < t.r_n; ++s) mid.push_back(t.at(3, 3, s));
    std::sort(mid.begin(), mid.end());
    CHECK(std::unique(mid.begin(), mid.end()) == mid.end());
}
