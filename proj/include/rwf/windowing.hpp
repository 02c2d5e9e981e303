#pragma once

#include <vector>

#include "rwf/tensor.hpp"

namespace rwf {

// Partition of an (h,w) plane into non-overlapping k x k windows.
struct WindowGrid {
    int k = 0;
    int s_h = 0;
    int s_w = 0;
    int h = 0;
    int w = 0;

    WindowGrid() = default;
    WindowGrid(int k_, int h_, int w_);

    int num_windows() const { return s_h * s_w; }
    int flat(int i, int j) const { return i * s_w + j; }
};

enum class RegionKind { Cross, Rectangle };

struct RegionShape {
    RegionKind kind = RegionKind::Cross;
    int radius = 2;

    int candidate_count() const {
        return kind == RegionKind::Cross ? 4 * radius : (2 * radius + 1) * (2 * radius + 1) - 1;
    }
};

// Per-(center window, candidate slot) absolute flat window index.
// Border candidates are clamped to the grid, so entries may repeat.
struct IndexTable {
    int s_h = 0, s_w = 0, r_n = 0;
    std::vector<int> entries;  // s_h * s_w * r_n

    int at(int i, int j, int slot) const {
        return entries[(static_cast<std::size_t>(i) * s_w + j) * r_n + slot];
    }
};

// [c,h,w] -> [s_h,s_w,c,k^2]; window (i,j) holds pixel rows [i*k,(i+1)*k),
// cols [j*k,(j+1)*k), flattened row-major.
Tensor partition(const Tensor& x, int k);

// Exact inverse of partition.
Tensor merge(const Tensor& windows, int k, int h, int w);

// Canonical candidate offsets, sorted by (dy,dx); never contains (0,0).
std::vector<std::pair<int, int>> candidate_offsets(const RegionShape& shape);

IndexTable build_index_table(const WindowGrid& grid, const RegionShape& shape);

} // namespace rwf
