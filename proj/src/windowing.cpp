#include "rwf/windowing.hpp"

#include <algorithm>

namespace rwf {

WindowGrid::WindowGrid(int k_, int h_, int w_) : k(k_), h(h_), w(w_) {
    if (k < 1) throw ConfigError("WindowGrid: k must be >= 1");
    if (h % k != 0 || w % k != 0)
        throw ShapeError("WindowGrid: " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by window size " + std::to_string(k));
    s_h = h / k;
    s_w = w / k;
}

Tensor partition(const Tensor& x, int k) {
    if (x.rank() != 3) throw ShapeError("partition: expected x[c,h,w]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    WindowGrid grid(k, h, w);
    int s_h = grid.s_h, s_w = grid.s_w, k2 = k * k;
    // out[i,j,ch,slot] = x[ch, i*k + slot/k, j*k + slot%k]
    std::vector<std::size_t> map(x.size());
    for (int i = 0; i < s_h; ++i)
        for (int j = 0; j < s_w; ++j)
            for (int ch = 0; ch < c; ++ch)
                for (int slot = 0; slot < k2; ++slot) {
                    int y = i * k + slot / k;
                    int xx = j * k + slot % k;
                    map[((static_cast<std::size_t>(i) * s_w + j) * c + ch) * k2 + slot] =
                        (static_cast<std::size_t>(ch) * h + y) * w + xx;
                }
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = px[map[o]];
    return make_op({s_h, s_w, c, k2}, std::move(out), {x}, [map](detail::Node& n) {
        for (std::size_t o = 0; o < n.size(); ++o) n.inputs[0]->grad[map[o]] += n.grad[o];
    });
}

Tensor merge(const Tensor& windows, int k, int h, int w) {
    if (windows.rank() != 4) throw ShapeError("merge: expected windows[s_h,s_w,c,k^2]");
    WindowGrid grid(k, h, w);
    int s_h = windows.dim(0), s_w = windows.dim(1), c = windows.dim(2), k2 = windows.dim(3);
    if (s_h != grid.s_h || s_w != grid.s_w || k2 != k * k)
        throw ShapeError("merge: windows " + shape_str(windows.shape()) + " incompatible with " +
                         std::to_string(h) + "x" + std::to_string(w) + ", k=" + std::to_string(k));
    // inverse map: x flat -> windows flat
    std::vector<std::size_t> map(windows.size());
    for (int i = 0; i < s_h; ++i)
        for (int j = 0; j < s_w; ++j)
            for (int ch = 0; ch < c; ++ch)
                for (int slot = 0; slot < k2; ++slot) {
                    int y = i * k + slot / k;
                    int xx = j * k + slot % k;
                    map[(static_cast<std::size_t>(ch) * h + y) * w + xx] =
                        ((static_cast<std::size_t>(i) * s_w + j) * c + ch) * k2 + slot;
                }
    std::vector<double> out(windows.size());
    const double* pw = windows.data();
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = pw[map[o]];
    return make_op({c, h, w}, std::move(out), {windows}, [map](detail::Node& n) {
        for (std::size_t o = 0; o < n.size(); ++o) n.inputs[0]->grad[map[o]] += n.grad[o];
    });
}

std::vector<std::pair<int, int>> candidate_offsets(const RegionShape& shape) {
    std::vector<std::pair<int, int>> offs;
    int rho = shape.radius;
    if (shape.kind == RegionKind::Cross) {
        for (int d = -rho; d <= rho; ++d) {
            if (d == 0) continue;
            offs.emplace_back(d, 0);
            offs.emplace_back(0, d);
        }
    } else {
        for (int dy = -rho; dy <= rho; ++dy)
            for (int dx = -rho; dx <= rho; ++dx) {
                if (dy == 0 && dx == 0) continue;
                offs.emplace_back(dy, dx);
            }
    }
    std::sort(offs.begin(), offs.end());
    return offs;
}

IndexTable build_index_table(const WindowGrid& grid, const RegionShape& shape) {
    auto offs = candidate_offsets(shape);
    IndexTable table;
    table.s_h = grid.s_h;
    table.s_w = grid.s_w;
    table.r_n = static_cast<int>(offs.size());
    table.entries.resize(static_cast<std::size_t>(grid.s_h) * grid.s_w * offs.size());
    for (int i = 0; i < grid.s_h; ++i)
        for (int j = 0; j < grid.s_w; ++j)
            for (std::size_t slot = 0; slot < offs.size(); ++slot) {
                int ci = std::clamp(i + offs[slot].first, 0, grid.s_h - 1);
                int cj = std::clamp(j + offs[slot].second, 0, grid.s_w - 1);
                table.entries[(static_cast<std::size_t>(i) * grid.s_w + j) * offs.size() + slot] =
                    grid.flat(ci, cj);
            }
    return table;
}

} // namespace rwf
