#include "rwf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rwf/network.hpp"
#include "rwf/objective.hpp"
#include "rwf/toolkit.hpp"
#include "rwf/trainer.hpp"
#include "rwf/windowing.hpp"

namespace rwf {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

AttnParams random_attn_params(int cb, const AttentionConfig& cfg, Rng& rng) {
    AttnParams p;
    p.qkv_w = random_tensor({3 * cb, cb, 1, 1}, rng, -0.5, 0.5);
    p.qkv_b = random_tensor({3 * cb}, rng, -0.1, 0.1);
    p.proj_w = random_tensor({cb, cb, 1, 1}, rng, -0.5, 0.5);
    p.proj_b = random_tensor({cb}, rng, -0.1, 0.1);
    int span2 = (2 * cfg.k - 1) * (2 * cfg.k - 1);
    p.bias_cand = random_tensor({cfg.region.candidate_count(), cfg.heads, span2}, rng, -0.3, 0.3);
    p.bias_center = random_tensor({cfg.heads, span2}, rng, -0.3, 0.3);
    return p;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("max_abs_diff: shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

// ---- plain-loop oracles ----

namespace {

std::vector<double> conv1x1_ref(const double* x, int cin, int h, int w, const double* wt,
                                const double* b, int cout) {
    std::vector<double> out(static_cast<std::size_t>(cout) * h * w);
    for (int o = 0; o < cout; ++o)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double acc = b[o];
                for (int ci = 0; ci < cin; ++ci)
                    acc += wt[static_cast<std::size_t>(o) * cin + ci] *
                           x[(static_cast<std::size_t>(ci) * h + y) * w + xx];
                out[(static_cast<std::size_t>(o) * h + y) * w + xx] = acc;
            }
    return out;
}

std::vector<std::pair<int, int>> offsets_ref(const RegionShape& shape) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -shape.radius; dy <= shape.radius; ++dy)
        for (int dx = -shape.radius; dx <= shape.radius; ++dx) {
            if (dy == 0 && dx == 0) continue;
            if (shape.kind == RegionKind::Cross && dy != 0 && dx != 0) continue;
            offs.emplace_back(dy, dx);
        }
    std::sort(offs.begin(), offs.end());
    return offs;
}

int bias_idx_ref(int qs, int ps, int k) {
    int span = 2 * k - 1;
    return ((qs / k - ps / k) + k - 1) * span + ((qs % k - ps % k) + k - 1);
}

// one window's worth of attention rows: queries from window (qy0,qx0), keys
// given as (window-origin, bias-table-pointer) list, plain loops throughout
void attend_window_ref(const double* q, const double* kk, const double* v, double* out, int cb,
                       int h, int w, int k, int m, int qy0, int qx0,
                       const std::vector<std::pair<std::pair<int, int>, const double*>>& keys,
                       const double* center_bias_base, int span2) {
    (void)center_bias_base;
    (void)span2;
    int k2 = k * k, n = cb / m;
    double scl = 1.0 / std::sqrt(static_cast<double>(n));
    int K = static_cast<int>(keys.size()) * k2;
    std::vector<double> logits(static_cast<std::size_t>(K));
    for (int hd = 0; hd < m; ++hd)
        for (int qs = 0; qs < k2; ++qs) {
            int qy = qy0 + qs / k, qx = qx0 + qs % k;
            for (int e = 0; e < static_cast<int>(keys.size()); ++e)
                for (int ps = 0; ps < k2; ++ps) {
                    int ky = keys[static_cast<std::size_t>(e)].first.first + ps / k;
                    int kx = keys[static_cast<std::size_t>(e)].first.second + ps % k;
                    double dot = 0.0;
                    for (int ci = hd * n; ci < (hd + 1) * n; ++ci)
                        dot += q[(static_cast<std::size_t>(ci) * h + qy) * w + qx] *
                               kk[(static_cast<std::size_t>(ci) * h + ky) * w + kx];
                    const double* bt = keys[static_cast<std::size_t>(e)].second;
                    double bias = bt ? bt[static_cast<std::size_t>(hd) * ((2 * k - 1) * (2 * k - 1)) +
                                          bias_idx_ref(qs, ps, k)]
                                     : 0.0;
                    logits[static_cast<std::size_t>(e) * k2 + ps] = dot * scl + bias;
                }
            double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                z += l;
            }
            for (int ci = hd * n; ci < (hd + 1) * n; ++ci) {
                double acc = 0.0;
                for (int e = 0; e < static_cast<int>(keys.size()); ++e)
                    for (int ps = 0; ps < k2; ++ps) {
                        int ky = keys[static_cast<std::size_t>(e)].first.first + ps / k;
                        int kx = keys[static_cast<std::size_t>(e)].first.second + ps % k;
                        acc += logits[static_cast<std::size_t>(e) * k2 + ps] / z *
                               v[(static_cast<std::size_t>(ci) * h + ky) * w + kx];
                    }
                out[(static_cast<std::size_t>(ci) * h + qy) * w + qx] = acc;
            }
        }
}

} // namespace

Tensor rwam_reference(const Tensor& x, const AttnParams& p, const AttentionConfig& cfg) {
    NoGrad ng;
    int cb = x.dim(0), h = x.dim(1), w = x.dim(2);
    int k = cfg.k, m = cfg.heads, r_i = cfg.r_i;
    int s_h = h / k, s_w = w / k, nw = s_h * s_w, k2 = k * k;
    int span2 = (2 * k - 1) * (2 * k - 1);
    std::size_t hw = static_cast<std::size_t>(h) * w;

    std::vector<double> qkv =
        conv1x1_ref(x.data(), cb, h, w, p.qkv_w.data(), p.qkv_b.data(), 3 * cb);
    const double* q = qkv.data();
    const double* kk = qkv.data() + static_cast<std::size_t>(cb) * hw;
    const double* v = qkv.data() + 2 * static_cast<std::size_t>(cb) * hw;

    auto offs = offsets_ref(cfg.region);
    int r_n = static_cast<int>(offs.size());
    std::vector<int> cand(static_cast<std::size_t>(nw) * r_n);
    for (int wi = 0; wi < nw; ++wi) {
        int iy = wi / s_w, ix = wi % s_w;
        for (int r = 0; r < r_n; ++r) {
            int cy = std::clamp(iy + offs[static_cast<std::size_t>(r)].first, 0, s_h - 1);
            int cx = std::clamp(ix + offs[static_cast<std::size_t>(r)].second, 0, s_w - 1);
            cand[static_cast<std::size_t>(wi) * r_n + r] = cy * s_w + cx;
        }
    }

    // window-mean descriptors of the full q/k planes
    std::vector<double> qd(static_cast<std::size_t>(nw) * cb), kd(qd.size());
    for (int wi = 0; wi < nw; ++wi) {
        int iy = wi / s_w, ix = wi % s_w;
        for (int ci = 0; ci < cb; ++ci) {
            double sq = 0.0, sk = 0.0;
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    std::size_t at = (static_cast<std::size_t>(ci) * h + iy * k + dy) * w + ix * k + dx;
                    sq += q[at];
                    sk += kk[at];
                }
            qd[static_cast<std::size_t>(wi) * cb + ci] = sq / k2;
            kd[static_cast<std::size_t>(wi) * cb + ci] = sk / k2;
        }
    }

    std::vector<double> attended(static_cast<std::size_t>(cb) * hw, 0.0);
    std::vector<double> sim(static_cast<std::size_t>(r_n));
    std::vector<int> order(static_cast<std::size_t>(r_n));
    for (int wi = 0; wi < nw; ++wi) {
        for (int r = 0; r < r_n; ++r) {
            double dot = 0.0;
            int cw = cand[static_cast<std::size_t>(wi) * r_n + r];
            for (int ci = 0; ci < cb; ++ci)
                dot += qd[static_cast<std::size_t>(wi) * cb + ci] *
                       kd[static_cast<std::size_t>(cw) * cb + ci];
            sim[static_cast<std::size_t>(r)] = dot;
        }
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (sim[static_cast<std::size_t>(a)] != sim[static_cast<std::size_t>(b)])
                return sim[static_cast<std::size_t>(a)] > sim[static_cast<std::size_t>(b)];
            return a < b;
        });
        std::vector<std::pair<std::pair<int, int>, const double*>> keys;
        for (int t = 0; t < r_i; ++t) {
            int rel = order[static_cast<std::size_t>(t)];
            int cw = cand[static_cast<std::size_t>(wi) * r_n + rel];
            keys.push_back({{(cw / s_w) * k, (cw % s_w) * k},
                            p.bias_cand.data() + static_cast<std::size_t>(rel) * m * span2});
        }
        keys.push_back({{(wi / s_w) * k, (wi % s_w) * k}, p.bias_center.data()});
        attend_window_ref(q, kk, v, attended.data(), cb, h, w, k, m, (wi / s_w) * k,
                          (wi % s_w) * k, keys, p.bias_center.data(), span2);
    }

    std::vector<double> out =
        conv1x1_ref(attended.data(), cb, h, w, p.proj_w.data(), p.proj_b.data(), cb);
    return Tensor::from_data({cb, h, w}, std::move(out));
}

Tensor swam_reference(const Tensor& x, const AttnParams& p, const AttentionConfig& cfg) {
    NoGrad ng;
    int cb = x.dim(0), h = x.dim(1), w = x.dim(2);
    int k = cfg.k, m = cfg.heads, shift = cfg.shift;
    int s_h = h / k, s_w = w / k, k2 = k * k, n = cb / m;
    std::size_t hw = static_cast<std::size_t>(h) * w;

    std::vector<double> xs(x.size());
    for (int ci = 0; ci < cb; ++ci)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                xs[(static_cast<std::size_t>(ci) * h + y) * w + xx] =
                    x.data()[(static_cast<std::size_t>(ci) * h + (y + shift) % h) * w +
                             (xx + shift) % w];

    std::vector<double> qkv =
        conv1x1_ref(xs.data(), cb, h, w, p.qkv_w.data(), p.qkv_b.data(), 3 * cb);
    const double* q = qkv.data();
    const double* kk = qkv.data() + static_cast<std::size_t>(cb) * hw;
    const double* v = qkv.data() + 2 * static_cast<std::size_t>(cb) * hw;

    auto slice_id = [&](int coord, int extent) {
        if (coord < extent - k) return 0;
        if (coord < extent - shift) return 1;
        return 2;
    };
    double scl = 1.0 / std::sqrt(static_cast<double>(n));
    int span2 = (2 * k - 1) * (2 * k - 1);
    std::vector<double> attended(static_cast<std::size_t>(cb) * hw, 0.0);
    std::vector<double> logits(static_cast<std::size_t>(k2));
    for (int wi = 0; wi < s_h * s_w; ++wi) {
        int y0 = (wi / s_w) * k, x0 = (wi % s_w) * k;
        for (int hd = 0; hd < m; ++hd)
            for (int qs = 0; qs < k2; ++qs) {
                int qy = y0 + qs / k, qx = x0 + qs % k;
                for (int ps = 0; ps < k2; ++ps) {
                    int ky = y0 + ps / k, kx = x0 + ps % k;
                    double dot = 0.0;
                    for (int ci = hd * n; ci < (hd + 1) * n; ++ci)
                        dot += q[(static_cast<std::size_t>(ci) * h + qy) * w + qx] *
                               kk[(static_cast<std::size_t>(ci) * h + ky) * w + kx];
                    double l = dot * scl +
                               p.bias_center.data()[static_cast<std::size_t>(hd) * span2 +
                                                    bias_idx_ref(qs, ps, k)];
                    if (shift != 0) {
                        int rq = slice_id(qy, h) * 3 + slice_id(qx, w);
                        int rp = slice_id(ky, h) * 3 + slice_id(kx, w);
                        if (rq != rp) l += -100.0;
                    }
                    logits[static_cast<std::size_t>(ps)] = l;
                }
                double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0.0;
                for (double& l : logits) {
                    l = std::exp(l - mx);
                    z += l;
                }
                for (int ci = hd * n; ci < (hd + 1) * n; ++ci) {
                    double acc = 0.0;
                    for (int ps = 0; ps < k2; ++ps)
                        acc += logits[static_cast<std::size_t>(ps)] / z *
                               v[(static_cast<std::size_t>(ci) * h + y0 + ps / k) * w + x0 + ps % k];
                    attended[(static_cast<std::size_t>(ci) * h + qy) * w + qx] = acc;
                }
            }
    }

    // inverse cyclic shift, then the output projection
    std::vector<double> rolled(attended.size());
    for (int ci = 0; ci < cb; ++ci)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                rolled[(static_cast<std::size_t>(ci) * h + (y + shift) % h) * w + (xx + shift) % w] =
                    attended[(static_cast<std::size_t>(ci) * h + y) * w + xx];
    std::vector<double> out =
        conv1x1_ref(rolled.data(), cb, h, w, p.proj_w.data(), p.proj_b.data(), cb);
    return Tensor::from_data({cb, h, w}, std::move(out));
}

Tensor dense_whole_image_reference(const Tensor& x, const AttnParams& p, int k, int m,
                                   std::uint64_t* macs) {
    NoGrad ng;
    int cb = x.dim(0), h = x.dim(1), w = x.dim(2);
    int s_h = h / k, s_w = w / k, nw = s_h * s_w, k2 = k * k, n = cb / m;
    std::size_t hw = static_cast<std::size_t>(h) * w;

    std::vector<double> qkv =
        conv1x1_ref(x.data(), cb, h, w, p.qkv_w.data(), p.qkv_b.data(), 3 * cb);
    const double* q = qkv.data();
    const double* kk = qkv.data() + static_cast<std::size_t>(cb) * hw;
    const double* v = qkv.data() + 2 * static_cast<std::size_t>(cb) * hw;

    std::vector<double> attended(static_cast<std::size_t>(cb) * hw, 0.0);
    for (int wi = 0; wi < nw; ++wi) {
        std::vector<std::pair<std::pair<int, int>, const double*>> keys;
        for (int wj = 0; wj < nw; ++wj)
            keys.push_back({{(wj / s_w) * k, (wj % s_w) * k},
                            wj == wi ? p.bias_center.data() : nullptr});
        attend_window_ref(q, kk, v, attended.data(), cb, h, w, k, m, (wi / s_w) * k,
                          (wi % s_w) * k, keys, p.bias_center.data(),
                          (2 * k - 1) * (2 * k - 1));
    }
    if (macs)
        *macs += 2ull * static_cast<std::uint64_t>(nw) * m * k2 *
                 (static_cast<std::uint64_t>(nw) * k2) * static_cast<std::uint64_t>(n);

    std::vector<double> out =
        conv1x1_ref(attended.data(), cb, h, w, p.proj_w.data(), p.proj_b.data(), cb);
    return Tensor::from_data({cb, h, w}, std::move(out));
}

// ---- the named checks ----

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw Error(msg);
}

void require_close(double a, double b, double tol, const std::string& msg) {
    if (!(std::fabs(a - b) <= tol))
        throw Error(msg + ": " + std::to_string(a) + " vs " + std::to_string(b));
}

std::filesystem::path tmp_dir() {
    auto d = std::filesystem::temp_directory_path() / "rwf_verify";
    std::filesystem::create_directories(d);
    return d;
}

// -------- tensorlab --------

void chk_gelu_values() {
    Tensor x = Tensor::from_data({4}, {0.0, 1.0, -1.0, 10.0});
    Tensor y = gelu(x);
    require_close(y.data()[0], 0.0, 1e-15, "gelu(0)");
    require_close(y.data()[1], 0.8413447460685429, 1e-12, "gelu(1)");
    require_close(y.data()[2], -0.15865525393145707, 1e-12, "gelu(-1)");
    require_close(y.data()[3], 10.0, 1e-10, "gelu(10) asymptote");
}

void chk_softmax() {
    Tensor x = Tensor::from_data({2, 2}, {0.0, 0.0, std::log(2.0), 0.0});
    Tensor y = softmax(x, 1);
    require_close(y.data()[0], 0.5, 1e-12, "softmax [0,0]");
    require_close(y.data()[2], 2.0 / 3.0, 1e-12, "softmax [ln2,0]");
    Rng rng(11);
    Tensor r = random_tensor({7}, rng, -3, 3);
    Tensor s = softmax(r, 0);
    double z = 0.0, acc = 0.0;
    for (int i = 0; i < 7; ++i) z += std::exp(r.data()[i] - 3.0);
    for (int i = 0; i < 7; ++i) {
        require_close(s.data()[i], std::exp(r.data()[i] - 3.0) / z, 1e-12, "softmax oracle");
        acc += s.data()[i];
    }
    require_close(acc, 1.0, 1e-12, "softmax row sum");
}

void chk_matmul() {
    Rng rng(12);
    Tensor a = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    Tensor c = matmul(a, b);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int t = 0; t < 5; ++t) acc += a.at({i, t}) * b.at({t, j});
            require_close(c.at({i, j}), acc, 1e-12, "matmul oracle");
        }
    Tensor eye = Tensor::zeros({5, 5});
    for (int i = 0; i < 5; ++i) eye.data()[i * 5 + i] = 1.0;
    require(max_abs_diff(matmul(a, eye), a) == 0.0, "matmul identity");
    Tensor ab = random_tensor({2, 3, 4}, rng), bb = random_tensor({2, 4, 5}, rng);
    Tensor cb = matmul(ab, bb);
    for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (int t = 0; t < 4; ++t) acc += ab.at({s, i, t}) * bb.at({s, t, j});
                require_close(cb.at({s, i, j}), acc, 1e-12, "batched matmul oracle");
            }
}

void chk_conv2d() {
    Tensor x22 = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
    Tensor w22 = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor b0 = Tensor::zeros({1});
    Tensor y = conv2d(x22, w22, b0, 2, 0);
    require_close(y.item(), 10.0, 1e-14, "conv2d 2x2 sum");
    Rng rng(13);
    Tensor x = random_tensor({3, 8, 8}, rng);
    Tensor wt = random_tensor({4, 3, 3, 3}, rng);
    Tensor bs = random_tensor({4}, rng);
    for (int stride : {1, 2}) {
        Tensor out = conv2d(x, wt, bs, stride, 1);
        int oh = out.dim(1), ow = out.dim(2);
        for (int o = 0; o < 4; ++o)
            for (int y2 = 0; y2 < oh; ++y2)
                for (int x2 = 0; x2 < ow; ++x2) {
                    double acc = bs.data()[o];
                    for (int ci = 0; ci < 3; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                int iy = y2 * stride + ky - 1, ix = x2 * stride + kx - 1;
                                if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                                acc += wt.at({o, ci, ky, kx}) * x.at({ci, iy, ix});
                            }
                    require_close(out.at({o, y2, x2}), acc, 1e-10, "conv2d loop oracle");
                }
    }
}

void chk_dwconv() {
    Rng rng(14);
    Tensor x = random_tensor({3, 6, 6}, rng);
    Tensor wt = random_tensor({3, 1, 3, 3}, rng);
    Tensor bs = random_tensor({3}, rng);
    Tensor out = dwconv(x, wt, bs, 1);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
            for (int xx = 0; xx < 6; ++xx) {
                double acc = bs.data()[c];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        int iy = y + ky - 1, ix = xx + kx - 1;
                        if (iy < 0 || iy >= 6 || ix < 0 || ix >= 6) continue;
                        acc += wt.at({c, 0, ky, kx}) * x.at({c, iy, ix});
                    }
                require_close(out.at({c, y, xx}), acc, 1e-10, "dwconv loop oracle");
            }
    Tensor ident = Tensor::zeros({3, 1, 3, 3});
    for (int c = 0; c < 3; ++c) ident.data()[c * 9 + 4] = 1.0;
    require(max_abs_diff(dwconv(x, ident, Tensor::zeros({3}), 1), x) < 1e-15, "dwconv identity");
}

void chk_layer_norm() {
    Tensor x = Tensor::from_data({2, 1, 1}, {1.0, -1.0});
    Tensor g = Tensor::full({2}, 1.0), b = Tensor::zeros({2});
    Tensor y = layer_norm(x, g, b);
    require_close(y.data()[0], 1.0, 1e-5, "layer_norm unit variance");
    Tensor cst = Tensor::full({3, 2, 2}, 7.0);
    Tensor yc = layer_norm(cst, Tensor::full({3}, 1.0), Tensor::zeros({3}));
    require(max_abs_diff(yc, Tensor::zeros({3, 2, 2})) < 1e-6, "layer_norm constant -> 0");
    Rng rng(15);
    Tensor r = random_tensor({4, 3, 3}, rng);
    Tensor gg = random_tensor({4}, rng), bb = random_tensor({4}, rng);
    Tensor out = layer_norm(r, gg, bb);
    for (int y2 = 0; y2 < 3; ++y2)
        for (int x2 = 0; x2 < 3; ++x2) {
            double mean = 0.0, var = 0.0;
            for (int c = 0; c < 4; ++c) mean += r.at({c, y2, x2});
            mean /= 4;
            for (int c = 0; c < 4; ++c) {
                double d = r.at({c, y2, x2}) - mean;
                var += d * d;
            }
            var /= 4;
            for (int c = 0; c < 4; ++c) {
                double want = (r.at({c, y2, x2}) - mean) / std::sqrt(var + 1e-6) * gg.data()[c] +
                              bb.data()[c];
                require_close(out.at({c, y2, x2}), want, 1e-10, "layer_norm oracle");
            }
        }
}

void chk_pixel_shuffle() {
    Tensor x = Tensor::from_data({4, 1, 1}, {1, 2, 3, 4});
    Tensor y = pixel_shuffle(x, 2);
    require(y.shape() == std::vector<int>({1, 2, 2}), "pixel_shuffle shape");
    require(y.data()[0] == 1 && y.data()[1] == 2 && y.data()[2] == 3 && y.data()[3] == 4,
            "pixel_shuffle layout");
    Rng rng(16);
    Tensor r = random_tensor({8, 3, 3}, rng);
    require(max_abs_diff(pixel_shuffle(r, 1), r) == 0.0, "pixel_shuffle s=1 identity");
    Tensor up = pixel_shuffle(r, 2);
    for (int c = 0; c < 2; ++c)
        for (int y2 = 0; y2 < 6; ++y2)
            for (int x2 = 0; x2 < 6; ++x2)
                require(up.at({c, y2, x2}) ==
                            r.at({c * 4 + (y2 % 2) * 2 + x2 % 2, y2 / 2, x2 / 2}),
                        "pixel_shuffle roundtrip map");
}

void chk_dft2_values() {
    Tensor ones = Tensor::full({1, 2, 2}, 1.0);
    auto [re1, im1] = dft2(ones);
    require_close(re1.data()[0], 4.0, 1e-12, "dft2 ones DC");
    require_close(re1.data()[1] + re1.data()[2] + re1.data()[3], 0.0, 1e-12, "dft2 ones AC");
    require(max_abs_diff(im1, Tensor::zeros({1, 2, 2})) < 1e-12, "dft2 ones imag");
    Tensor delta = Tensor::from_data({1, 2, 2}, {1, 0, 0, 0});
    auto [re2, im2] = dft2(delta);
    require(max_abs_diff(re2, Tensor::full({1, 2, 2}, 1.0)) < 1e-12, "dft2 delta real");
    require(max_abs_diff(im2, Tensor::zeros({1, 2, 2})) < 1e-12, "dft2 delta imag");
}

void chk_dft2_direct() {
    Rng rng(17);
    for (auto [h, w] : {std::pair{4, 4}, {3, 5}, {4, 6}}) {
        Tensor x = random_tensor({2, h, w}, rng);
        auto [re, im] = dft2(x);
        for (int c = 0; c < 2; ++c)
            for (int u = 0; u < h; ++u)
                for (int vq = 0; vq < w; ++vq) {
                    double sr = 0.0, si = 0.0;
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < w; ++xx) {
                            double ang = -2.0 * 3.14159265358979323846 *
                                         (static_cast<double>(u) * y / h +
                                          static_cast<double>(vq) * xx / w);
                            sr += x.at({c, y, xx}) * std::cos(ang);
                            si += x.at({c, y, xx}) * std::sin(ang);
                        }
                    require_close(re.at({c, u, vq}), sr, 1e-9, "dft2 direct real");
                    require_close(im.at({c, u, vq}), si, 1e-9, "dft2 direct imag");
                }
    }
}

void chk_dft2_linearity() {
    Rng rng(18);
    Tensor a = random_tensor({1, 4, 4}, rng), b = random_tensor({1, 4, 4}, rng);
    auto [ar, ai] = dft2(a);
    auto [br, bi] = dft2(b);
    auto [cr, ci] = dft2(add(scale(a, 2.0), scale(b, -3.0)));
    require(max_abs_diff(cr, add(scale(ar, 2.0), scale(br, -3.0))) < 1e-10, "dft2 linear re");
    require(max_abs_diff(ci, add(scale(ai, 2.0), scale(bi, -3.0))) < 1e-10, "dft2 linear im");
}

void chk_dft2_parseval() {
    Rng rng(19);
    Tensor x = random_tensor({1, 8, 8}, rng);
    auto [re, im] = dft2(x);
    double spatial = 0.0, spectral = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) spatial += x.data()[i] * x.data()[i];
    for (std::size_t i = 0; i < re.size(); ++i)
        spectral += re.data()[i] * re.data()[i] + im.data()[i] * im.data()[i];
    require_close(spectral, 64.0 * spatial, 1e-8, "parseval");
}

void chk_grad_sum_rule() {
    Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
    Tensor y = sum_all(add(x, x));
    y.backward();
    for (int i = 0; i < 3; ++i)
        require_close(x.grad()[i], 2.0, 1e-14, "d(x+x)/dx");
    Tensor x2 = Tensor::from_data({1}, {3.0}, true);
    Tensor y2 = sum_all(mul(x2, x2));
    y2.backward();
    require_close(x2.grad()[0], 6.0, 1e-9, "d(x^2)/dx at 3");
}

void chk_grad_elementwise() {
    Rng rng(20);
    Tensor x = random_tensor({2, 3}, rng, 0.3, 1.5);  // away from the |.| kink
    auto f1 = [](Tensor& t) { return mean_all(mul(gelu(t), t)); };
    require(grad_check(f1, x) < 1e-4, "grad gelu*x");
    auto f2 = [](Tensor& t) { return mean_all(abs_val(add_scalar(t, 0.0))); };
    require(grad_check(f2, x) < 1e-4, "grad |x| off-kink");
    // couple the output to the input: mean(softmax) alone is identically 1/cols
    auto f3 = [](Tensor& t) { return mean_all(mul(softmax(t, 1), t)); };
    Tensor x3 = random_tensor({3, 4}, rng);
    require(grad_check(f3, x3) < 1e-4, "grad softmax");
    Tensor lg = random_tensor({2}, rng);
    Tensor lb = random_tensor({2}, rng);
    auto f4 = [&](Tensor& t) {
        Tensor r = reshape(t, {2, 3, 1});
        return mean_all(mul(layer_norm(r, lg, lb), r));
    };
    Tensor x4 = random_tensor({2, 3}, rng);
    require(grad_check(f4, x4, 1e-5) < 1e-4, "grad layer_norm");
}

void chk_grad_linops() {
    Rng rng(21);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    auto fa = [&](Tensor& t) { return mean_all(matmul(t, b)); };
    require(grad_check(fa, a) < 1e-4, "grad matmul lhs");
    auto fb = [&](Tensor& t) { return mean_all(matmul(a, t)); };
    require(grad_check(fb, b) < 1e-4, "grad matmul rhs");
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor wt = random_tensor({3, 2, 3, 3}, rng);
    Tensor bs = random_tensor({3}, rng);
    auto fc = [&](Tensor& t) { return mean_all(conv2d(t, wt, bs, 1, 1)); };
    require(grad_check(fc, x) < 1e-4, "grad conv2d input");
    auto fw = [&](Tensor& t) { return mean_all(conv2d(x, t, bs, 2, 1)); };
    require(grad_check(fw, wt) < 1e-4, "grad conv2d weight");
    // squared spectrum: |.| would sit on a kink where im components are exactly 0
    auto fd = [&](Tensor& t) {
        auto [re, im] = dft2(t);
        return mean_all(add(mul(re, re), mul(im, im)));
    };
    Tensor xf = random_tensor({1, 4, 4}, rng, 0.2, 1.0);
    require(grad_check(fd, xf, 1e-6) < 1e-4, "grad dft2");
    auto fp = [&](Tensor& t) { return mean_all(gelu(pixel_shuffle(t, 2))); };
    Tensor xp = random_tensor({4, 3, 3}, rng);
    require(grad_check(fp, xp) < 1e-4, "grad pixel_shuffle");
}

// -------- windowing --------

void chk_partition_roundtrip() {
    Rng rng(22);
    Tensor x = random_tensor({3, 8, 12}, rng);
    Tensor back = merge(partition(x, 4), 4, 8, 12);
    require(max_abs_diff(back, x) == 0.0, "merge(partition(x)) == x");
    Tensor win = partition(x, 4);
    require(win.shape() == std::vector<int>({2, 3, 3, 16}), "partition shape");
    require(win.at({1, 2, 0, 5}) == x.at({0, 4 + 1, 8 + 1}), "partition index map");
}

void chk_offsets() {
    RegionShape cross{RegionKind::Cross, 1};
    auto oc = candidate_offsets(cross);
    std::vector<std::pair<int, int>> want{{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
    require(oc == want, "cross rho=1 offsets");
    RegionShape rect{RegionKind::Rectangle, 2};
    auto orr = candidate_offsets(rect);
    require(static_cast<int>(orr.size()) == rect.candidate_count(), "rect candidate count");
    require(static_cast<int>(oc.size()) == cross.candidate_count(), "cross candidate count");
    for (auto& o : orr) require(!(o.first == 0 && o.second == 0), "offsets exclude center");
    require(std::is_sorted(orr.begin(), orr.end()), "offsets sorted");
}

void chk_index_table() {
    WindowGrid g(2, 4, 4);  // 2x2 grid
    IndexTable t = build_index_table(g, {RegionKind::Cross, 1});
    // center (0,0), offset (-1,0) clamps to (0,0) itself (slot 0 in sorted order)
    require(t.at(0, 0, 0) == 0, "clamp corner to self");
    for (int e : t.entries) require(e >= 0 && e < 4, "index table range");
    WindowGrid g5(2, 10, 10);
    IndexTable t5 = build_index_table(g5, {RegionKind::Cross, 1});
    std::vector<int> mid = {t5.at(2, 2, 0), t5.at(2, 2, 1), t5.at(2, 2, 2), t5.at(2, 2, 3)};
    std::sort(mid.begin(), mid.end());
    require(std::unique(mid.begin(), mid.end()) == mid.end(), "interior entries distinct");
}

// -------- attention --------

void chk_bias_map() {
    for (int k : {2, 4}) {
        auto mp = bias_index_map(k);
        int span = 2 * k - 1;
        for (int q = 0; q < k * k; ++q)
            require(mp[static_cast<std::size_t>(q) * k * k + q] == (k - 1) * span + (k - 1),
                    "diagonal maps to center relative coordinate");
        std::vector<int> seen(static_cast<std::size_t>(span) * span, 0);
        for (int e : mp) {
            require(e >= 0 && e < span * span, "bias map range");
            seen[static_cast<std::size_t>(e)] = 1;
        }
        require(std::accumulate(seen.begin(), seen.end(), 0) == span * span,
                "bias map covers all relative offsets");
    }
}

void chk_topk() {
    Tensor h = Tensor::from_data({1, 1, 4}, {0.25, 0.25, 0.25, 0.25});
    auto sel = topk_select(h, 2);
    require(sel == std::vector<int>({0, 1}), "ties -> lowest slots");
    Tensor h2 = Tensor::from_data({1, 1, 4}, {0.1, 0.4, 0.2, 0.3});
    require(topk_select(h2, 3) == std::vector<int>({1, 3, 2}), "descending order");
    bool threw = false;
    try {
        topk_select(h2, 5);
    } catch (const ConfigError&) {
        threw = true;
    }
    require(threw, "r_i > r_n rejected");
}

void chk_rwam_oracle() {
    Rng rng(100);
    for (int trial = 0; trial < 100; ++trial) {
        AttentionConfig cfg;
        cfg.k = (trial % 2 == 0) ? 2 : 4;
        int s_h = 1 + static_cast<int>(rng.uniform_int(4));
        int s_w = 1 + static_cast<int>(rng.uniform_int(4));
        cfg.heads = 1 + static_cast<int>(rng.uniform_int(2));
        int n = 1 + static_cast<int>(rng.uniform_int(3));
        int cb = cfg.heads * n;
        cfg.region.kind = (rng.next_u64() & 1) ? RegionKind::Cross : RegionKind::Rectangle;
        cfg.region.radius = 1 + static_cast<int>(rng.uniform_int(2));
        cfg.r_i = 1 + static_cast<int>(rng.uniform_int(2));
        cfg.r_i = std::min(cfg.r_i, cfg.region.candidate_count());
        Tensor x = random_tensor({cb, s_h * cfg.k, s_w * cfg.k}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        Tensor got = rwam_forward(x, p, cfg);
        Tensor want = rwam_reference(x, p, cfg);
        double err = max_abs_diff(got, want);
        require(err <= 1e-10, "rwam oracle trial " + std::to_string(trial) + " err " +
                                  std::to_string(err));
    }
}

void chk_rwam_single_window() {
    Rng rng(101);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 2;
    cfg.r_i = 1;
    cfg.region = {RegionKind::Cross, 1};
    Tensor x = random_tensor({4, 4, 4}, rng);
    AttnParams p = random_attn_params(4, cfg, rng);
    Tensor got = rwam_forward(x, p, cfg);
    // independent single-window oracle: every candidate clamps to the center,
    // so the key set is the center window twice (selected + center)
    Tensor want = rwam_reference(x, p, cfg);
    require(max_abs_diff(got, want) <= 1e-10, "single-window degenerate routing");
    AttnDebug dbg;
    RouterSelection sel;
    dbg.selection_out = &sel;
    rwam_forward(x, p, cfg, nullptr, &dbg);
    for (int j : sel.absolute) require(j == 0, "all candidates clamp to center");
}

void chk_dense_coverage() {
    Rng rng(102);
    for (int trial = 0; trial < 10; ++trial) {
        AttentionConfig cfg;
        cfg.k = 2;
        int s_h = 2 + static_cast<int>(rng.uniform_int(2));
        int s_w = 2 + static_cast<int>(rng.uniform_int(2));
        cfg.heads = 1 + static_cast<int>(rng.uniform_int(2));
        int cb = cfg.heads * (1 + static_cast<int>(rng.uniform_int(2)));
        cfg.region.kind = RegionKind::Rectangle;
        cfg.region.radius = std::max(s_h, s_w) - 1;
        if (cfg.region.radius < 1) cfg.region.radius = 1;
        cfg.r_i = cfg.region.candidate_count();  // select every candidate
        Tensor x = random_tensor({cb, s_h * cfg.k, s_w * cfg.k}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        Tensor got = rwam_forward(x, p, cfg);
        Tensor want = rwam_reference(x, p, cfg);
        require(max_abs_diff(got, want) <= 1e-10,
                "dense coverage trial " + std::to_string(trial));
    }
}

void chk_hard_routing() {
    Rng rng(103);
    AttentionConfig cfg;
    cfg.k = 2;
    cfg.heads = 1;
    cfg.r_i = 1;
    cfg.region = {RegionKind::Cross, 1};
    Tensor x = random_tensor({2, 6, 6}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    AttnDebug dbg;
    RouterSelection base_sel;
    dbg.selection_out = &base_sel;
    Tensor base = rwam_forward(x, p, cfg, nullptr, &dbg);
    // perturbation below every similarity gap: selection and output unchanged bitwise
    std::vector<double> noise(base_sel.similarity.size(), 1e-13);
    AttnDebug dbg2;
    RouterSelection sel2;
    dbg2.router_noise = &noise;
    dbg2.selection_out = &sel2;
    Tensor same = rwam_forward(x, p, cfg, nullptr, &dbg2);
    require(sel2.absolute == base_sel.absolute, "tiny noise keeps selection");
    require(std::memcmp(base.data(), same.data(), base.size() * sizeof(double)) == 0,
            "hard routing: output bitwise invariant below the decision boundary");
}

void chk_swam_shift0_oracle() {
    Rng rng(104);
    for (int trial = 0; trial < 10; ++trial) {
        AttentionConfig cfg;
        cfg.k = (trial % 2 == 0) ? 2 : 4;
        cfg.heads = 1 + static_cast<int>(rng.uniform_int(2));
        cfg.shift = 0;
        int cb = cfg.heads * (1 + static_cast<int>(rng.uniform_int(3)));
        int s_h = 1 + static_cast<int>(rng.uniform_int(3));
        int s_w = 1 + static_cast<int>(rng.uniform_int(3));
        Tensor x = random_tensor({cb, s_h * cfg.k, s_w * cfg.k}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        require(max_abs_diff(swam_forward(x, p, cfg), swam_reference(x, p, cfg)) <= 1e-10,
                "swam shift=0 oracle");
    }
}

void chk_swam_shifted_oracle() {
    Rng rng(105);
    for (int trial = 0; trial < 10; ++trial) {
        AttentionConfig cfg;
        cfg.k = 4;
        cfg.heads = 2;
        cfg.shift = 2;
        int cb = 4;
        int s_h = 2 + static_cast<int>(rng.uniform_int(2));
        int s_w = 2 + static_cast<int>(rng.uniform_int(2));
        Tensor x = random_tensor({cb, s_h * cfg.k, s_w * cfg.k}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        require(max_abs_diff(swam_forward(x, p, cfg), swam_reference(x, p, cfg)) <= 1e-10,
                "swam shifted oracle");
    }
}

void chk_swam_mask() {
    Rng rng(106);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 1;
    cfg.shift = 2;
    Tensor x = random_tensor({2, 8, 8}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    AttnRecord rec;
    swam_forward(x, p, cfg, &rec);
    // weights across the wrap-around seam must be crushed by the -100 mask
    double leaked = 0.0;
    for (const auto& e : rec.entries)
        for (int q = 0; q < e.nq; ++q)
            for (int kx = 0; kx < e.nk; ++kx) {
                double dy = std::fabs(e.q_coords[q].first - e.k_coords[kx].first);
                double dx = std::fabs(e.q_coords[q].second - e.k_coords[kx].second);
                if (dy > cfg.k || dx > cfg.k)  // only wrapped pairs can be this far apart
                    leaked = std::max(leaked, e.weights[static_cast<std::size_t>(q) * e.nk + kx]);
            }
    require(leaked < 1e-20, "cross-boundary attention masked");
}

void chk_swam_translation() {
    Rng rng(107);
    AttentionConfig cfg;
    cfg.k = 2;
    cfg.heads = 1;
    cfg.shift = 0;
    Tensor x = random_tensor({2, 6, 6}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    Tensor a = swam_forward(roll2d(x, cfg.k, cfg.k), p, cfg);
    Tensor b = roll2d(swam_forward(x, p, cfg), cfg.k, cfg.k);
    require(max_abs_diff(a, b) < 1e-10, "translation-by-k equivariance at shift=0");
}

void chk_attn_rows_stochastic() {
    Rng rng(108);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 2;
    cfg.r_i = 2;
    cfg.region = {RegionKind::Rectangle, 1};
    Tensor x = random_tensor({4, 8, 8}, rng);
    AttnParams p = random_attn_params(4, cfg, rng);
    AttnRecord rec;
    rwam_forward(x, p, cfg, &rec);
    cfg.shift = 2;
    swam_forward(x, p, cfg, &rec);
    require(!rec.entries.empty(), "record populated");
    for (const auto& e : rec.entries)
        for (int q = 0; q < e.nq; ++q) {
            double s = 0.0;
            for (int kx = 0; kx < e.nk; ++kx)
                s += e.weights[static_cast<std::size_t>(q) * e.nk + kx];
            require_close(s, 1.0, 1e-6, "attention row sums to 1");
        }
}

void chk_mac_formula() {
    Rng rng(109);
    for (auto [k, r_i] : {std::pair{2, 1}, {4, 2}, {4, 1}}) {
        AttentionConfig cfg;
        cfg.k = k;
        cfg.heads = 2;
        cfg.r_i = r_i;
        cfg.region = {RegionKind::Rectangle, 1};
        int cb = 4, h = 4 * k, w = 4 * k;
        Tensor x = random_tensor({cb, h, w}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        reset_attention_mac_count();
        rwam_forward(x, p, cfg);
        require(attention_mac_count() == count_attention_macs(cfg, h, w, cb),
                "instrumented count matches 2(r_i+1)k^2 hw d");
    }
    // r_i = 0 edge: single-window swam equals the dense single-window count
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 1;
    cfg.shift = 0;
    Tensor x = random_tensor({2, 4, 4}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    reset_attention_mac_count();
    swam_forward(x, p, cfg);
    require(attention_mac_count() == 2ull * 16 * 16 * 2, "dense single-window count 2 h^2 w^2 d");
}

void chk_mac_scaling() {
    Rng rng(110);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 1;
    cfg.r_i = 2;
    cfg.region = {RegionKind::Cross, 1};
    int cb = 2;
    std::vector<std::uint64_t> routed, dense;
    for (int side : {16, 32, 64}) {
        Tensor x = random_tensor({cb, side, side}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        reset_attention_mac_count();
        rwam_forward(x, p, cfg);
        routed.push_back(attention_mac_count());
        std::uint64_t dm = 0;
        dense_whole_image_reference(x, p, cfg.k, cfg.heads, &dm);
        dense.push_back(dm);
    }
    for (int i = 0; i < 2; ++i) {
        double r = static_cast<double>(routed[static_cast<std::size_t>(i) + 1]) /
                   static_cast<double>(routed[static_cast<std::size_t>(i)]);
        require(std::fabs(r / 4.0 - 1.0) < 0.01, "routed MACs scale linearly in hw");
        double d = static_cast<double>(dense[static_cast<std::size_t>(i) + 1]) /
                   static_cast<double>(dense[static_cast<std::size_t>(i)]);
        require(std::fabs(d / 16.0 - 1.0) < 0.01, "dense MACs scale quadratically in hw");
    }
}

void chk_grad_attention() {
    Rng rng(111);
    AttentionConfig cfg;
    cfg.k = 2;
    cfg.heads = 2;
    cfg.r_i = 1;
    cfg.region = {RegionKind::Cross, 1};
    Tensor x = random_tensor({2, 4, 4}, rng);
    AttnParams p = random_attn_params(2, cfg, rng);
    for (Tensor* t : {&p.qkv_w, &p.proj_w, &p.bias_cand, &p.bias_center})
        t->set_requires_grad(true);
    auto f = [&](Tensor& t) {
        Tensor y = rwam_forward(t, p, cfg);
        return mean_all(mul(y, y));
    };
    require(grad_check(f, x, 1e-6) < 1e-4, "grad rwam wrt input");
    cfg.shift = 1;
    auto g = [&](Tensor& t) {
        Tensor y = swam_forward(t, p, cfg);
        return mean_all(mul(y, y));
    };
    require(grad_check(g, x, 1e-6) < 1e-4, "grad swam wrt input");
}

// -------- network --------

void chk_identity_residual() {
    ModelConfig cfg = ModelConfig::desk();
    Model model(cfg, 5);
    for (double& v : model.param("head.weight").vec()) v = 0.0;
    for (double& v : model.param("head.bias").vec()) v = 0.0;
    Rng rng(112);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    ModelOutput out = model.forward(img);
    require(std::memcmp(out.restored.data(), img.data(), img.size() * sizeof(double)) == 0,
            "zero head -> restored bitwise equals input");
}

void chk_pad_crop() {
    ModelConfig cfg = ModelConfig::desk();
    Model model(cfg, 6);
    Rng rng(113);
    Tensor img = random_tensor({3, 20, 28}, rng, 0.0, 1.0);
    ModelOutput out = model.forward(img);
    require(out.restored.shape() == std::vector<int>({3, 20, 28}), "output cropped to input size");
    require(out.msr.size() == 3, "three MSR residuals");
    require(out.msr[0].shape() == std::vector<int>({3, 10, 14}), "msr h/2");
    require(out.msr[1].shape() == std::vector<int>({3, 5, 7}), "msr h/4");
    require(out.msr[2].shape() == std::vector<int>({3, 2, 3}), "msr h/8");
    require(out.restored.all_finite(), "forward finite");
}

void chk_count_report() {
    CostReport rep = count_params_flops(ModelConfig::rwf_t(), 256, 256);
    require(!rep.layers.empty(), "itemization exists");
    std::uint64_t ps = 0, fs = 0;
    for (const auto& l : rep.layers) {
        ps += l.params;
        fs += l.flops;
    }
    require(ps == rep.params && fs == rep.flops, "itemization sums to totals");
    require(rep.params > 1000000 && rep.flops > 1000000000ull, "plausible magnitudes");
    // structural parameter count must match the live desk model exactly
    ModelConfig desk = ModelConfig::desk();
    Model model(desk, 1);
    std::uint64_t live = 0;
    for (const auto& [k2, t] : model.params()) live += t.size();
    CostReport drep = count_params_flops(desk, 64, 64);
    require(drep.params == live, "analytic params == live tensor count (" +
                                     std::to_string(drep.params) + " vs " + std::to_string(live) +
                                     ")");
}

// -------- objective --------

void chk_l1() {
    Rng rng(114);
    Tensor x = random_tensor({3, 4, 4}, rng);
    require(l1_loss(x, x).item() == 0.0, "l1(x,x)=0");
    require_close(l1_loss(add_scalar(x, 1.0), x).item(), 1.0, 1e-12, "l1 shift-by-1");
    Tensor y = random_tensor({3, 4, 4}, rng);
    double want = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) want += std::fabs(x.data()[i] - y.data()[i]);
    want /= static_cast<double>(x.size());
    require_close(l1_loss(x, y).item(), want, 1e-12, "l1 loop oracle");
}

void chk_fft_loss() {
    Tensor delta = Tensor::from_data({1, 2, 2}, {1, 0, 0, 0});
    Tensor zero = Tensor::zeros({1, 2, 2});
    require_close(fft_loss(delta, zero).item(), 0.5, 1e-12, "fft_loss delta example");
    Rng rng(115);
    Tensor x = random_tensor({2, 4, 4}, rng);
    require(fft_loss(x, x).item() == 0.0, "fft_loss(x,x)=0");
    Tensor y = random_tensor({2, 4, 4}, rng);
    auto [xr, xi] = dft2(x);
    auto [yr, yi] = dft2(y);
    double want = 0.0;
    for (std::size_t i = 0; i < xr.size(); ++i)
        want += std::fabs(xr.data()[i] - yr.data()[i]) + std::fabs(xi.data()[i] - yi.data()[i]);
    want /= static_cast<double>(2 * xr.size());
    require_close(fft_loss(x, y).item(), want, 1e-9, "fft_loss direct oracle");
    require_close(composite_loss(x, y, 0.0).item(), l1_loss(x, y).item(), 1e-14,
                  "alpha=0 -> l1 only");
}

void chk_degrade_gt() {
    Tensor cst = Tensor::full({3, 4, 4}, 0.7);
    require(max_abs_diff(degrade_gt(cst), cst) < 1e-12, "constants preserved");
    // separable ramp: bilinear reproduces linear signals in the interior
    std::vector<double> ramp(16);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) ramp[static_cast<std::size_t>(y) * 4 + x] = 0.1 * x + 0.2 * y;
    Tensor r = Tensor::from_data({1, 4, 4}, ramp);
    Tensor d = degrade_gt(r);
    require(std::fabs(d.at({0, 1, 1}) - r.at({0, 1, 1})) < 1e-10 &&
                std::fabs(d.at({0, 2, 2}) - r.at({0, 2, 2})) < 1e-10,
            "ramp interior reproduced");
}

void chk_msr() {
    Rng rng(116);
    Tensor g = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    // zero residuals: matches independent per-scale recomputation
    std::vector<Tensor> zeros_res;
    for (int j = 1; j <= 3; ++j) zeros_res.push_back(Tensor::zeros({3, 16 >> j, 16 >> j}));
    auto [total, terms] = msr_loss(zeros_res, g, 0.1);
    double want = 0.0;
    for (int j = 1; j <= 3; ++j) {
        Tensor gi = bilinear_resize(g, 16 >> j, 16 >> j);
        want += composite_loss(degrade_gt(gi), gi, 0.1).item();
    }
    require_close(total.item(), want, 1e-10, "msr component oracle");
    require(terms.size() == 3, "three msr terms");
    // perfect residuals: every term vanishes
    std::vector<Tensor> perfect;
    for (int j = 1; j <= 3; ++j) {
        Tensor gi = bilinear_resize(g, 16 >> j, 16 >> j);
        perfect.push_back(sub(gi, degrade_gt(gi)));
    }
    auto [t2, terms2] = msr_loss(perfect, g, 0.1);
    require(t2.item() < 1e-12, "perfect residual -> 0");
    LossWeights wts;
    LossReport rep = total_loss(g, g, perfect, wts);
    require(rep.total < 1e-12, "restored==G, perfect residuals -> total ~0");
}

// -------- trainer --------

void chk_cosine() {
    Schedule s{1e-3, 1e-7, 1000};
    require(cosine_lr(0, s) == 1e-3, "lr(0) exact");
    require(cosine_lr(1000, s) == 1e-7, "lr(T) exact");
    require(cosine_lr(2000, s) == 1e-7, "lr clamped past T");
    require_close(cosine_lr(500, s), 5.0005e-4, 1e-18, "lr midpoint");
    double prev = cosine_lr(0, s);
    for (int t = 1; t <= 1000; ++t) {
        double cur = cosine_lr(t, s);
        require(cur <= prev, "lr monotone non-increasing");
        prev = cur;
    }
}

void chk_adamw_oracle() {
    // independent reference update, compared bitwise over 100 steps
    std::map<std::string, Tensor> params;
    params.emplace("w", Tensor::from_data({3}, {1.0, -2.0, 0.5}, true));
    OptimState opt;
    std::vector<double> rw{1.0, -2.0, 0.5}, rm(3, 0.0), rv(3, 0.0);
    Rng rng(117);
    for (int step = 1; step <= 100; ++step) {
        std::vector<double> g(3);
        for (double& gv : g) gv = rng.uniform(-1, 1);
        params.at("w").grad_vec() = g;
        adamw_step(params, opt, 1e-3);
        for (int i = 0; i < 3; ++i) {
            rw[static_cast<std::size_t>(i)] -= 1e-3 * 1e-4 * rw[static_cast<std::size_t>(i)];
            // 1.0 - 0.9 differs from the literal 0.1 in the last bit; the
            // reference must round the same way as the implementation
            rm[static_cast<std::size_t>(i)] = 0.9 * rm[static_cast<std::size_t>(i)] +
                                              (1.0 - 0.9) * g[static_cast<std::size_t>(i)];
            rv[static_cast<std::size_t>(i)] = 0.999 * rv[static_cast<std::size_t>(i)] +
                                              (1.0 - 0.999) * g[static_cast<std::size_t>(i)] *
                                                  g[static_cast<std::size_t>(i)];
            double mh = rm[static_cast<std::size_t>(i)] / (1.0 - std::pow(0.9, step));
            double vh = rv[static_cast<std::size_t>(i)] / (1.0 - std::pow(0.999, step));
            rw[static_cast<std::size_t>(i)] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    require(std::memcmp(params.at("w").data(), rw.data(), 3 * sizeof(double)) == 0,
            "adamw bitwise vs reference over 100 steps");
    bool threw = false;
    std::map<std::string, Tensor> bad;
    bad.emplace("w", Tensor::from_data({1}, {1.0}, true));
    bad.at("w").grad_vec() = {std::nan("")};
    OptimState o2;
    try {
        adamw_step(bad, o2, 1e-3);
    } catch (const NumericError& e) {
        threw = std::string(e.what()).find("w") != std::string::npos;
    }
    require(threw, "non-finite gradient rejected naming the parameter");
}

void chk_train_determinism() {
    ModelConfig cfg = ModelConfig::desk();
    Rng rng(118);
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
    require(l1.size() == l2.size(), "log lengths equal");
    for (std::size_t i = 0; i < l1.size(); ++i)
        require(l1[i].report.total == l2[i].report.total && l1[i].lr == l2[i].lr,
                "identical seed -> identical loss log");
}

void chk_flip_consistency() {
    Rng rng(119);
    Tensor x = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    Tensor y = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    // identity model: loss(flip(x), flip(y)) == loss(x, y)
    Rng ra(7), rb(7);
    TrainSample sa = sample_patch(x, y, 8, ra, true);
    TrainSample sb = sample_patch(x, y, 8, rb, true);
    require(std::memcmp(sa.input.data(), sb.input.data(), sa.input.size() * sizeof(double)) == 0,
            "sampling deterministic");
    require(sa.hflip == sb.hflip && sa.vflip == sb.vflip, "flip flags deterministic");
    require_close(l1_loss(sa.input, sa.target).item(), l1_loss(x, y).item(), 1e-12,
                  "joint flip leaves pixel-aligned loss invariant");
}

void chk_checkpoint() {
    auto dir = tmp_dir();
    ModelConfig cfg = ModelConfig::desk();
    Model model(cfg, 3);
    std::string path = (dir / "ckpt.rwfc").string();
    save_checkpoint(model.params(), path);
    auto loaded = load_checkpoint(path);
    require(loaded.size() == model.params().size(), "tensor count preserved");
    for (const auto& [key, t] : model.params()) {
        auto it = loaded.find(key);
        require(it != loaded.end(), "key preserved: " + key);
        require(it->second.shape() == t.shape(), "shape preserved: " + key);
        require(std::memcmp(it->second.data(), t.data(), t.size() * sizeof(double)) == 0,
                "bitwise payload: " + key);
    }
    // independent second reader over the raw bytes
    std::ifstream f(path, std::ios::binary);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require(raw.compare(0, 4, "RWFC") == 0, "magic bytes");
    auto rd_u32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[at + static_cast<std::size_t>(i)])) << (8 * i);
        return v;
    };
    require(rd_u32(4) == 1, "version 1");
    require(rd_u32(8) == model.params().size(), "second reader: tensor count");
    std::size_t at = 12;
    std::uint32_t klen = rd_u32(at);
    std::string first_key = raw.substr(at + 4, klen);
    require(first_key == model.params().begin()->first, "second reader: first key");

    // corrupted CRC must be rejected with a format error
    std::string bad = raw;
    bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x40);
    std::string bad_path = (dir / "bad.rwfc").string();
    std::ofstream(bad_path, std::ios::binary).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    bool threw = false;
    try {
        load_checkpoint(bad_path);
    } catch (const FormatError&) {
        threw = true;
    }
    require(threw, "corrupted CRC rejected");
    std::string wrong_magic = raw;
    wrong_magic[0] = 'X';
    std::string wm_path = (dir / "magic.rwfc").string();
    std::ofstream(wm_path, std::ios::binary)
        .write(wrong_magic.data(), static_cast<std::streamsize>(wrong_magic.size()));
    threw = false;
    try {
        load_checkpoint(wm_path);
    } catch (const FormatError&) {
        threw = true;
    }
    require(threw, "wrong magic rejected");

    OptimState opt;
    opt.step = 42;
    opt.m["a"] = {1.0, 2.0};
    opt.v["a"] = {3.0, 4.0};
    std::string opath = (dir / "ckpt.rwfc.opt").string();
    save_optim_state(opt, opath);
    OptimState opt2;
    load_optim_state(opt2, opath);
    require(opt2.step == 42 && opt2.m["a"] == opt.m["a"] && opt2.v["a"] == opt.v["a"],
            "optimizer state roundtrip");
}

// -------- toolkit --------

void chk_psnr() {
    Rng rng(120);
    Tensor x = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
    require(psnr(x, x) == 100.0, "identical -> capped 100 dB");
    Tensor y = add_scalar(x, 0.1);
    require_close(psnr(x, y), 20.0, 1e-9, "MSE 0.01 -> 20 dB");
    Tensor z = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x.data()[i] - z.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    require_close(psnr(x, z), 10.0 * std::log10(1.0 / mse), 1e-9, "psnr formula oracle");
}

AttnEntry uniform_entry_2x2() {
    AttnEntry e;
    e.branch = "rwam";
    e.nq = 4;
    e.nk = 4;
    e.fh = e.fw = 2;
    e.weights.assign(16, 0.25);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            e.q_coords.emplace_back(y, x);
            e.k_coords.emplace_back(y, x);
        }
    return e;
}

void chk_attn_distance() {
    AttnRecord ident;
    AttnEntry e = uniform_entry_2x2();
    e.weights.assign(16, 0.0);
    for (int i = 0; i < 4; ++i) e.weights[static_cast<std::size_t>(i) * 4 + i] = 1.0;
    ident.entries.push_back(e);
    require(attn_distance(ident, 2, 2) == 0.0, "identity attention -> 0");

    AttnRecord uni;
    uni.entries.push_back(uniform_entry_2x2());
    require_close(attn_distance(uni, 2, 2), 0.30177669529663687, 1e-12,
                  "uniform 2x2 enumeration oracle");

    AttnRecord corner;
    AttnEntry c;
    c.nq = 1;
    c.nk = 1;
    c.weights = {1.0};
    c.q_coords = {{0.0, 0.0}};
    c.k_coords = {{3.0, 4.0}};
    corner.entries.push_back(c);
    require(attn_distance(corner, 3, 4) == 1.0, "farthest corner -> exactly 1");

    Rng rng(121);
    for (int t = 0; t < 20; ++t) {
        AttnRecord r;
        AttnEntry re;
        re.nq = 3;
        re.nk = 5;
        for (int q = 0; q < 3; ++q) {
            re.q_coords.emplace_back(rng.uniform(0, 7), rng.uniform(0, 7));
            std::vector<double> row(5);
            double z = 0.0;
            for (double& v : row) {
                v = rng.uniform(0, 1);
                z += v;
            }
            for (double v : row) re.weights.push_back(v / z);
        }
        for (int kx = 0; kx < 5; ++kx)
            re.k_coords.emplace_back(rng.uniform(0, 7), rng.uniform(0, 7));
        r.entries.push_back(re);
        double d = attn_distance(r, 8, 8);
        require(d >= 0.0 && d <= 1.0, "stochastic record distance in [0,1]");
        // 90-degree rotation: (y,x) -> (x, h-1-y); isotropic metric unchanged
        AttnRecord rot;
        AttnEntry rr = re;
        for (auto& pc : rr.q_coords) pc = {pc.second, 7.0 - pc.first};
        for (auto& pc : rr.k_coords) pc = {pc.second, 7.0 - pc.first};
        rot.entries.push_back(rr);
        require_close(attn_distance(rot, 8, 8), d, 1e-12, "rotation invariance");
    }
}

void chk_png() {
    auto dir = tmp_dir();
    std::string path = (dir / "img.png").string();
    Tensor black = Tensor::zeros({3, 5, 7});
    save_image(black, path);
    require(max_abs_diff(load_image(path), black) == 0.0, "all-black roundtrip");
    Tensor white = Tensor::full({3, 2, 2}, 1.0);
    save_image(white, path);
    require(max_abs_diff(load_image(path), white) == 0.0, "value 255 -> 1.0");
    Rng rng(122);
    Tensor r = random_tensor({3, 9, 13}, rng, 0.0, 1.0);
    save_image(r, path);
    Tensor back = load_image(path);
    require(max_abs_diff(back, r) <= 0.5 / 255.0 + 1e-12, "roundtrip within quantization");
    save_image(back, path);
    require(max_abs_diff(load_image(path), back) == 0.0, "load-save-load idempotent");
    std::string junk = (dir / "junk.png").string();
    std::ofstream(junk) << "not a png";
    bool threw = false;
    try {
        load_image(junk);
    } catch (const FormatError&) {
        threw = true;
    }
    require(threw, "non-PNG rejected");
}

void chk_dataset_index() {
    auto dir = tmp_dir() / "ds";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir / "input");
    std::filesystem::create_directories(dir / "target");
    require(index_dataset(dir.string()).pairs.empty(), "empty dirs -> empty index");
    Rng rng(123);
    Tensor img = random_tensor({3, 4, 4}, rng, 0.0, 1.0);
    save_image(img, (dir / "input" / "b.png").string());
    save_image(img, (dir / "target" / "b.png").string());
    save_image(img, (dir / "input" / "a.png").string());
    save_image(img, (dir / "target" / "a.png").string());
    DatasetIndex idx = index_dataset(dir.string());
    require(idx.pairs.size() == 2, "two matched pairs");
    require(idx.pairs[0].first.find("a.png") != std::string::npos, "lexicographic order");
    save_image(img, (dir / "input" / "orphan.png").string());
    bool threw = false;
    try {
        index_dataset(dir.string());
    } catch (const DataError& e) {
        threw = std::string(e.what()).find("orphan.png") != std::string::npos;
    }
    require(threw, "orphan listed in the error");
}

void chk_run_config() {
    RunConfig c = parse_run_config_text("steps = 10\n# comment\nbatch=2\nlambda = 0.5\n");
    require(c.steps == 10 && c.batch == 2, "key=value parsed");
    require_close(c.lambda, 0.5, 0.0, "lambda parsed");
    require(c.patch == 64, "defaults kept");
    bool threw = false;
    try {
        parse_run_config_text("stpes = 10\n");
    } catch (const ConfigError&) {
        threw = true;
    }
    require(threw, "unknown key rejected");
}

} // namespace

const std::vector<VerifyCheck>& verify_checks() {
    static const std::vector<VerifyCheck> checks = {
        {"tensor.gelu_values", chk_gelu_values},
        {"tensor.softmax", chk_softmax},
        {"tensor.matmul_oracle", chk_matmul},
        {"tensor.conv2d_oracle", chk_conv2d},
        {"tensor.dwconv_oracle", chk_dwconv},
        {"tensor.layer_norm_oracle", chk_layer_norm},
        {"tensor.pixel_shuffle_oracle", chk_pixel_shuffle},
        {"tensor.dft2_values", chk_dft2_values},
        {"tensor.dft2_direct_oracle", chk_dft2_direct},
        {"tensor.dft2_linearity", chk_dft2_linearity},
        {"tensor.dft2_parseval", chk_dft2_parseval},
        {"tensor.grad_sum_rule", chk_grad_sum_rule},
        {"tensor.grad_elementwise", chk_grad_elementwise},
        {"tensor.grad_linops", chk_grad_linops},
        {"windowing.partition_roundtrip", chk_partition_roundtrip},
        {"windowing.candidate_offsets", chk_offsets},
        {"windowing.index_table_clamp", chk_index_table},
        {"attention.bias_index_map", chk_bias_map},
        {"attention.topk_ties", chk_topk},
        {"attention.rwam_oracle_100", chk_rwam_oracle},
        {"attention.rwam_single_window", chk_rwam_single_window},
        {"attention.dense_coverage", chk_dense_coverage},
        {"attention.hard_routing_bitwise", chk_hard_routing},
        {"attention.swam_shift0_oracle", chk_swam_shift0_oracle},
        {"attention.swam_shifted_oracle", chk_swam_shifted_oracle},
        {"attention.swam_mask", chk_swam_mask},
        {"attention.translation_equivariance", chk_swam_translation},
        {"attention.rows_stochastic", chk_attn_rows_stochastic},
        {"attention.mac_formula", chk_mac_formula},
        {"attention.mac_scaling", chk_mac_scaling},
        {"attention.gradients", chk_grad_attention},
        {"network.identity_residual", chk_identity_residual},
        {"network.pad_crop_msr_shapes", chk_pad_crop},
        {"network.count_report", chk_count_report},
        {"objective.l1_oracle", chk_l1},
        {"objective.fft_loss", chk_fft_loss},
        {"objective.degrade_gt", chk_degrade_gt},
        {"objective.msr", chk_msr},
        {"trainer.cosine_schedule", chk_cosine},
        {"trainer.adamw_oracle", chk_adamw_oracle},
        {"trainer.determinism", chk_train_determinism},
        {"trainer.flip_consistency", chk_flip_consistency},
        {"trainer.checkpoint", chk_checkpoint},
        {"toolkit.psnr", chk_psnr},
        {"toolkit.attn_distance", chk_attn_distance},
        {"toolkit.png_roundtrip", chk_png},
        {"toolkit.dataset_index", chk_dataset_index},
        {"toolkit.run_config", chk_run_config},
    };
    return checks;
}

int run_verify(const std::string& filter) {
    int failures = 0, ran = 0;
    for (const auto& c : verify_checks()) {
        if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
        ++ran;
        try {
            c.fn();
            std::printf("[PASS] %s\n", c.name.c_str());
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %s: %s\n", c.name.c_str(), e.what());
        }
    }
    std::printf("%d/%d checks passed\n", ran - failures, ran);
    return failures;
}

} // namespace rwf
