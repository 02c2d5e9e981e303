#include "rwf/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rwf {

namespace {
thread_local std::uint64_t g_mac_count = 0;
}

std::uint64_t attention_mac_count() { return g_mac_count; }
void reset_attention_mac_count() { g_mac_count = 0; }

std::pair<Tensor, Tensor> window_descriptors(const Tensor& q_windows, const Tensor& k_windows) {
    if (q_windows.rank() != 4 || k_windows.rank() != 4)
        throw ShapeError("window_descriptors: expected [s_h,s_w,d,k^2] windows");
    return {mean_axis(q_windows, 3), mean_axis(k_windows, 3)};
}

Tensor regional_similarity(const Tensor& q_desc, const Tensor& k_desc, const IndexTable& table) {
    if (q_desc.rank() != 3 || k_desc.rank() != 3)
        throw ShapeError("regional_similarity: expected [s_h,s_w,d] descriptors");
    int s_h = q_desc.dim(0), s_w = q_desc.dim(1), d = q_desc.dim(2);
    if (table.s_h != s_h || table.s_w != s_w)
        throw ShapeError("regional_similarity: index table grid mismatch");
    int r_n = table.r_n;
    std::vector<double> logits(static_cast<std::size_t>(s_h) * s_w * r_n);
    const double* pq = q_desc.data();
    const double* pk = k_desc.data();
    for (int i = 0; i < s_h; ++i)
        for (int j = 0; j < s_w; ++j) {
            const double* q = pq + (static_cast<std::size_t>(i) * s_w + j) * d;
            for (int slot = 0; slot < r_n; ++slot) {
                int cand = table.at(i, j, slot);
                const double* kd = pk + static_cast<std::size_t>(cand) * d;
                double dot = 0.0;
                for (int t = 0; t < d; ++t) dot += q[t] * kd[t];
                logits[(static_cast<std::size_t>(i) * s_w + j) * r_n + slot] = dot;
            }
        }
    Tensor lt = Tensor::from_data({s_h, s_w, r_n}, std::move(logits));
    return softmax(lt, 2);
}

std::vector<int> topk_select(const Tensor& similarity, int r_i) {
    if (similarity.rank() != 3) throw ShapeError("topk_select: expected H[s_h,s_w,r_n]");
    int r_n = similarity.dim(2);
    if (r_i < 1 || r_i > r_n)
        throw ConfigError("topk_select: r_i=" + std::to_string(r_i) + " out of range [1," +
                          std::to_string(r_n) + "]");
    int nw = similarity.dim(0) * similarity.dim(1);
    std::vector<int> out(static_cast<std::size_t>(nw) * r_i);
    const double* ph = similarity.data();
    std::vector<int> order(static_cast<std::size_t>(r_n));
    for (int wi = 0; wi < nw; ++wi) {
        const double* row = ph + static_cast<std::size_t>(wi) * r_n;
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [row](int a, int b) { return row[a] > row[b]; });
        for (int t = 0; t < r_i; ++t) out[static_cast<std::size_t>(wi) * r_i + t] = order[static_cast<std::size_t>(t)];
    }
    return out;
}

std::vector<int> remap_indices(const std::vector<int>& relative, const IndexTable& table, int r_i) {
    std::size_t nw = relative.size() / static_cast<std::size_t>(r_i);
    std::vector<int> out(relative.size());
    for (std::size_t wi = 0; wi < nw; ++wi)
        for (int t = 0; t < r_i; ++t)
            out[wi * r_i + t] = table.entries[wi * table.r_n + static_cast<std::size_t>(relative[wi * r_i + t])];
    return out;
}

std::vector<int> bias_index_map(int k) {
    int k2 = k * k, span = 2 * k - 1;
    std::vector<int> map(static_cast<std::size_t>(k2) * k2);
    for (int q = 0; q < k2; ++q)
        for (int p = 0; p < k2; ++p) {
            int dy = (q / k - p / k) + k - 1;
            int dx = (q % k - p % k) + k - 1;
            map[static_cast<std::size_t>(q) * k2 + p] = dy * span + dx;
        }
    return map;
}

Tensor build_bias_matrix(const Tensor& table_slice, int k) {
    if (table_slice.rank() != 2 || table_slice.dim(1) != (2 * k - 1) * (2 * k - 1))
        throw ShapeError("build_bias_matrix: expected [m,(2k-1)^2], got " +
                         shape_str(table_slice.shape()));
    return index_last(table_slice, bias_index_map(k), {k * k, k * k});
}

Tensor gather_bias(const Tensor& bias_cand, const Tensor& bias_center,
                   const std::vector<int>& relative, int r_i, int k) {
    int m = bias_center.dim(0);
    int k2 = k * k;
    int nw = static_cast<int>(relative.size()) / r_i;
    auto idx_map = bias_index_map(k);
    // selected candidate tables -> [nw*r_i, m, T] -> bias matrices
    Tensor sel = index_select(bias_cand, relative);                 // [nw*r_i, m, T]
    Tensor sel_b = index_last(sel, idx_map, {k2, k2});              // [nw*r_i, m, k2, k2]
    sel_b = reshape(sel_b, {nw, r_i, m, k2, k2});
    sel_b = permute(sel_b, {0, 2, 3, 1, 4});                        // [nw, m, k2, r_i, k2]
    sel_b = reshape(sel_b, {nw, m, k2, r_i * k2});
    Tensor cen_b = index_last(bias_center, idx_map, {k2, k2});      // [m, k2, k2]
    Tensor cen_rep = expand0(cen_b, nw);                            // [nw, m, k2, k2]
    return concat({sel_b, cen_rep}, 3);                             // [nw, m, k2, (r_i+1)*k2]
}

namespace {

// [c,h,w] -> per-window multi-head tokens [nw, m, k2, n]
Tensor window_tokens(const Tensor& x, int k, int m) {
    Tensor w = partition(x, k);  // [s_h,s_w,c,k2]
    int s_h = w.dim(0), s_w = w.dim(1), c = w.dim(2), k2 = w.dim(3);
    int nw = s_h * s_w, n = c / m;
    w = reshape(w, {nw, m, n, k2});
    return permute(w, {0, 1, 3, 2});
}

// inverse of window_tokens
Tensor tokens_to_plane(const Tensor& tok, int k, int s_h, int s_w, int c) {
    int nw = tok.dim(0), m = tok.dim(1), k2 = tok.dim(2), n = tok.dim(3);
    Tensor t = permute(tok, {0, 1, 3, 2});              // [nw,m,n,k2]
    t = reshape(t, {s_h, s_w, m * n, k2});
    (void)nw;
    (void)c;
    return merge(t, k, s_h * k, s_w * k);
}

void record_entries(AttnRecord* rec, const char* branch, const Tensor& attn,
                    const std::vector<std::pair<double, double>>& all_q,
                    const std::vector<std::vector<std::pair<double, double>>>& k_per_window,
                    int k2, int fh, int fw) {
    // attn: [nw, m, k2, K]
    int nw = attn.dim(0), m = attn.dim(1), K = attn.dim(3);
    const double* pa = attn.data();
    for (int wi = 0; wi < nw; ++wi)
        for (int hd = 0; hd < m; ++hd) {
            AttnEntry e;
            e.branch = branch;
            e.head = hd;
            e.fh = fh;
            e.fw = fw;
            e.nq = k2;
            e.nk = K;
            e.weights.assign(pa + ((static_cast<std::size_t>(wi) * m + hd) * k2) * K,
                             pa + ((static_cast<std::size_t>(wi) * m + hd) * k2 + k2) * K);
            e.q_coords.assign(all_q.begin() + static_cast<std::ptrdiff_t>(wi) * k2,
                              all_q.begin() + static_cast<std::ptrdiff_t>(wi + 1) * k2);
            e.k_coords = k_per_window[static_cast<std::size_t>(wi)];
            rec->entries.push_back(std::move(e));
        }
}

} // namespace

Tensor rwam_forward(const Tensor& x, const AttnParams& params, const AttentionConfig& cfg,
                    AttnRecord* record, const AttnDebug* debug) {
    if (x.rank() != 3) throw ShapeError("rwam_forward: expected x[c,h,w]");
    int cb = x.dim(0), h = x.dim(1), w = x.dim(2);
    int k = cfg.k, m = cfg.heads;
    if (cb % m != 0)
        throw ConfigError("rwam_forward: channels " + std::to_string(cb) +
                          " not divisible by heads " + std::to_string(m));
    if (h % k != 0 || w % k != 0)
        throw ConfigError("rwam_forward: spatial dims not divisible by window size");
    WindowGrid grid(k, h, w);
    IndexTable table = build_index_table(grid, cfg.region);
    if (cfg.r_i < 1 || cfg.r_i > table.r_n)
        throw ConfigError("rwam_forward: r_i out of range");
    int s_h = grid.s_h, s_w = grid.s_w, nw = grid.num_windows();
    int k2 = k * k, n = cb / m, r_i = cfg.r_i;

    Tensor qkv = conv2d(x, params.qkv_w, params.qkv_b, 1, 0);
    Tensor q = slice(qkv, 0, 0, cb);
    Tensor kk = slice(qkv, 0, cb, cb);
    Tensor v = slice(qkv, 0, 2 * cb, cb);

    // Router: hard selection, off the tape.
    RouterSelection selection;
    {
        NoGrad ng;
        Tensor qw = partition(q, k);
        Tensor kw = partition(kk, k);
        auto [qr, kr] = window_descriptors(qw, kw);
        Tensor H = regional_similarity(qr, kr, table);
        if (debug && debug->router_noise) {
            Tensor Hp = Tensor::from_data(H.shape(), H.vec());
            for (std::size_t i = 0; i < Hp.size(); ++i)
                Hp.data()[i] += (*debug->router_noise)[i];
            H = Hp;
        }
        selection.similarity = H;
        selection.r_i = r_i;
        selection.relative = topk_select(H, r_i);
        selection.absolute = remap_indices(selection.relative, table, r_i);
    }
    if (debug && debug->selection_out) *debug->selection_out = selection;

    Tensor qt = window_tokens(q, k, m);   // [nw,m,k2,n]
    Tensor kt = window_tokens(kk, k, m);
    Tensor vt = window_tokens(v, k, m);

    Tensor ksel = index_select(kt, selection.absolute);             // [nw*r_i,m,k2,n]
    ksel = reshape(ksel, {nw, r_i, m, k2, n});
    ksel = permute(ksel, {0, 2, 1, 3, 4});
    ksel = reshape(ksel, {nw, m, r_i * k2, n});
    Tensor vsel = index_select(vt, selection.absolute);
    vsel = reshape(vsel, {nw, r_i, m, k2, n});
    vsel = permute(vsel, {0, 2, 1, 3, 4});
    vsel = reshape(vsel, {nw, m, r_i * k2, n});
    Tensor kg = concat({ksel, kt}, 2);                              // selected then center
    Tensor vg = concat({vsel, vt}, 2);
    int K = (r_i + 1) * k2;

    Tensor bias = gather_bias(params.bias_cand, params.bias_center, selection.relative, r_i, k);

    double scl = 1.0 / std::sqrt(static_cast<double>(n));
    Tensor logits = matmul(qt, permute(kg, {0, 1, 3, 2}));
    g_mac_count += static_cast<std::uint64_t>(nw) * m * k2 * K * n;
    logits = add(scale(logits, scl), bias);
    Tensor attn = softmax(logits, 3);
    Tensor out_tok = matmul(attn, vg);
    g_mac_count += static_cast<std::uint64_t>(nw) * m * k2 * K * n;

    if (record) {
        std::vector<std::pair<double, double>> qpos(static_cast<std::size_t>(nw) * k2);
        std::vector<std::vector<std::pair<double, double>>> kpos(static_cast<std::size_t>(nw));
        for (int wi = 0; wi < nw; ++wi) {
            int iy = wi / s_w, ix = wi % s_w;
            for (int slot = 0; slot < k2; ++slot)
                qpos[static_cast<std::size_t>(wi) * k2 + slot] = {iy * k + slot / k, ix * k + slot % k};
            auto& kp = kpos[static_cast<std::size_t>(wi)];
            kp.reserve(static_cast<std::size_t>(K));
            for (int t = 0; t < r_i; ++t) {
                int jw = selection.absolute[static_cast<std::size_t>(wi) * r_i + t];
                int jy = jw / s_w, jx = jw % s_w;
                for (int slot = 0; slot < k2; ++slot)
                    kp.emplace_back(jy * k + slot / k, jx * k + slot % k);
            }
            for (int slot = 0; slot < k2; ++slot)
                kp.emplace_back(iy * k + slot / k, ix * k + slot % k);
        }
        record_entries(record, "rwam", attn, qpos, kpos, k2, h, w);
    }

    Tensor plane = tokens_to_plane(out_tok, k, s_h, s_w, cb);
    return conv2d(plane, params.proj_w, params.proj_b, 1, 0);
}

Tensor swam_forward(const Tensor& x, const AttnParams& params, const AttentionConfig& cfg,
                    AttnRecord* record) {
    if (x.rank() != 3) throw ShapeError("swam_forward: expected x[c,h,w]");
    int cb = x.dim(0), h = x.dim(1), w = x.dim(2);
    int k = cfg.k, m = cfg.heads, shift = cfg.shift;
    if (cb % m != 0) throw ConfigError("swam_forward: channels not divisible by heads");
    if (h % k != 0 || w % k != 0)
        throw ConfigError("swam_forward: spatial dims not divisible by window size");
    WindowGrid grid(k, h, w);
    int s_h = grid.s_h, s_w = grid.s_w, nw = grid.num_windows();
    int k2 = k * k, n = cb / m;

    Tensor xs = (shift != 0) ? roll2d(x, -shift, -shift) : x;
    Tensor qkv = conv2d(xs, params.qkv_w, params.qkv_b, 1, 0);
    Tensor q = slice(qkv, 0, 0, cb);
    Tensor kk = slice(qkv, 0, cb, cb);
    Tensor v = slice(qkv, 0, 2 * cb, cb);

    Tensor qt = window_tokens(q, k, m);
    Tensor kt = window_tokens(kk, k, m);
    Tensor vt = window_tokens(v, k, m);

    Tensor cen_b = build_bias_matrix(params.bias_center, k);  // [m,k2,k2]
    Tensor bias = expand0(cen_b, nw);                         // [nw,m,k2,k2]

    double scl = 1.0 / std::sqrt(static_cast<double>(n));
    Tensor logits = scale(matmul(qt, permute(kt, {0, 1, 3, 2})), scl);
    g_mac_count += static_cast<std::uint64_t>(nw) * m * k2 * k2 * n;
    logits = add(logits, bias);

    if (shift != 0) {
        // Cross-boundary masking: tokens originating from different image
        // regions must not attend to each other (-100 before softmax).
        std::vector<int> region(static_cast<std::size_t>(h) * w);
        auto slice_id = [&](int v2, int extent) {
            if (v2 < extent - k) return 0;
            if (v2 < extent - shift) return 1;
            return 2;
        };
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                region[static_cast<std::size_t>(y) * w + xx] = slice_id(y, h) * 3 + slice_id(xx, w);
        std::vector<double> maskv(static_cast<std::size_t>(nw) * m * k2 * k2, 0.0);
        for (int wi = 0; wi < nw; ++wi) {
            int iy = wi / s_w, ix = wi % s_w;
            for (int qs = 0; qs < k2; ++qs)
                for (int ps = 0; ps < k2; ++ps) {
                    int rq = region[static_cast<std::size_t>(iy * k + qs / k) * w + ix * k + qs % k];
                    int rp = region[static_cast<std::size_t>(iy * k + ps / k) * w + ix * k + ps % k];
                    if (rq != rp)
                        for (int hd = 0; hd < m; ++hd)
                            maskv[((static_cast<std::size_t>(wi) * m + hd) * k2 + qs) * k2 + ps] = -100.0;
                }
        }
        logits = add(logits, Tensor::from_data({nw, m, k2, k2}, std::move(maskv)));
    }

    Tensor attn = softmax(logits, 3);
    Tensor out_tok = matmul(attn, vt);
    g_mac_count += static_cast<std::uint64_t>(nw) * m * k2 * k2 * n;

    if (record) {
        auto orig = [&](int y, int xx) -> std::pair<double, double> {
            return {static_cast<double>((y + shift) % h), static_cast<double>((xx + shift) % w)};
        };
        std::vector<std::pair<double, double>> qpos(static_cast<std::size_t>(nw) * k2);
        std::vector<std::vector<std::pair<double, double>>> kpos(static_cast<std::size_t>(nw));
        for (int wi = 0; wi < nw; ++wi) {
            int iy = wi / s_w, ix = wi % s_w;
            auto& kp = kpos[static_cast<std::size_t>(wi)];
            for (int slot = 0; slot < k2; ++slot) {
                auto pc = orig(iy * k + slot / k, ix * k + slot % k);
                qpos[static_cast<std::size_t>(wi) * k2 + slot] = pc;
                kp.push_back(pc);
            }
        }
        record_entries(record, "swam", attn, qpos, kpos, k2, h, w);
    }

    Tensor plane = tokens_to_plane(out_tok, k, s_h, s_w, cb);
    if (shift != 0) plane = roll2d(plane, shift, shift);
    return conv2d(plane, params.proj_w, params.proj_b, 1, 0);
}

std::uint64_t count_attention_macs(const AttentionConfig& cfg, int h, int w, int d) {
    return 2ull * static_cast<std::uint64_t>(cfg.r_i + 1) * cfg.k * cfg.k *
           static_cast<std::uint64_t>(h) * w * static_cast<std::uint64_t>(d);
}

} // namespace rwf
