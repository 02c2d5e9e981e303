#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rwf/tensor.hpp"
#include "rwf/windowing.hpp"

namespace rwf {

struct AttentionConfig {
    int k = 8;       // window side
    int heads = 1;   // m
    int r_i = 1;     // selected candidate windows (rwam)
    RegionShape region;  // rwam candidate shape
    int shift = 0;   // swam cyclic shift, 0 or k/2
};

// Parameters of one attention branch. bias_cand/bias_center are the learned
// relative-position tables: candidates [r_n, m, (2k-1)^2], center [m, (2k-1)^2].
struct AttnParams {
    Tensor qkv_w, qkv_b;    // 1x1 projection c_b -> 3*c_b
    Tensor proj_w, proj_b;  // 1x1 output projection
    Tensor bias_cand;       // rwam only
    Tensor bias_center;
};

struct RouterSelection {
    Tensor similarity;            // H: [s_h, s_w, r_n], detached from the tape
    std::vector<int> relative;    // I: nw * r_i, slot indices into the candidate list
    std::vector<int> absolute;    // J: nw * r_i, flat window indices
    int r_i = 0;
};

// One recorded attention instance: a window's row-stochastic weight matrix and
// the absolute pixel coordinates of its query/key tokens.
struct AttnEntry {
    int scale = 0;
    int block = 0;
    int head = 0;
    std::string branch;  // "rwam" | "swam"
    int nq = 0, nk = 0;
    int fh = 0, fw = 0;                                // feature-map size the entry was taken from
    std::vector<double> weights;                       // nq * nk, rows sum to 1
    std::vector<std::pair<double, double>> q_coords;   // (y, x)
    std::vector<std::pair<double, double>> k_coords;
};

struct AttnRecord {
    std::vector<AttnEntry> entries;
};

// Mean over the k^2 token axis of [s_h,s_w,d,k^2] windows.
std::pair<Tensor, Tensor> window_descriptors(const Tensor& q_windows, const Tensor& k_windows);

// H(i,j,.) = softmax over candidates of dot(Q_r(i,j), K_r(candidate)).
Tensor regional_similarity(const Tensor& q_desc, const Tensor& k_desc, const IndexTable& table);

// Per window, the r_i slots with largest similarity; ties broken by lowest
// slot index; output ordered by descending similarity then ascending slot.
std::vector<int> topk_select(const Tensor& similarity, int r_i);

std::vector<int> remap_indices(const std::vector<int>& relative, const IndexTable& table, int r_i);

// Flattened (q,p) -> relative-coordinate table index map for k x k windows.
std::vector<int> bias_index_map(int k);

// [m,(2k-1)^2] table slice -> [m,k^2,k^2] additive bias.
Tensor build_bias_matrix(const Tensor& table_slice, int k);

// Concatenated biases of the selected candidate tables followed by the center
// table: [nw, m, k^2, (r_i+1)*k^2]. Order matches the K/V concatenation.
Tensor gather_bias(const Tensor& bias_cand, const Tensor& bias_center,
                   const std::vector<int>& relative, int r_i, int k);

struct AttnDebug {
    // Test hook: additive perturbation applied to H before TopK (size nw*r_n).
    const std::vector<double>* router_noise = nullptr;
    RouterSelection* selection_out = nullptr;
};

Tensor rwam_forward(const Tensor& x, const AttnParams& params, const AttentionConfig& cfg,
                    AttnRecord* record = nullptr, const AttnDebug* debug = nullptr);

Tensor swam_forward(const Tensor& x, const AttnParams& params, const AttentionConfig& cfg,
                    AttnRecord* record = nullptr);

// Analytic MAC count of the attention core (QK^T and AV): 2*(r_i+1)*k^2*h*w*d.
std::uint64_t count_attention_macs(const AttentionConfig& cfg, int h, int w, int d);

// Instrumented counter incremented by the attention cores.
std::uint64_t attention_mac_count();
void reset_attention_mac_count();

} // namespace rwf
