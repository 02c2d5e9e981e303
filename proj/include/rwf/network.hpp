#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rwf/attention.hpp"
#include "rwf/tensor.hpp"

namespace rwf {

struct ModelConfig {
    std::array<int, 4> depths{1, 1, 1, 1};
    int base_channels = 8;                 // C; channels at scale i are 2^i * C
    int window = 4;                        // k
    std::array<int, 4> heads{1, 2, 4, 8};
    std::array<int, 4> r_i{1, 1, 1, 1};
    int rho = 1;                           // candidate region radius, window units
    int ffn_expansion = 2;                 // e
    bool msr_enabled = true;

    static ModelConfig desk();   // acceptance-scale preset
    static ModelConfig rwf_t();
    static ModelConfig rwf_s();
    static ModelConfig rwf_b();

    void validate() const;
    int channels_at(int scale) const { return base_channels << scale; }
};

struct FfnParams {
    Tensor ln_g, ln_b;
    Tensor conv1_w, conv1_b;  // c -> 2*e*c
    Tensor dw_w, dw_b;        // depthwise 3x3 on e*c
    Tensor sca_w, sca_b;      // e*c -> e*c on the pooled vector
    Tensor conv2_w, conv2_b;  // e*c -> c
};

struct BlockParams {
    Tensor ln_g, ln_b;
    AttnParams rwam;
    AttnParams swam;
    AttentionConfig rwam_cfg;
    AttentionConfig swam_cfg;
    Tensor fuse_w, fuse_b;
    FfnParams ffn;
};

Tensor ffn_forward(const Tensor& x, const FfnParams& p);

// LN -> channel-split halves -> RWAM / SWAM -> concat -> 1x1 fuse.
// The caller adds the residual.
Tensor irblock_forward(const Tensor& x, const BlockParams& p, AttnRecord* record = nullptr);

// Y = FFN(X) + X with X = IRBlock(F_in) + F_in.
Tensor block_forward(const Tensor& x, const BlockParams& p, AttnRecord* record = nullptr);

struct ModelOutput {
    Tensor restored;              // [3,h,w]
    std::vector<Tensor> msr;      // residuals at h/2, h/4, h/8
    AttnRecord record;            // filled when requested
};

// The 4-scale U-shaped network. Parameters are reachable both through the
// structured views and through the canonical name map (the checkpoint
// contract: scale.block.submodule.tensor).
class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);

    ModelOutput forward(const Tensor& img, bool record_attn = false);

    const ModelConfig& config() const { return cfg_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    Tensor& param(const std::string& name);

private:
    Tensor add_param(const std::string& name, std::vector<int> shape, const std::string& init,
                     Rng& rng);
    AttnParams make_attn(const std::string& prefix, int cb, const AttentionConfig& cfg,
                         bool routed, Rng& rng);
    FfnParams make_ffn(const std::string& prefix, int c, Rng& rng);
    BlockParams make_block(const std::string& prefix, int scale, int block_idx, Rng& rng);

    ModelConfig cfg_;
    std::map<std::string, Tensor> params_;
    std::vector<std::vector<BlockParams>> enc_blocks_;  // scales 0..3
    std::vector<std::vector<BlockParams>> dec_blocks_;  // scales 2..0
    Tensor shallow_w_, shallow_b_;
    std::vector<Tensor> down_w_, down_b_;               // between scales 0->1,1->2,2->3
    std::vector<Tensor> up_w_, up_b_;                   // 3->2, 2->1, 1->0
    std::vector<Tensor> skip_w_, skip_b_;
    Tensor head_w_, head_b_;
    std::vector<Tensor> msr_w_, msr_b_;                 // heads at h/8, h/4, h/2
};

struct LayerCost {
    std::string name;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;  // multiply-accumulates
};

struct CostReport {
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    std::vector<LayerCost> layers;
};

// Analytic parameter and FLOP counts for a config at input size h x w.
// FLOPs are multiply-accumulate counts (one fused multiply-add = 1).
CostReport count_params_flops(const ModelConfig& cfg, int h, int w);

} // namespace rwf
