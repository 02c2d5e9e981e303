#include "rwf/network.hpp"

#include <cmath>

namespace rwf {

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.depths = {1, 1, 1, 1};
    c.base_channels = 8;
    c.window = 4;
    c.rho = 1;
    return c;
}

ModelConfig ModelConfig::rwf_t() {
    ModelConfig c;
    c.depths = {2, 4, 6, 8};
    c.base_channels = 32;
    c.window = 8;
    c.rho = 2;
    return c;
}

ModelConfig ModelConfig::rwf_s() {
    ModelConfig c = rwf_t();
    c.depths = {2, 4, 4, 8};
    c.base_channels = 48;
    return c;
}

ModelConfig ModelConfig::rwf_b() {
    ModelConfig c = rwf_t();
    c.base_channels = 64;
    return c;
}

void ModelConfig::validate() const {
    for (int d : depths)
        if (d < 1) throw ConfigError("ModelConfig: depths must be >= 1");
    if (base_channels < 2 || base_channels % 2 != 0)
        throw ConfigError("ModelConfig: base channels must be even and >= 2");
    if (window < 1) throw ConfigError("ModelConfig: window must be >= 1");
    if (rho < 1) throw ConfigError("ModelConfig: rho must be >= 1");
    if (ffn_expansion < 1) throw ConfigError("ModelConfig: ffn expansion must be >= 1");
    for (int s = 0; s < 4; ++s) {
        int cb = channels_at(s) / 2;
        if (cb % heads[static_cast<std::size_t>(s)] != 0)
            throw ConfigError("ModelConfig: branch channels at scale " + std::to_string(s) +
                              " not divisible by head count");
        if (r_i[static_cast<std::size_t>(s)] < 1)
            throw ConfigError("ModelConfig: r_i must be >= 1");
    }
}

// ---- forward pieces ----

Tensor ffn_forward(const Tensor& x, const FfnParams& p) {
    Tensor t = layer_norm(x, p.ln_g, p.ln_b);
    t = conv2d(t, p.conv1_w, p.conv1_b, 1, 0);
    int ec = t.dim(0) / 2;
    Tensor xt = slice(t, 0, 0, ec);
    Tensor xb = slice(t, 0, ec, ec);
    Tensor u = mul(gelu(dwconv(xt, p.dw_w, p.dw_b, 1)), xb);
    int hp = u.dim(1), wp = u.dim(2);
    Tensor pooled = mean_axis(reshape(u, {ec, hp * wp}), 1);  // [ec]
    Tensor gate = matmul(reshape(p.sca_w, {ec, ec}), reshape(pooled, {ec, 1}));
    gate = add(reshape(gate, {ec}), p.sca_b);
    u = mul_channel(u, gate);
    return conv2d(u, p.conv2_w, p.conv2_b, 1, 0);
}

Tensor irblock_forward(const Tensor& x, const BlockParams& p, AttnRecord* record) {
    int c = x.dim(0);
    if (c % 2 != 0) throw ConfigError("irblock_forward: channel count must be even");
    Tensor t = layer_norm(x, p.ln_g, p.ln_b);
    int half = c / 2;
    Tensor a = rwam_forward(slice(t, 0, 0, half), p.rwam, p.rwam_cfg, record);
    Tensor b = swam_forward(slice(t, 0, half, half), p.swam, p.swam_cfg, record);
    return conv2d(concat({a, b}, 0), p.fuse_w, p.fuse_b, 1, 0);
}

Tensor block_forward(const Tensor& x, const BlockParams& p, AttnRecord* record) {
    Tensor mid = add(irblock_forward(x, p, record), x);
    return add(ffn_forward(mid, p.ffn), mid);
}

// ---- model construction ----

Tensor Model::add_param(const std::string& name, std::vector<int> shape,
                        const std::string& init, Rng& rng) {
    Tensor t = Tensor::zeros(shape, true);
    if (init == "fanin") {
        // fan-in = product of all dims but the first
        std::size_t fan = numel(shape) / static_cast<std::size_t>(shape[0]);
        double lim = 1.0 / std::sqrt(static_cast<double>(fan));
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-lim, lim);
    } else if (init == "one") {
        std::fill(t.vec().begin(), t.vec().end(), 1.0);
    } else if (init == "trunc") {
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.trunc_normal(0.02);
    }  // "zero": leave as is
    params_.emplace(name, t);
    return t;
}

AttnParams Model::make_attn(const std::string& prefix, int cb, const AttentionConfig& cfg,
                            bool routed, Rng& rng) {
    AttnParams p;
    p.qkv_w = add_param(prefix + ".qkv.weight", {3 * cb, cb, 1, 1}, "fanin", rng);
    p.qkv_b = add_param(prefix + ".qkv.bias", {3 * cb}, "zero", rng);
    p.proj_w = add_param(prefix + ".proj.weight", {cb, cb, 1, 1}, "fanin", rng);
    p.proj_b = add_param(prefix + ".proj.bias", {cb}, "zero", rng);
    int span2 = (2 * cfg.k - 1) * (2 * cfg.k - 1);
    if (routed) {
        int r_n = cfg.region.candidate_count();
        p.bias_cand = add_param(prefix + ".bias_cand", {r_n, cfg.heads, span2}, "trunc", rng);
    }
    p.bias_center = add_param(prefix + ".bias_center", {cfg.heads, span2}, "trunc", rng);
    return p;
}

FfnParams Model::make_ffn(const std::string& prefix, int c, Rng& rng) {
    int e = cfg_.ffn_expansion;
    int ec = e * c;
    FfnParams p;
    p.ln_g = add_param(prefix + ".ln.gamma", {c}, "one", rng);
    p.ln_b = add_param(prefix + ".ln.beta", {c}, "zero", rng);
    p.conv1_w = add_param(prefix + ".conv1.weight", {2 * ec, c, 1, 1}, "fanin", rng);
    p.conv1_b = add_param(prefix + ".conv1.bias", {2 * ec}, "zero", rng);
    p.dw_w = add_param(prefix + ".dwconv.weight", {ec, 1, 3, 3}, "fanin", rng);
    p.dw_b = add_param(prefix + ".dwconv.bias", {ec}, "zero", rng);
    p.sca_w = add_param(prefix + ".sca.weight", {ec, ec}, "fanin", rng);
    p.sca_b = add_param(prefix + ".sca.bias", {ec}, "zero", rng);
    p.conv2_w = add_param(prefix + ".conv2.weight", {c, ec, 1, 1}, "fanin", rng);
    p.conv2_b = add_param(prefix + ".conv2.bias", {c}, "zero", rng);
    return p;
}

BlockParams Model::make_block(const std::string& prefix, int scale, int block_idx, Rng& rng) {
    int c = cfg_.channels_at(scale);
    int cb = c / 2;
    BlockParams p;
    p.rwam_cfg.k = cfg_.window;
    p.rwam_cfg.heads = cfg_.heads[static_cast<std::size_t>(scale)];
    p.rwam_cfg.r_i = cfg_.r_i[static_cast<std::size_t>(scale)];
    p.rwam_cfg.region.kind = (block_idx % 2 == 0) ? RegionKind::Cross : RegionKind::Rectangle;
    p.rwam_cfg.region.radius = cfg_.rho;
    p.swam_cfg.k = cfg_.window;
    p.swam_cfg.heads = cfg_.heads[static_cast<std::size_t>(scale)];
    p.swam_cfg.shift = (block_idx % 2 == 0) ? 0 : cfg_.window / 2;

    p.ln_g = add_param(prefix + ".ln1.gamma", {c}, "one", rng);
    p.ln_b = add_param(prefix + ".ln1.beta", {c}, "zero", rng);
    p.rwam = make_attn(prefix + ".rwam", cb, p.rwam_cfg, true, rng);
    p.swam = make_attn(prefix + ".swam", cb, p.swam_cfg, false, rng);
    p.fuse_w = add_param(prefix + ".fuse.weight", {c, c, 1, 1}, "fanin", rng);
    p.fuse_b = add_param(prefix + ".fuse.bias", {c}, "zero", rng);
    p.ffn = make_ffn(prefix + ".ffn", c, rng);
    return p;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    int C = cfg_.base_channels;

    shallow_w_ = add_param("shallow.weight", {C, 3, 3, 3}, "fanin", rng);
    shallow_b_ = add_param("shallow.bias", {C}, "zero", rng);

    enc_blocks_.resize(4);
    for (int s = 0; s < 4; ++s) {
        for (int b = 0; b < cfg_.depths[static_cast<std::size_t>(s)]; ++b)
            enc_blocks_[static_cast<std::size_t>(s)].push_back(
                make_block("enc" + std::to_string(s) + ".block" + std::to_string(b), s, b, rng));
        if (s < 3) {
            int c = cfg_.channels_at(s);
            down_w_.push_back(add_param("down" + std::to_string(s) + ".weight", {2 * c, c, 2, 2},
                                        "fanin", rng));
            down_b_.push_back(add_param("down" + std::to_string(s) + ".bias", {2 * c}, "zero", rng));
        }
    }

    // MSR head at the bottleneck (h/8)
    msr_w_.push_back(add_param("msr4.weight", {3, cfg_.channels_at(3), 3, 3}, "fanin", rng));
    msr_b_.push_back(add_param("msr4.bias", {3}, "zero", rng));

    dec_blocks_.resize(3);
    for (int d = 0; d < 3; ++d) {
        int s = 2 - d;  // decoder scales 2, 1, 0
        int c = cfg_.channels_at(s);
        std::string sn = std::to_string(s);
        up_w_.push_back(add_param("up" + sn + ".weight", {4 * c, 2 * c, 1, 1}, "fanin", rng));
        up_b_.push_back(add_param("up" + sn + ".bias", {4 * c}, "zero", rng));
        skip_w_.push_back(add_param("skip" + sn + ".weight", {c, 2 * c, 1, 1}, "fanin", rng));
        skip_b_.push_back(add_param("skip" + sn + ".bias", {c}, "zero", rng));
        for (int b = 0; b < cfg_.depths[static_cast<std::size_t>(s)]; ++b)
            dec_blocks_[static_cast<std::size_t>(d)].push_back(
                make_block("dec" + sn + ".block" + std::to_string(b), s, b, rng));
        if (s >= 1) {
            std::string mi = std::to_string(s + 1);  // scale 2 -> msr3, scale 1 -> msr2
            msr_w_.push_back(add_param("msr" + mi + ".weight", {3, c, 3, 3}, "fanin", rng));
            msr_b_.push_back(add_param("msr" + mi + ".bias", {3}, "zero", rng));
        }
    }

    head_w_ = add_param("head.weight", {3, C, 3, 3}, "fanin", rng);
    head_b_ = add_param("head.bias", {3}, "zero", rng);
}

Tensor& Model::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("Model: unknown parameter " + name);
    return it->second;
}

ModelOutput Model::forward(const Tensor& img, bool record_attn) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw ShapeError("Model::forward: expected img[3,h,w], got " + shape_str(img.shape()));
    int h = img.dim(1), w = img.dim(2);
    if (h < cfg_.window || w < cfg_.window)
        throw ShapeError("Model::forward: input smaller than window size");
    int mult = cfg_.window * 8;  // divisible by k at every scale
    int hp = (h + mult - 1) / mult * mult;
    int wp = (w + mult - 1) / mult * mult;
    Tensor x = (hp != h || wp != w) ? pad_edge(img, 0, hp - h, 0, wp - w) : img;

    ModelOutput out;
    AttnRecord* rec = record_attn ? &out.record : nullptr;
    auto label = [&](int scale, int block, std::size_t from) {
        if (!rec) return;
        for (std::size_t i = from; i < rec->entries.size(); ++i) {
            rec->entries[i].scale = scale;
            rec->entries[i].block = block;
        }
    };

    Tensor f = conv2d(x, shallow_w_, shallow_b_, 1, 1);
    std::vector<Tensor> skips;
    for (int s = 0; s < 4; ++s) {
        int bi = 0;
        for (const auto& blk : enc_blocks_[static_cast<std::size_t>(s)]) {
            std::size_t from = rec ? rec->entries.size() : 0;
            f = block_forward(f, blk, rec);
            label(s, bi++, from);
        }
        if (s < 3) {
            skips.push_back(f);
            f = conv2d(f, down_w_[static_cast<std::size_t>(s)], down_b_[static_cast<std::size_t>(s)], 2, 0);
        }
    }

    Tensor r4 = conv2d(f, msr_w_[0], msr_b_[0], 1, 1);

    Tensor r3, r2;
    for (int d = 0; d < 3; ++d) {
        int s = 2 - d;
        Tensor u = pixel_shuffle(
            conv2d(f, up_w_[static_cast<std::size_t>(d)], up_b_[static_cast<std::size_t>(d)], 1, 0), 2);
        Tensor cat = concat({u, skips[static_cast<std::size_t>(s)]}, 0);
        f = conv2d(cat, skip_w_[static_cast<std::size_t>(d)], skip_b_[static_cast<std::size_t>(d)], 1, 0);
        int bi = 0;
        for (const auto& blk : dec_blocks_[static_cast<std::size_t>(d)]) {
            std::size_t from = rec ? rec->entries.size() : 0;
            f = block_forward(f, blk, rec);
            label(s + 4, bi++, from);  // decoder scales tagged 4+scale
        }
        if (s == 2) r3 = conv2d(f, msr_w_[1], msr_b_[1], 1, 1);
        if (s == 1) r2 = conv2d(f, msr_w_[2], msr_b_[2], 1, 1);
    }

    Tensor irs = conv2d(f, head_w_, head_b_, 1, 1);
    Tensor restored = add(x, irs);
    out.restored = (hp != h || wp != w) ? crop_spatial(restored, 0, 0, h, w) : restored;
    auto crop_to = [&](Tensor t, int j) {
        int th = h >> j, tw = w >> j;
        if (t.dim(1) != th || t.dim(2) != tw) t = crop_spatial(t, 0, 0, th, tw);
        return t;
    };
    out.msr.push_back(crop_to(r2, 1));
    out.msr.push_back(crop_to(r3, 2));
    out.msr.push_back(crop_to(r4, 3));
    return out;
}

// ---- analytic cost counting ----

namespace {

struct CostAcc {
    CostReport rep;
    void layer(const std::string& name, std::uint64_t params, std::uint64_t flops) {
        rep.layers.push_back({name, params, flops});
        rep.params += params;
        rep.flops += flops;
    }
    void conv(const std::string& name, int cin, int cout, int kh, int kw, int oh, int ow) {
        std::uint64_t p = static_cast<std::uint64_t>(cout) * cin * kh * kw + cout;
        std::uint64_t f = static_cast<std::uint64_t>(cout) * cin * kh * kw * oh * ow +
                          static_cast<std::uint64_t>(cout) * oh * ow;
        layer(name, p, f);
    }
};

} // namespace

CostReport count_params_flops(const ModelConfig& cfg, int h, int w) {
    cfg.validate();
    CostAcc acc;
    int C = cfg.base_channels;
    int k = cfg.window;
    int span2 = (2 * k - 1) * (2 * k - 1);

    auto attn_branch = [&](const std::string& name, int cb, int m, int r_i, int r_n,
                           int hs, int ws, bool routed) {
        acc.conv(name + ".qkv", cb, 3 * cb, 1, 1, hs, ws);
        AttentionConfig ac;
        ac.k = k;
        ac.r_i = routed ? r_i : 0;
        std::uint64_t core = 2ull * static_cast<std::uint64_t>(ac.r_i + 1) * k * k *
                             static_cast<std::uint64_t>(hs) * ws * cb;
        std::uint64_t bias_params = static_cast<std::uint64_t>(m) * span2;
        if (routed) {
            bias_params += static_cast<std::uint64_t>(r_n) * m * span2;
            // router: descriptors + similarity dot products
            std::uint64_t nw = static_cast<std::uint64_t>(hs / k) * (ws / k);
            core += static_cast<std::uint64_t>(hs) * ws * cb * 2 + nw * r_n * cb;
        }
        acc.layer(name + ".core", bias_params, core);
        acc.conv(name + ".proj", cb, cb, 1, 1, hs, ws);
    };

    auto block = [&](const std::string& name, int scale, int block_idx) {
        int c = C << scale;
        int cb = c / 2;
        int hs = h >> scale, ws = w >> scale;
        int m = cfg.heads[static_cast<std::size_t>(scale)];
        RegionShape rs;
        rs.kind = (block_idx % 2 == 0) ? RegionKind::Cross : RegionKind::Rectangle;
        rs.radius = cfg.rho;
        acc.layer(name + ".ln1", 2ull * c, 5ull * c * hs * ws);
        attn_branch(name + ".rwam", cb, m, cfg.r_i[static_cast<std::size_t>(scale)],
                    rs.candidate_count(), hs, ws, true);
        attn_branch(name + ".swam", cb, m, 0, 0, hs, ws, false);
        acc.conv(name + ".fuse", c, c, 1, 1, hs, ws);
        int ec = cfg.ffn_expansion * c;
        acc.layer(name + ".ffn.ln", 2ull * c, 5ull * c * hs * ws);
        acc.conv(name + ".ffn.conv1", c, 2 * ec, 1, 1, hs, ws);
        acc.conv(name + ".ffn.dwconv", 1, ec, 3, 3, hs, ws);
        // gelu + gate multiply + SCA (pool, matvec, broadcast)
        acc.layer(name + ".ffn.sca",
                  static_cast<std::uint64_t>(ec) * ec + ec,
                  static_cast<std::uint64_t>(ec) * hs * ws * 4 + static_cast<std::uint64_t>(ec) * ec);
        acc.conv(name + ".ffn.conv2", ec, c, 1, 1, hs, ws);
    };

    acc.conv("shallow", 3, C, 3, 3, h, w);
    for (int s = 0; s < 4; ++s) {
        for (int b = 0; b < cfg.depths[static_cast<std::size_t>(s)]; ++b)
            block("enc" + std::to_string(s) + ".block" + std::to_string(b), s, b);
        if (s < 3) {
            int c = C << s;
            acc.conv("down" + std::to_string(s), c, 2 * c, 2, 2, h >> (s + 1), w >> (s + 1));
        }
    }
    acc.conv("msr4", C << 3, 3, 3, 3, h >> 3, w >> 3);
    for (int d = 0; d < 3; ++d) {
        int s = 2 - d;
        int c = C << s;
        std::string sn = std::to_string(s);
        acc.conv("up" + sn, 2 * c, 4 * c, 1, 1, h >> (s + 1), w >> (s + 1));
        acc.conv("skip" + sn, 2 * c, c, 1, 1, h >> s, w >> s);
        for (int b = 0; b < cfg.depths[static_cast<std::size_t>(s)]; ++b)
            block("dec" + sn + ".block" + std::to_string(b), s, b);
        if (s >= 1) acc.conv("msr" + std::to_string(s + 1), c, 3, 3, 3, h >> s, w >> s);
    }
    acc.conv("head", C, 3, 3, 3, h, w);
    return acc.rep;
}

} // namespace rwf
