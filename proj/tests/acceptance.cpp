// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rwf/network.hpp"
#include "rwf/objective.hpp"
#include "rwf/toolkit.hpp"
#include "rwf/trainer.hpp"
#include "rwf/verify.hpp"

using namespace rwf;

namespace {

int g_failures = 0;

void report(int crit, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", crit, detail.c_str());
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criterion 1: rwam vs brute-force oracle, 100 randomized configs ----
void criterion1() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        AttentionConfig cfg;
        cfg.k = (trial % 2 == 0) ? 2 : 4;
        int s_h = 1 + static_cast<int>(rng.uniform_int(4));
        int s_w = 1 + static_cast<int>(rng.uniform_int(4));
        cfg.heads = 1 + static_cast<int>(rng.uniform_int(2));
        int cb = cfg.heads * (1 + static_cast<int>(rng.uniform_int(3)));
        cfg.region.kind = (rng.next_u64() & 1) ? RegionKind::Cross : RegionKind::Rectangle;
        cfg.region.radius = 1 + static_cast<int>(rng.uniform_int(2));
        cfg.r_i = 1 + static_cast<int>(rng.uniform_int(2));
        Tensor x = random_tensor({cb, s_h * cfg.k, s_w * cfg.k}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        worst = std::max(worst, max_abs_diff(rwam_forward(x, p, cfg), rwam_reference(x, p, cfg)));
    }
    double dt = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "rwam oracle equivalence, 100 configs, max err %.2e (tol 1e-10), %.1fs (< 60s)",
                  worst, dt);
    report(1, worst <= 1e-10 && dt < 60.0, buf);
}

// ---- criterion 2: degenerate full coverage equals dense attention ----
void criterion2() {
    Rng rng(1002);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        AttentionConfig cfg;
        cfg.k = 2;
        int s_h = 2 + static_cast<int>(rng.uniform_int(2));
        int s_w = 2 + static_cast<int>(rng.uniform_int(2));
        cfg.heads = 1 + static_cast<int>(rng.uniform_int(2));
        int cb = cfg.heads * (1 + static_cast<int>(rng.uniform_int(2)));
        cfg.region.kind = RegionKind::Rectangle;
        cfg.region.radius = std::max({s_h, s_w, 2}) - 1;
        cfg.r_i = cfg.region.candidate_count();
        Tensor x = random_tensor({cb, s_h * cfg.k, s_w * cfg.k}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        worst = std::max(worst, max_abs_diff(rwam_forward(x, p, cfg), rwam_reference(x, p, cfg)));
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "degenerate-coverage equivalence, 10 configs, max err %.2e (tol 1e-10)", worst);
    report(2, worst <= 1e-10, buf);
}

// ---- criterion 3: gradient fidelity ----
void criterion3() {
    auto t0 = std::chrono::steady_clock::now();
    double worst_op = 0.0;
    {
        Rng rng(1003);
        Tensor a = random_tensor({3, 4}, rng, 0.3, 1.2);
        auto fs = {
            std::function<Tensor(Tensor&)>([](Tensor& t) { return mean_all(gelu(t)); }),
            std::function<Tensor(Tensor&)>([](Tensor& t) { return mean_all(abs_val(t)); }),
            std::function<Tensor(Tensor&)>([](Tensor& t) { return mean_all(mul(softmax(t, 1), t)); }),
        };
        for (const auto& f : fs) worst_op = std::max(worst_op, grad_check(f, a));
        Tensor x = random_tensor({2, 4, 4}, rng);
        Tensor w = random_tensor({2, 2, 3, 3}, rng);
        Tensor b = random_tensor({2}, rng);
        auto fc = [&](Tensor& t) { return mean_all(conv2d(t, w, b, 1, 1)); };
        worst_op = std::max(worst_op, grad_check(fc, x));
        Tensor dw = random_tensor({2, 1, 3, 3}, rng);
        auto fdw = [&](Tensor& t) { return mean_all(mul(dwconv(t, dw, b, 1), t)); };
        worst_op = std::max(worst_op, grad_check(fdw, x));
        Tensor lg = random_tensor({2}, rng), lb = random_tensor({2}, rng);
        auto fln = [&](Tensor& t) { return mean_all(mul(layer_norm(t, lg, lb), t)); };
        worst_op = std::max(worst_op, grad_check(fln, x, 1e-5));
        auto fft = [&](Tensor& t) {
            auto [re, im] = dft2(t);
            return mean_all(add(mul(re, re), mul(im, im)));
        };
        worst_op = std::max(worst_op, grad_check(fft, x));
        Tensor m1 = random_tensor({3, 4}, rng), m2 = random_tensor({4, 2}, rng);
        auto fm = [&](Tensor& t) { return mean_all(matmul(t, m2)); };
        worst_op = std::max(worst_op, grad_check(fm, m1));
        Tensor ps = random_tensor({4, 2, 2}, rng);
        auto fps = [&](Tensor& t) { return mean_all(gelu(pixel_shuffle(t, 2))); };
        worst_op = std::max(worst_op, grad_check(fps, ps));
    }

    // full desk loss on a 3x16x16 input: tape gradient of every parameter vs
    // central differences on a seeded sample of coordinates
    Model model(ModelConfig::desk(), 2024);
    Rng drng(1033);
    Tensor img = random_tensor({3, 16, 16}, drng, 0.0, 1.0);
    Tensor clean = random_tensor({3, 16, 16}, drng, 0.0, 1.0);
    LossWeights wts;
    auto loss_value = [&]() {
        NoGrad ng;
        ModelOutput out = model.forward(img);
        return total_loss(out.restored, clean, out.msr, wts).total;
    };
    for (auto& [name, p] : model.params()) p.zero_grad();
    {
        ModelOutput out = model.forward(img);
        total_loss(out.restored, clean, out.msr, wts).total_tensor.backward();
    }
    double worst_param = 0.0;
    std::string worst_name;
    Rng pick(7);
    // some desk-loss parameter gradients sit at the 1e-8 scale, where central
    // differences carry ~1e-12 of rounding noise; the floor keeps the ratio
    // meaningful while still asserting ~1e-11 absolute agreement
    const double h = 3e-4, floor = 1e-7;
    for (auto& [name, p] : model.params()) {
        int samples = std::min<int>(2, static_cast<int>(p.size()));
        for (int s = 0; s < samples; ++s) {
            std::size_t idx = pick.uniform_int(p.size());
            double orig = p.data()[idx];
            p.data()[idx] = orig + h;
            double fp = loss_value();
            p.data()[idx] = orig - h;
            double fm = loss_value();
            p.data()[idx] = orig;
            double fd = (fp - fm) / (2 * h);
            double an = p.grad()[idx];
            double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), floor});
            if (rel > worst_param) {
                worst_param = rel;
                worst_name = name;
            }
        }
    }
    double dt = seconds_since(t0);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "gradient fidelity: ops max rel %.2e, desk loss max rel %.2e (%s), tol 1e-4, "
                  "%.0fs (< 300s)",
                  worst_op, worst_param, worst_name.c_str(), dt);
    report(3, worst_op <= 1e-4 && worst_param <= 1e-4 && dt < 300.0, buf);
}

// ---- criterion 4: complexity counts ----
void criterion4() {
    Rng rng(1004);
    AttentionConfig cfg;
    cfg.k = 4;
    cfg.heads = 1;
    cfg.r_i = 2;
    cfg.region = {RegionKind::Cross, 1};
    int cb = 2;
    bool exact = true;
    std::vector<std::uint64_t> routed, dense;
    for (int side : {16, 32, 64}) {
        Tensor x = random_tensor({cb, side, side}, rng);
        AttnParams p = random_attn_params(cb, cfg, rng);
        reset_attention_mac_count();
        rwam_forward(x, p, cfg);
        routed.push_back(attention_mac_count());
        exact = exact && (routed.back() == count_attention_macs(cfg, side, side, cb));
        std::uint64_t dm = 0;
        dense_whole_image_reference(x, p, cfg.k, cfg.heads, &dm);
        dense.push_back(dm);
    }
    bool linear = true, quadratic = true;
    for (int i = 0; i < 2; ++i) {
        double r = double(routed[i + 1]) / double(routed[i]);
        double d = double(dense[i + 1]) / double(dense[i]);
        linear = linear && std::fabs(r / 4.0 - 1.0) < 0.01;
        quadratic = quadratic && std::fabs(d / 16.0 - 1.0) < 0.01;
    }
    char buf[220];
    std::snprintf(buf, sizeof buf,
                  "MACs fit 2(r_i+1)k^2hwd exactly: %s; routed counts %llu/%llu/%llu linear: %s; "
                  "dense %llu/%llu/%llu quadratic: %s",
                  exact ? "yes" : "no", (unsigned long long)routed[0],
                  (unsigned long long)routed[1], (unsigned long long)routed[2],
                  linear ? "yes" : "no", (unsigned long long)dense[0],
                  (unsigned long long)dense[1], (unsigned long long)dense[2],
                  quadratic ? "yes" : "no");
    report(4, exact && linear && quadratic, buf);
}

// ---- criterion 5: schedule endpoints ----
void criterion5() {
    Schedule s{1e-3, 1e-7, 300000};
    bool ok = cosine_lr(0, s) == 1e-3 && cosine_lr(300000, s) == 1e-7;
    report(5, ok, "cosine_lr(0) == 1e-3 and cosine_lr(T) == 1e-7 exactly");
}

// ---- criterion 6: parameter/FLOP report (informational gate) ----
void criterion6() {
    CostReport rep = count_params_flops(ModelConfig::rwf_t(), 256, 256);
    double pm = double(rep.params) / 1e6, fg = double(rep.flops) / 1e9;
    double pgap = (pm - 11.15) / 11.15 * 100.0, fgap = (fg - 25.29) / 25.29 * 100.0;
    std::printf("  RWF-T @256x256: %.2f M params (published 11.15 M, %+.1f%%), "
                "%.2f G MACs (published 25.29 G, %+.1f%%)\n",
                pm, pgap, fg, fgap);
    std::printf("  per-layer itemization (%zu layers):\n", rep.layers.size());
    for (const auto& l : rep.layers)
        std::printf("    %-28s params %12llu  macs %16llu\n", l.name.c_str(),
                    (unsigned long long)l.params, (unsigned long long)l.flops);
    bool ok = !rep.layers.empty() && rep.params > 0 && rep.flops > 0;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "count report emitted with full itemization (params %+.1f%%, macs %+.1f%% vs "
                  "published; informational)",
                  pgap, fgap);
    report(6, ok, buf);
}

// ---- criteria 7 + 8: overfit smoke test and MSR trend (shared run) ----
Tensor smooth_random(Rng& rng, int h, int w) {
    Tensor coarse = random_tensor({3, h / 8, w / 8}, rng, 0.0, 1.0);
    Tensor base = bilinear_resize(coarse, h, w);
    // add pixel-level texture so the sub-scale structure terms have work to do
    for (std::size_t i = 0; i < base.size(); ++i)
        base.data()[i] = std::clamp(base.data()[i] * 0.8 + rng.uniform(0.0, 0.2), 0.0, 1.0);
    return base;
}

void criteria7and8() {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(1007);
    std::vector<std::pair<Tensor, Tensor>> data;
    for (int i = 0; i < 4; ++i) {
        Tensor clean = smooth_random(rng, 64, 64);
        Tensor degraded = Tensor::zeros({3, 64, 64});
        for (std::size_t j = 0; j < clean.size(); ++j)
            degraded.data()[j] = 0.6 * clean.data()[j] + 0.2;
        data.emplace_back(degraded, clean);
    }
    Model model(ModelConfig::desk(), 7);
    TrainConfig tc;
    tc.steps = 500;
    tc.batch = 2;
    tc.patch = 64;
    // short-horizon overfit run: a hotter peak rate than the long-schedule
    // default converges well within the 500-step budget
    tc.sched = {5e-3, 1e-7, 500};
    tc.augment = false;
    tc.ckpt_every = 0;
    auto log = train_loop(model, data, tc);

    double init_total = log.front().report.total, final_total = log.back().report.total;
    double base_psnr = 0.0, model_psnr = 0.0;
    {
        NoGrad ng;
        for (const auto& [deg, clean] : data) {
            base_psnr += psnr(deg, clean);
            model_psnr += psnr(model.forward(deg).restored, clean);
        }
        base_psnr /= 4;
        model_psnr /= 4;
    }
    double dt = seconds_since(t0);
    char buf[220];
    std::snprintf(buf, sizeof buf,
                  "overfit smoke test: loss %.4f -> %.4f (%.1f%%, need <= 10%%), psnr identity "
                  "%.2f dB -> model %.2f dB (gain %.2f, need >= 5), %.0fs (< 600s)",
                  init_total, final_total, final_total / init_total * 100.0, base_psnr, model_psnr,
                  model_psnr - base_psnr, dt);
    report(7, final_total <= 0.1 * init_total && model_psnr - base_psnr >= 5.0 && dt < 600.0, buf);

    const auto& mi = log.front().report.msr_terms;
    const auto& mf = log.back().report.msr_terms;
    bool msr_ok = mi.size() == 3 && mf.size() == 3;
    std::string detail = "MSR terms (lambda=0.1) step1 -> step500:";
    for (std::size_t i = 0; i < mi.size() && msr_ok; ++i) {
        char piece[64];
        std::snprintf(piece, sizeof piece, " scale%zu %.4f->%.4f", i + 2, mi[i], mf[i]);
        detail += piece;
        msr_ok = msr_ok && mf[i] <= 0.5 * mi[i];
    }
    report(8, msr_ok, detail + " (each must drop >= 50%)");
}

// ---- criterion 9: attention-distance metric ----
void criterion9() {
    AttnEntry e;
    e.nq = 4;
    e.nk = 4;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            e.q_coords.emplace_back(y, x);
            e.k_coords.emplace_back(y, x);
        }
    e.weights.assign(16, 0.0);
    for (int i = 0; i < 4; ++i) e.weights[i * 4 + i] = 1.0;
    AttnRecord ident;
    ident.entries.push_back(e);
    bool ok_ident = attn_distance(ident, 2, 2) == 0.0;

    e.weights.assign(16, 0.25);
    AttnRecord uni;
    uni.entries.push_back(e);
    double u = attn_distance(uni, 2, 2);
    bool ok_uni = std::fabs(u - 0.30178) <= 1e-5;

    Rng rng(1009);
    bool ok_range = true;
    for (int t = 0; t < 50; ++t) {
        AttnEntry r;
        r.nq = 3;
        r.nk = 4;
        for (int q = 0; q < 3; ++q) {
            r.q_coords.emplace_back(rng.uniform(0, 7), rng.uniform(0, 7));
            double z = 0.0;
            std::vector<double> row(4);
            for (double& v : row) {
                v = rng.uniform(0, 1);
                z += v;
            }
            for (double v : row) r.weights.push_back(v / z);
        }
        for (int k = 0; k < 4; ++k) r.k_coords.emplace_back(rng.uniform(0, 7), rng.uniform(0, 7));
        AttnRecord rec;
        rec.entries.push_back(r);
        double d = attn_distance(rec, 8, 8);
        ok_range = ok_range && d >= 0.0 && d <= 1.0;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "attn distance: identity -> 0 exact: %s; uniform 2x2 -> %.6f (0.30178 +- 1e-5): "
                  "%s; random records in [0,1]: %s",
                  ok_ident ? "yes" : "no", u, ok_uni ? "yes" : "no", ok_range ? "yes" : "no");
    report(9, ok_ident && ok_uni && ok_range, buf);
}

// ---- criterion 10: persistence ----
void criterion10() {
    auto dir = std::filesystem::temp_directory_path() / "rwf_acceptance";
    std::filesystem::create_directories(dir);
    Model model(ModelConfig::desk(), 11);
    std::string path = (dir / "model.rwfc").string();
    save_checkpoint(model.params(), path);
    auto loaded = load_checkpoint(path);
    bool bitwise = loaded.size() == model.params().size();
    for (const auto& [key, t] : model.params()) {
        auto it = loaded.find(key);
        bitwise = bitwise && it != loaded.end() && it->second.shape() == t.shape() &&
                  std::memcmp(it->second.data(), t.data(), t.size() * sizeof(double)) == 0;
        if (!bitwise) break;
    }
    std::ifstream f(path, std::ios::binary);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    raw[raw.size() / 3] = static_cast<char>(raw[raw.size() / 3] ^ 0x5a);
    std::string bad_path = (dir / "bad.rwfc").string();
    std::ofstream(bad_path, std::ios::binary).write(raw.data(), (std::streamsize)raw.size());
    bool rejected = false;
    try {
        load_checkpoint(bad_path);
    } catch (const FormatError&) {
        rejected = true;
    }
    char buf[120];
    std::snprintf(buf, sizeof buf, "checkpoint roundtrip bitwise: %s; corrupted CRC rejected: %s",
                  bitwise ? "yes" : "no", rejected ? "yes" : "no");
    report(10, bitwise && rejected, buf);
}

} // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criteria7and8();
    criterion9();
    criterion10();
    std::printf("%s (%d/10 criteria)\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
                10 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
