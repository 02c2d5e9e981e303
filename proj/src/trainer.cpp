#include "rwf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace rwf {

void adamw_step(std::map<std::string, Tensor>& params, OptimState& opt, double lr) {
    if (lr < 0.0) throw ConfigError("adamw_step: negative learning rate");
    opt.step += 1;
    double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (auto& [key, p] : params) {
        const auto& g = p.grad();
        if (g.size() != p.size())
            throw NumericError("adamw_step: missing gradient for " + key);
        for (double gv : g)
            if (!std::isfinite(gv)) throw NumericError("adamw_step: non-finite gradient in " + key);
        auto& m = opt.m[key];
        auto& v = opt.v[key];
        if (m.size() != p.size()) m.assign(p.size(), 0.0);
        if (v.size() != p.size()) v.assign(p.size(), 0.0);
        double* pd = p.data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            pd[i] -= lr * opt.weight_decay * pd[i];
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            pd[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

double cosine_lr(std::int64_t t, const Schedule& sched) {
    if (sched.total_steps <= 0) return sched.lr_start;
    if (t <= 0) return sched.lr_start;
    if (t >= sched.total_steps) return sched.lr_end;
    double frac = static_cast<double>(t) / static_cast<double>(sched.total_steps);
    return sched.lr_end +
           0.5 * (sched.lr_start - sched.lr_end) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

namespace {

Tensor flip_image(const Tensor& t, bool hflip, bool vflip) {
    if (!hflip && !vflip) return t;
    int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    std::vector<double> out(t.size());
    const double* p = t.data();
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int sy = vflip ? h - 1 - y : y;
                int sx = hflip ? w - 1 - x : x;
                out[(static_cast<std::size_t>(ic) * h + y) * w + x] =
                    p[(static_cast<std::size_t>(ic) * h + sy) * w + sx];
            }
    return Tensor::from_data(t.shape(), std::move(out));
}

Tensor crop_image(const Tensor& t, int top, int left, int p) {
    NoGrad ng;
    return crop_spatial(t, top, left, p, p);
}

} // namespace

TrainSample sample_patch(const Tensor& input, const Tensor& target, int p, Rng& rng,
                         bool augment) {
    int h = input.dim(1), w = input.dim(2);
    if (target.dim(1) != h || target.dim(2) != w)
        throw DataError("sample_patch: input/target size mismatch");
    if (h < p || w < p)
        throw DataError("sample_patch: image " + std::to_string(h) + "x" + std::to_string(w) +
                        " smaller than patch size " + std::to_string(p));
    int top = (h == p) ? 0 : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - p + 1)));
    int left = (w == p) ? 0 : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - p + 1)));
    TrainSample s;
    s.hflip = augment && (rng.next_u64() & 1u);
    s.vflip = augment && (rng.next_u64() & 1u);
    s.input = flip_image(crop_image(input, top, left, p), s.hflip, s.vflip);
    s.target = flip_image(crop_image(target, top, left, p), s.hflip, s.vflip);
    return s;
}

std::vector<StepLog> train_loop(Model& model,
                                const std::vector<std::pair<Tensor, Tensor>>& dataset,
                                const TrainConfig& cfg, OptimState* opt_io) {
    if (dataset.empty()) throw DataError("train_loop: empty dataset");
    std::vector<StepLog> log;
    if (cfg.steps <= 0) return log;
    OptimState local;
    OptimState& opt = opt_io ? *opt_io : local;
    Rng rng(cfg.seed);
    auto ckpt = [&](const char* tag) {
        if (cfg.out_dir.empty()) return;
        save_checkpoint(model.params(), cfg.out_dir + "/" + tag + ".rwfc");
        save_optim_state(opt, cfg.out_dir + "/" + tag + ".rwfc.opt");
    };
    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& [key, p] : model.params()) p.zero_grad();
        Tensor batch_loss;
        LossReport avg;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& pair = dataset[rng.uniform_int(dataset.size())];
            TrainSample s = sample_patch(pair.first, pair.second, cfg.patch, rng, cfg.augment);
            ModelOutput out = model.forward(s.input);
            std::vector<Tensor> residuals = cfg.msr_enabled ? out.msr : std::vector<Tensor>{};
            LossReport rep = total_loss(out.restored, s.target, residuals, cfg.weights);
            avg.l1 += rep.l1;
            avg.fft += rep.fft;
            if (avg.msr_terms.size() < rep.msr_terms.size()) avg.msr_terms.resize(rep.msr_terms.size(), 0.0);
            for (std::size_t i = 0; i < rep.msr_terms.size(); ++i) avg.msr_terms[i] += rep.msr_terms[i];
            avg.total += rep.total;
            batch_loss = batch_loss.defined() ? add(batch_loss, rep.total_tensor) : rep.total_tensor;
        }
        double inv = 1.0 / cfg.batch;
        avg.l1 *= inv;
        avg.fft *= inv;
        avg.total *= inv;
        for (double& t : avg.msr_terms) t *= inv;
        batch_loss = scale(batch_loss, inv);
        if (!std::isfinite(batch_loss.item()))
            throw NumericError("train_loop: non-finite loss at step " + std::to_string(step) +
                               "; last checkpoint retained");
        batch_loss.backward();

        if (cfg.clip_norm > 0.0) {
            double sq = 0.0;
            for (auto& [key, p] : model.params())
                for (double g : p.grad()) sq += g * g;
            double norm = std::sqrt(sq);
            if (norm > cfg.clip_norm) {
                double scl = cfg.clip_norm / norm;
                for (auto& [key, p] : model.params())
                    for (double& g : p.grad_vec()) g *= scl;
            }
        }

        double lr = cosine_lr(step, cfg.sched);
        adamw_step(model.params(), opt, lr);
        log.push_back({avg, lr});
        if (cfg.ckpt_every > 0 && (step + 1) % cfg.ckpt_every == 0) ckpt("last");
    }
    ckpt("final");
    return log;
}

// ---- checkpoint container ----

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const unsigned char* p;
    std::size_t len;
    std::size_t off = 0;
    void need(std::size_t n, const char* what) {
        if (off + n > len)
            throw FormatError(std::string("checkpoint: truncated ") + what + " at byte offset " +
                              std::to_string(off));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + static_cast<std::size_t>(i)]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + static_cast<std::size_t>(i)]) << (8 * i);
        off += 8;
        return v;
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return p[off++];
    }
};

} // namespace

void save_checkpoint(const std::map<std::string, Tensor>& tensors, const std::string& path,
                     bool as_f32) {
    std::string body;
    put_u32(body, 1u);  // version
    put_u32(body, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [key, t] : tensors) {
        put_u32(body, static_cast<std::uint32_t>(key.size()));
        body.append(key);
        body.push_back(as_f32 ? 0 : 1);
        put_u32(body, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) put_u64(body, static_cast<std::uint64_t>(d));
        if (as_f32) {
            for (double v : t.vec()) {
                float f = static_cast<float>(v);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_u32(body, bits);
            }
        } else {
            for (double v : t.vec()) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, 8);
                put_u64(body, bits);
            }
        }
    }
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("checkpoint: cannot open " + path + " for writing");
    f.write("RWFC", 4);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    std::string tail;
    put_u32(tail, crc);
    f.write(tail.data(), 4);
    if (!f) throw FormatError("checkpoint: write failed for " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() < 4 || raw.compare(0, 4, "RWFC") != 0)
        throw FormatError("checkpoint: bad magic at byte offset 0");
    if (raw.size() < 12) throw FormatError("checkpoint: truncated header at byte offset 4");
    std::size_t body_len = raw.size() - 8;  // minus magic and trailing crc
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[raw.size() - 4 + static_cast<std::size_t>(i)])) << (8 * i);
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(raw.data() + 4), static_cast<uInt>(body_len)));
    if (crc != stored_crc)
        throw FormatError("checkpoint: CRC mismatch at byte offset " + std::to_string(raw.size() - 4));
    Reader r{reinterpret_cast<const unsigned char*>(raw.data() + 4), body_len};
    std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    std::uint32_t count = r.u32("tensor count");
    std::map<std::string, Tensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t klen = r.u32("key length");
        r.need(klen, "key");
        std::string key(reinterpret_cast<const char*>(r.p + r.off), klen);
        r.off += klen;
        std::uint8_t dtype = r.u8("dtype");
        if (dtype > 1) throw FormatError("checkpoint: unknown dtype tag for " + key);
        std::uint32_t rank = r.u32("rank");
        std::vector<int> shape;
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint64_t dim = r.u64("dim");
            shape.push_back(static_cast<int>(dim));
            n *= dim;
        }
        std::vector<double> data(n);
        for (std::size_t j = 0; j < n; ++j) {
            if (dtype == 0) {
                std::uint32_t bits = r.u32("payload");
                float fv;
                std::memcpy(&fv, &bits, 4);
                data[j] = fv;
            } else {
                std::uint64_t bits = r.u64("payload");
                double dv;
                std::memcpy(&dv, &bits, 8);
                data[j] = dv;
            }
        }
        out.emplace(key, Tensor::from_data(shape, std::move(data)));
    }
    return out;
}

void save_optim_state(const OptimState& opt, const std::string& path) {
    std::map<std::string, Tensor> tensors;
    tensors.emplace("step", Tensor::scalar(static_cast<double>(opt.step)));
    for (const auto& [k, m] : opt.m)
        tensors.emplace("m." + k, Tensor::from_data({static_cast<int>(m.size())}, m));
    for (const auto& [k, v] : opt.v)
        tensors.emplace("v." + k, Tensor::from_data({static_cast<int>(v.size())}, v));
    save_checkpoint(tensors, path);
}

void load_optim_state(OptimState& opt, const std::string& path) {
    auto tensors = load_checkpoint(path);
    opt.m.clear();
    opt.v.clear();
    for (const auto& [k, t] : tensors) {
        if (k == "step")
            opt.step = static_cast<std::int64_t>(t.item());
        else if (k.rfind("m.", 0) == 0)
            opt.m[k.substr(2)] = t.vec();
        else if (k.rfind("v.", 0) == 0)
            opt.v[k.substr(2)] = t.vec();
    }
}

} // namespace rwf
