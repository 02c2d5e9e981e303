#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rwf/network.hpp"
#include "rwf/objective.hpp"
#include "rwf/tensor.hpp"

namespace rwf {

struct OptimState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    std::int64_t step = 0;
    std::map<std::string, std::vector<double>> m;  // first moments
    std::map<std::string, std::vector<double>> v;  // second moments
};

// Decoupled-weight-decay update with bias correction, reading each
// parameter's accumulated .grad.
void adamw_step(std::map<std::string, Tensor>& params, OptimState& opt, double lr);

struct Schedule {
    double lr_start = 1e-3;
    double lr_end = 1e-7;
    std::int64_t total_steps = 0;
};

// lr_end + 0.5*(lr_start - lr_end)*(1 + cos(pi*t/total)); t clamped to [0,total].
double cosine_lr(std::int64_t t, const Schedule& sched);

struct TrainSample {
    Tensor input, target;
    bool hflip = false, vflip = false;
};

// Identical crop offsets and flip flags applied to input and target.
TrainSample sample_patch(const Tensor& input, const Tensor& target, int p, Rng& rng,
                         bool augment = true);

struct TrainConfig {
    int steps = 500;
    int batch = 4;
    int patch = 64;
    Schedule sched;
    LossWeights weights;
    bool msr_enabled = true;
    bool augment = true;
    double clip_norm = 1.0;
    int ckpt_every = 100;
    std::uint64_t seed = 1;
    std::string out_dir;  // empty: no checkpoints written
};

struct StepLog {
    LossReport report;
    double lr = 0.0;
};

std::vector<StepLog> train_loop(Model& model,
                                const std::vector<std::pair<Tensor, Tensor>>& dataset,
                                const TrainConfig& cfg, OptimState* opt_io = nullptr);

// Container: "RWFC", u32 version=1, u32 count; per tensor: u32 key length,
// UTF-8 key, u8 dtype (0=f32, 1=f64), u32 rank, u64 dims, little-endian
// payload; trailing CRC32 of everything after the magic.
void save_checkpoint(const std::map<std::string, Tensor>& tensors, const std::string& path,
                     bool as_f32 = false);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

void save_optim_state(const OptimState& opt, const std::string& path);
void load_optim_state(OptimState& opt, const std::string& path);

} // namespace rwf
