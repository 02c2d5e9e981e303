#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rwf/attention.hpp"
#include "rwf/tensor.hpp"

namespace rwf {

// 8-bit RGB PNG only; values scaled to [0,1], channel-major [3,h,w].
Tensor load_image(const std::string& path);

// Clamp to [0,1], quantize round(v*255), write an 8-bit RGB PNG.
void save_image(const Tensor& t, const std::string& path);

// 10*log10(1/MSE) for unit-range images; identical inputs capped at 100 dB.
double psnr(const Tensor& x, const Tensor& y);

// Attention-weighted mean query-key pixel distance over every entry, divided
// by the image diagonal sqrt(h^2 + w^2).
double attn_distance(const AttnRecord& rec, int h, int w);
double attn_distance_entry(const AttnEntry& e, int h, int w);

// CSV rows `scale,block,branch,head,distance` (mean over that component's
// windows) plus one aggregate row `ALL,ALL,ALL,ALL,<unweighted component mean>`,
// printed with full decimal precision.
void write_attn_csv(const AttnRecord& rec, int h, int w, const std::string& path);

struct DatasetIndex {
    std::string root;
    std::vector<std::pair<std::string, std::string>> pairs;  // (input, target), sorted
};

// Matches files by name across root/input and root/target; orphans or
// dimension mismatches are data errors listing the offenders.
DatasetIndex index_dataset(const std::string& root);

// Flat key=value run configuration; '#' starts a comment, unknown keys throw.
struct RunConfig {
    int steps = 500;
    int batch = 4;
    int patch = 64;
    double lr_start = 1e-3;
    double lr_end = 1e-7;
    double alpha = 0.1;
    double lambda = 0.1;
    bool msr_enabled = true;
    bool augment = true;
    double clip_norm = 1.0;
    int ckpt_every = 100;
    std::uint64_t seed = 1;
    std::string preset = "desk";  // desk | rwf_t | rwf_s | rwf_b
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);

int run_cli(int argc, const char* const* argv);

} // namespace rwf
