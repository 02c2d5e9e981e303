#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rwf/attention.hpp"
#include "rwf/tensor.hpp"

namespace rwf {

// One named invariant; fn throws (any rwf::Error or std::exception) on failure.
struct VerifyCheck {
    std::string name;
    std::function<void()> fn;
};

const std::vector<VerifyCheck>& verify_checks();

// Runs every check whose name contains `filter` (all when empty); prints one
// PASS/FAIL line per check and returns the number of failures.
int run_verify(const std::string& filter = "");

// ---- independent plain-loop oracles (also used by the test suites) ----

// Brute-force routed-window attention: flat loops, no tensor ops.
Tensor rwam_reference(const Tensor& x, const AttnParams& p, const AttentionConfig& cfg);

// Brute-force shifted-window attention.
Tensor swam_reference(const Tensor& x, const AttnParams& p, const AttentionConfig& cfg);

// Per-window attention over every window of the image exactly once (center
// bias on the center window, zero bias elsewhere). Counts its own MACs; used
// as the quadratic-cost baseline.
Tensor dense_whole_image_reference(const Tensor& x, const AttnParams& p, int k, int m,
                                   std::uint64_t* macs = nullptr);

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0);
AttnParams random_attn_params(int cb, const AttentionConfig& cfg, Rng& rng);

double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace rwf
