#pragma once

#include <vector>

#include "rwf/tensor.hpp"

namespace rwf {

struct LossWeights {
    double alpha = 0.1;   // frequency-loss weight
    double lambda = 0.1;  // multi-scale regularization weight
    bool complex_modulus = false;  // |dF| as complex magnitude instead of |dRe|+|dIm|
};

struct LossReport {
    double l1 = 0.0;
    double fft = 0.0;
    std::vector<double> msr_terms;  // scales i = 2, 3, 4
    double total = 0.0;
    Tensor total_tensor;            // scalar on the tape
};

// Mean absolute difference.
Tensor l1_loss(const Tensor& x, const Tensor& y);

// Mean L1 distance between the 2-D spectra of x and y, taken over the real and
// imaginary components (2*c*h*w values).
Tensor fft_loss(const Tensor& x, const Tensor& y, bool complex_modulus = false);

Tensor composite_loss(const Tensor& x, const Tensor& y, double alpha,
                      bool complex_modulus = false);

// Bilinear downsample by 2 then upsample back: the texture-damaged G^(down-up).
Tensor degrade_gt(const Tensor& g);

// Sum over scales of composite_loss(R_i + degrade_gt(G_i), G_i) where G_i is
// the clean image bilinearly downsampled by 2^(i-1), i = 2..4.
std::pair<Tensor, std::vector<double>> msr_loss(const std::vector<Tensor>& residuals,
                                                const Tensor& clean, double alpha,
                                                bool complex_modulus = false);

LossReport total_loss(const Tensor& restored, const Tensor& clean,
                      const std::vector<Tensor>& residuals, const LossWeights& weights);

} // namespace rwf
