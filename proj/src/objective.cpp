#include "rwf/objective.hpp"

#include <cmath>

namespace rwf {

Tensor l1_loss(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape())
        throw ShapeError("l1_loss: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    return mean_all(abs_val(sub(x, y)));
}

Tensor fft_loss(const Tensor& x, const Tensor& y, bool complex_modulus) {
    if (x.shape() != y.shape())
        throw ShapeError("fft_loss: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    auto [xr, xi] = dft2(x);
    auto [yr, yi] = dft2(y);
    Tensor dr = sub(xr, yr);
    Tensor di = sub(xi, yi);
    if (!complex_modulus)
        return mean_all(concat({abs_val(dr), abs_val(di)}, 0));
    // |dF| = sqrt(dr^2 + di^2 + eps), eps keeps the kink at 0 differentiable
    Tensor sq = add_scalar(add(mul(dr, dr), mul(di, di)), 1e-24);
    std::vector<double> out(sq.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(sq.data()[i]);
    Tensor root = make_op(sq.shape(), std::move(out), {sq}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i)
            n.inputs[0]->grad[i] += n.grad[i] * 0.5 / std::sqrt(n.inputs[0]->data[i]);
    });
    return mean_all(root);
}

Tensor composite_loss(const Tensor& x, const Tensor& y, double alpha, bool complex_modulus) {
    return add(l1_loss(x, y), scale(fft_loss(x, y, complex_modulus), alpha));
}

Tensor degrade_gt(const Tensor& g) {
    if (g.rank() != 3) throw ShapeError("degrade_gt: expected [c,h,w]");
    int h = g.dim(1), w = g.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("degrade_gt: spatial dims must be even, got " + shape_str(g.shape()));
    Tensor down = bilinear_resize(g, h / 2, w / 2);
    return bilinear_resize(down, h, w);
}

std::pair<Tensor, std::vector<double>> msr_loss(const std::vector<Tensor>& residuals,
                                                const Tensor& clean, double alpha,
                                                bool complex_modulus) {
    int h = clean.dim(1), w = clean.dim(2);
    Tensor total;
    std::vector<double> terms;
    for (std::size_t t = 0; t < residuals.size(); ++t) {
        int div = 1 << (t + 1);  // scale i = t+2 sits at 1/2^(i-1)
        Tensor gi = bilinear_resize(clean, h / div, w / div);
        if (residuals[t].shape() != gi.shape())
            throw ShapeError("msr_loss: residual " + shape_str(residuals[t].shape()) +
                             " does not match scale target " + shape_str(gi.shape()));
        Tensor term = composite_loss(add(residuals[t], degrade_gt(gi)), gi, alpha, complex_modulus);
        terms.push_back(term.item());
        total = total.defined() ? add(total, term) : term;
    }
    if (!total.defined()) total = Tensor::scalar(0.0);
    return {total, terms};
}

LossReport total_loss(const Tensor& restored, const Tensor& clean,
                      const std::vector<Tensor>& residuals, const LossWeights& weights) {
    LossReport rep;
    Tensor l1 = l1_loss(restored, clean);
    Tensor fft = fft_loss(restored, clean, weights.complex_modulus);
    rep.l1 = l1.item();
    rep.fft = fft.item();
    Tensor base = add(l1, scale(fft, weights.alpha));
    auto [msr, terms] = msr_loss(residuals, clean, weights.alpha, weights.complex_modulus);
    rep.msr_terms = terms;
    rep.total_tensor = add(base, scale(msr, weights.lambda));
    rep.total = rep.total_tensor.item();
    return rep;
}

} // namespace rwf
