#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "rwf/common.hpp"

namespace rwf {

class Tensor;

namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

bool grad_enabled();

} // namespace detail

// Scoped switch that disables tape recording (oracle / finite-difference paths).
class NoGrad {
public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    bool prev_;
};

// Dense row-major n-d array of doubles with optional participation in the
// reverse-mode tape. Copying a Tensor copies the handle, not the storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::size_t size() const { return node_->data.size(); }

    double* data() { return node_->data.data(); }
    const double* data() const { return node_->data.data(); }
    std::vector<double>& vec() { return node_->data; }
    const std::vector<double>& vec() const { return node_->data; }

    double item() const;
    double at(std::vector<int> idx) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& grad_vec() { node_->ensure_grad(); return node_->grad; }
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    // Reverse pass from a scalar output; accumulates into .grad of every
    // reachable requires_grad node.
    void backward() const;

    std::shared_ptr<detail::Node> node() const { return node_; }

    bool all_finite() const;

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(std::vector<int> shape, std::vector<double> data,
                          std::vector<Tensor> inputs,
                          std::function<void(detail::Node&)> backward_fn);
};

// Topologically ordered view of the subgraph below a root; one backward
// traversal visits every node exactly once.
class Tape {
public:
    explicit Tape(const Tensor& root);
    void backward();

private:
    std::vector<detail::Node*> order_;
    detail::Node* root_;
};

std::string shape_str(const std::vector<int>& s);
std::size_t numel(const std::vector<int>& shape);

// Builds an op node: output value plus the backward rule recorded on the tape
// when grad mode is on and any input requires grad.
Tensor make_op(std::vector<int> shape, std::vector<double> data,
               std::vector<Tensor> inputs,
               std::function<void(detail::Node&)> backward_fn);

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor abs_val(const Tensor& a);      // subgradient at 0 is 0
Tensor gelu(const Tensor& a);         // exact erf form

// ---- structure ----
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor permute(const Tensor& a, std::vector<int> axes);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor index_select(const Tensor& a, const std::vector<int>& rows);  // gathers axis-0 rows
Tensor index_last(const Tensor& a, const std::vector<int>& idx,
                  std::vector<int> out_last_dims);                   // gathers along last axis
Tensor expand0(const Tensor& a, int n);                              // tile along new leading axis
Tensor detach(const Tensor& a);

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_axis(const Tensor& a, int axis);

// ---- linear algebra / nn primitives ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, int axis);
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding);
Tensor dwconv(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int padding = 1);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);
Tensor pixel_shuffle(const Tensor& x, int s);
Tensor mul_channel(const Tensor& x, const Tensor& s);  // x[c,h,w] * s[c] broadcast

// ---- spatial ----
Tensor pad_edge(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop_spatial(const Tensor& x, int top, int left, int h, int w);
Tensor roll2d(const Tensor& x, int dy, int dx);  // cyclic shift of [c,h,w]

// ---- spectral ----
// Unnormalized forward 2-D DFT per channel of a [c,h,w] tensor.
std::pair<Tensor, Tensor> dft2(const Tensor& x);

// Resampling used only on ground-truth images; does not join the tape.
Tensor bilinear_resize(const Tensor& x, int oh, int ow);

// Central-difference check of the tape gradient of f at x. Returns the max
// relative error with denominator max(|a|,|b|,1e-8). When max_checks > 0 only
// that many coordinates (seeded sample) are compared.
double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor& x,
                  double h = 1e-6, int max_checks = 0, std::uint64_t seed = 7);

} // namespace rwf
