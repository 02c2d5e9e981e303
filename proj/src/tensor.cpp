#include "rwf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace rwf {

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

} // namespace detail

NoGrad::NoGrad() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
NoGrad::~NoGrad() { detail::g_grad_enabled = prev_; }

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

// ---- Tensor basics ----

Tensor make_op(std::vector<int> shape, std::vector<double> data,
               std::vector<Tensor> inputs,
               std::function<void(detail::Node&)> backward_fn) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    if (detail::grad_enabled()) {
        bool rg = false;
        for (const auto& t : inputs)
            if (t.defined() && t.requires_grad()) rg = true;
        if (rg) {
            n->requires_grad = true;
            for (const auto& t : inputs)
                if (t.defined()) n->inputs.push_back(t.node());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->data.assign(numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.vec().begin(), t.vec().end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
    if (numel(shape) != data.size())
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
    return node_->data[0];
}

double Tensor::at(std::vector<int> idx) const {
    const auto& s = node_->shape;
    if (idx.size() != s.size()) throw ShapeError("at(): rank mismatch");
    std::size_t off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) off = off * static_cast<std::size_t>(s[i]) + static_cast<std::size_t>(idx[i]);
    return node_->data[off];
}

bool Tensor::all_finite() const {
    for (double v : node_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

// ---- tape ----

Tape::Tape(const Tensor& root) : root_(root.node().get()) {
    // iterative post-order DFS
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root_, 0);
    visited.insert(root_);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if ((child->requires_grad || child->backward_fn) && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

void Tape::backward() {
    root_->ensure_grad();
    if (root_->size() != 1) throw ShapeError("backward(): root must be a scalar");
    root_->grad[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn) {
            for (auto& in : n->inputs) in->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

void Tensor::backward() const {
    Tape tape(*this);
    tape.backward();
}

// ---- elementwise ----

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i];
            n.inputs[1]->grad[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i];
            n.inputs[1]->grad[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            n.inputs[0]->grad[i] += n.grad[i] * n.inputs[1]->data[i];
            n.inputs[1]->grad[i] += n.grad[i] * n.inputs[0]->data[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    const double* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * s;
    return make_op(a.shape(), std::move(out), {a}, [s](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) n.inputs[0]->grad[i] += n.grad[i] * s;
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    const double* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + s;
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) n.inputs[0]->grad[i] += n.grad[i];
    });
}

Tensor abs_val(const Tensor& a) {
    std::vector<double> out(a.size());
    const double* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(pa[i]);
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            double x = n.inputs[0]->data[i];
            double s = (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
            n.inputs[0]->grad[i] += n.grad[i] * s;
        }
    });
}

static const double kInvSqrt2 = 0.7071067811865475244;
static const double kInvSqrt2Pi = 0.3989422804014326779;

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.size());
    const double* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = pa[i];
        out[i] = x * 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    }
    return make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            double x = n.inputs[0]->data[i];
            double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            n.inputs[0]->grad[i] += n.grad[i] * (phi + x * pdf);
        }
    });
}

// ---- structure ----

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (numel(shape) != a.size())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    std::vector<double> out = a.vec();
    return make_op(std::move(shape), std::move(out), {a}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.size(); ++i) n.inputs[0]->grad[i] += n.grad[i];
    });
}

static std::vector<std::size_t> strides_of(const std::vector<int>& shape) {
    std::vector<std::size_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[static_cast<std::size_t>(i)] =
            st[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(shape[static_cast<std::size_t>(i) + 1]);
    return st;
}

// permutation map: out flat index -> in flat index
static std::vector<std::size_t> permute_map(const std::vector<int>& in_shape,
                                            const std::vector<int>& axes) {
    const std::size_t r = in_shape.size();
    std::vector<int> out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[static_cast<std::size_t>(axes[i])];
    auto in_st = strides_of(in_shape);
    auto out_st = strides_of(out_shape);
    std::vector<std::size_t> map(numel(in_shape));
    std::vector<int> idx(r, 0);
    for (std::size_t o = 0; o < map.size(); ++o) {
        // decode o into out coords, map to in offset
        std::size_t rem = o, in_off = 0;
        for (std::size_t i = 0; i < r; ++i) {
            std::size_t c = rem / out_st[i];
            rem %= out_st[i];
            in_off += c * in_st[static_cast<std::size_t>(axes[i])];
        }
        map[o] = in_off;
    }
    return map;
}

Tensor permute(const Tensor& a, std::vector<int> axes) {
    if (static_cast<int>(axes.size()) != a.rank()) throw ShapeError("permute: axes rank mismatch");
    std::vector<int> out_shape(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = a.shape()[static_cast<std::size_t>(axes[i])];
    auto map = permute_map(a.shape(), axes);
    std::vector<double> out(a.size());
    const double* pa = a.data();
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = pa[map[o]];
    return make_op(std::move(out_shape), std::move(out), {a}, [map](detail::Node& n) {
        for (std::size_t o = 0; o < n.size(); ++o) n.inputs[0]->grad[map[o]] += n.grad[o];
    });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    const auto& s = a.shape();
    if (axis < 0 || axis >= a.rank()) throw ShapeError("slice: bad axis");
    if (start < 0 || len < 0 || start + len > s[static_cast<std::size_t>(axis)])
        throw ShapeError("slice: range out of bounds for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    std::size_t n_axis = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
    std::vector<int> out_shape = s;
    out_shape[static_cast<std::size_t>(axis)] = len;
    std::vector<double> out(outer * static_cast<std::size_t>(len) * inner);
    const double* pa = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        std::memcpy(&out[o * len * inner],
                    &pa[(o * n_axis + static_cast<std::size_t>(start)) * inner],
                    static_cast<std::size_t>(len) * inner * sizeof(double));
    std::size_t ln = static_cast<std::size_t>(len), st = static_cast<std::size_t>(start);
    return make_op(std::move(out_shape), std::move(out), {a},
                   [outer, inner, n_axis, ln, st](detail::Node& n) {
                       for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t j = 0; j < ln * inner; ++j)
                               n.inputs[0]->grad[(o * n_axis + st) * inner + j] += n.grad[o * ln * inner + j];
                   });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const auto& s0 = parts[0].shape();
    int rank = parts[0].rank();
    if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && p.shape()[static_cast<std::size_t>(i)] != s0[static_cast<std::size_t>(i)])
                throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(s0));
        total += p.shape()[static_cast<std::size_t>(axis)];
    }
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s0[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < rank; ++i) inner *= static_cast<std::size_t>(s0[static_cast<std::size_t>(i)]);
    std::vector<int> out_shape = s0;
    out_shape[static_cast<std::size_t>(axis)] = total;
    std::vector<double> out(outer * static_cast<std::size_t>(total) * inner);
    std::vector<std::size_t> lens;
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t ln = static_cast<std::size_t>(p.shape()[static_cast<std::size_t>(axis)]);
        lens.push_back(ln);
        const double* pp = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(&out[(o * static_cast<std::size_t>(total) + off) * inner],
                        &pp[o * ln * inner], ln * inner * sizeof(double));
        off += ln;
    }
    std::vector<Tensor> ins = parts;
    std::size_t tot = static_cast<std::size_t>(total);
    return make_op(std::move(out_shape), std::move(out), std::move(ins),
                   [outer, inner, lens, tot](detail::Node& n) {
                       std::size_t off2 = 0;
                       for (std::size_t pi = 0; pi < lens.size(); ++pi) {
                           std::size_t ln = lens[pi];
                           for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t j = 0; j < ln * inner; ++j)
                                   n.inputs[pi]->grad[o * ln * inner + j] +=
                                       n.grad[(o * tot + off2) * inner + j];
                           off2 += ln;
                       }
                   });
}

Tensor index_select(const Tensor& a, const std::vector<int>& rows) {
    if (a.rank() < 1) throw ShapeError("index_select: rank 0");
    const auto& s = a.shape();
    std::size_t row_sz = a.size() / static_cast<std::size_t>(s[0]);
    for (int r : rows)
        if (r < 0 || r >= s[0])
            throw ShapeError("index_select: row " + std::to_string(r) + " out of range of " + shape_str(s));
    std::vector<int> out_shape = s;
    out_shape[0] = static_cast<int>(rows.size());
    std::vector<double> out(rows.size() * row_sz);
    const double* pa = a.data();
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::memcpy(&out[i * row_sz], &pa[static_cast<std::size_t>(rows[i]) * row_sz],
                    row_sz * sizeof(double));
    return make_op(std::move(out_shape), std::move(out), {a}, [rows, row_sz](detail::Node& n) {
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < row_sz; ++j)
                n.inputs[0]->grad[static_cast<std::size_t>(rows[i]) * row_sz + j] += n.grad[i * row_sz + j];
    });
}

Tensor index_last(const Tensor& a, const std::vector<int>& idx,
                  std::vector<int> out_last_dims) {
    const auto& s = a.shape();
    std::size_t last = static_cast<std::size_t>(s.back());
    std::size_t outer = a.size() / last;
    if (numel(out_last_dims) != idx.size())
        throw ShapeError("index_last: out dims do not match index count");
    for (int i : idx)
        if (i < 0 || static_cast<std::size_t>(i) >= last) throw ShapeError("index_last: index out of range");
    std::vector<int> out_shape(s.begin(), s.end() - 1);
    out_shape.insert(out_shape.end(), out_last_dims.begin(), out_last_dims.end());
    std::vector<double> out(outer * idx.size());
    const double* pa = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < idx.size(); ++j)
            out[o * idx.size() + j] = pa[o * last + static_cast<std::size_t>(idx[j])];
    return make_op(std::move(out_shape), std::move(out), {a}, [idx, outer, last](detail::Node& n) {
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < idx.size(); ++j)
                n.inputs[0]->grad[o * last + static_cast<std::size_t>(idx[j])] += n.grad[o * idx.size() + j];
    });
}

Tensor expand0(const Tensor& a, int n) {
    std::vector<int> out_shape = a.shape();
    out_shape.insert(out_shape.begin(), n);
    std::vector<double> out(static_cast<std::size_t>(n) * a.size());
    for (int i = 0; i < n; ++i)
        std::memcpy(&out[static_cast<std::size_t>(i) * a.size()], a.data(), a.size() * sizeof(double));
    std::size_t sz = a.size();
    return make_op(std::move(out_shape), std::move(out), {a}, [n, sz](detail::Node& nd) {
        for (int i = 0; i < n; ++i)
            for (std::size_t j = 0; j < sz; ++j)
                nd.inputs[0]->grad[j] += nd.grad[static_cast<std::size_t>(i) * sz + j];
    });
}

Tensor detach(const Tensor& a) {
    return Tensor::from_data(a.shape(), a.vec(), false);
}

// ---- reductions ----

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.vec()) s += v;
    return make_op({1}, {s}, {a}, [](detail::Node& n) {
        for (std::size_t i = 0; i < n.inputs[0]->size(); ++i) n.inputs[0]->grad[i] += n.grad[0];
    });
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.vec()) s += v;
    double inv = 1.0 / static_cast<double>(a.size());
    return make_op({1}, {s * inv}, {a}, [inv](detail::Node& n) {
        for (std::size_t i = 0; i < n.inputs[0]->size(); ++i) n.inputs[0]->grad[i] += n.grad[0] * inv;
    });
}

Tensor mean_axis(const Tensor& a, int axis) {
    const auto& s = a.shape();
    if (axis < 0 || axis >= a.rank()) throw ShapeError("mean_axis: bad axis");
    std::size_t outer = 1, inner = 1;
    std::size_t n_axis = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    std::vector<int> out_shape;
    for (int i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(s[static_cast<std::size_t>(i)]);
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> out(outer * inner, 0.0);
    const double* pa = a.data();
    double inv = 1.0 / static_cast<double>(n_axis);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n_axis; ++k)
            for (std::size_t j = 0; j < inner; ++j)
                out[o * inner + j] += pa[(o * n_axis + k) * inner + j];
    for (double& v : out) v *= inv;
    return make_op(std::move(out_shape), std::move(out), {a},
                   [outer, inner, n_axis, inv](detail::Node& n) {
                       for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t k = 0; k < n_axis; ++k)
                               for (std::size_t j = 0; j < inner; ++j)
                                   n.inputs[0]->grad[(o * n_axis + k) * inner + j] +=
                                       n.grad[o * inner + j] * inv;
                   });
}

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: inputs must have rank >= 2");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    int p = sa[sa.size() - 2], q = sa[sa.size() - 1];
    int q2 = sb[sb.size() - 2], r = sb[sb.size() - 1];
    if (q != q2)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(sa) + " vs " + shape_str(sb));
    bool b_shared = (b.rank() == 2 && a.rank() > 2);
    std::vector<int> batch_dims(sa.begin(), sa.end() - 2);
    if (!b_shared) {
        std::vector<int> bb(sb.begin(), sb.end() - 2);
        if (bb != batch_dims)
            throw ShapeError("matmul: batch dims differ, " + shape_str(sa) + " vs " + shape_str(sb));
    }
    std::size_t batch = numel(batch_dims);
    std::vector<int> out_shape = batch_dims;
    out_shape.push_back(p);
    out_shape.push_back(r);
    std::vector<double> out(batch * static_cast<std::size_t>(p) * static_cast<std::size_t>(r), 0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    std::size_t as = static_cast<std::size_t>(p) * static_cast<std::size_t>(q);
    std::size_t bs = static_cast<std::size_t>(q) * static_cast<std::size_t>(r);
    std::size_t os = static_cast<std::size_t>(p) * static_cast<std::size_t>(r);
    for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* A = pa + bi * as;
        const double* B = pb + (b_shared ? 0 : bi * bs);
        double* O = &out[bi * os];
        for (int i = 0; i < p; ++i)
            for (int k = 0; k < q; ++k) {
                double av = A[i * q + k];
                if (av == 0.0) continue;
                const double* Bk = B + static_cast<std::size_t>(k) * r;
                double* Oi = O + static_cast<std::size_t>(i) * r;
                for (int j = 0; j < r; ++j) Oi[j] += av * Bk[j];
            }
    }
    return make_op(std::move(out_shape), std::move(out), {a, b},
                   [p, q, r, batch, b_shared, as, bs, os](detail::Node& n) {
                       const double* pa2 = n.inputs[0]->data.data();
                       const double* pb2 = n.inputs[1]->data.data();
                       for (std::size_t bi = 0; bi < batch; ++bi) {
                           const double* A = pa2 + bi * as;
                           const double* B = pb2 + (b_shared ? 0 : bi * bs);
                           const double* G = n.grad.data() + bi * os;
                           double* dA = n.inputs[0]->grad.data() + bi * as;
                           double* dB = n.inputs[1]->grad.data() + (b_shared ? 0 : bi * bs);
                           // dA = G * B^T ; dB += A^T * G
                           for (int i = 0; i < p; ++i)
                               for (int j = 0; j < r; ++j) {
                                   double g = G[i * r + j];
                                   if (g == 0.0) continue;
                                   const double* Bj = B;
                                   for (int k = 0; k < q; ++k)
                                       dA[i * q + k] += g * Bj[static_cast<std::size_t>(k) * r + j];
                               }
                           for (int k = 0; k < q; ++k)
                               for (int i = 0; i < p; ++i) {
                                   double av = A[i * q + k];
                                   if (av == 0.0) continue;
                                   const double* Gi = G + static_cast<std::size_t>(i) * r;
                                   double* dBk = dB + static_cast<std::size_t>(k) * r;
                                   for (int j = 0; j < r; ++j) dBk[j] += av * Gi[j];
                               }
                       }
                   });
}

// ---- softmax ----

Tensor softmax(const Tensor& x, int axis) {
    const auto& s = x.shape();
    if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: bad axis");
    if (!x.all_finite()) throw NumericError("softmax: non-finite input");
    std::size_t outer = 1, inner = 1;
    std::size_t n_axis = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < inner; ++j) {
            double mx = -1e300;
            for (std::size_t k = 0; k < n_axis; ++k)
                mx = std::max(mx, px[(o * n_axis + k) * inner + j]);
            double sum = 0.0;
            for (std::size_t k = 0; k < n_axis; ++k) {
                double e = std::exp(px[(o * n_axis + k) * inner + j] - mx);
                out[(o * n_axis + k) * inner + j] = e;
                sum += e;
            }
            double inv = 1.0 / sum;
            for (std::size_t k = 0; k < n_axis; ++k) out[(o * n_axis + k) * inner + j] *= inv;
        }
    std::vector<double> saved = out;
    return make_op(x.shape(), std::move(out), {x},
                   [outer, inner, n_axis, saved](detail::Node& n) {
                       for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t j = 0; j < inner; ++j) {
                               double dot = 0.0;
                               for (std::size_t k = 0; k < n_axis; ++k) {
                                   std::size_t off = (o * n_axis + k) * inner + j;
                                   dot += saved[off] * n.grad[off];
                               }
                               for (std::size_t k = 0; k < n_axis; ++k) {
                                   std::size_t off = (o * n_axis + k) * inner + j;
                                   n.inputs[0]->grad[off] += saved[off] * (n.grad[off] - dot);
                               }
                           }
                   });
}

// ---- convolution ----

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
    if (x.rank() != 3 || weight.rank() != 4)
        throw ShapeError("conv2d: expected x[c,h,w], weight[co,ci,kh,kw], got " +
                         shape_str(x.shape()) + " and " + shape_str(weight.shape()));
    int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    int co = weight.dim(0), ci2 = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    if (ci != ci2)
        throw ShapeError("conv2d: channel mismatch, x " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
    if (kh > h + 2 * padding || kw > w + 2 * padding)
        throw ShapeError("conv2d: kernel larger than padded input");
    int oh = (h + 2 * padding - kh) / stride + 1;
    int ow = (w + 2 * padding - kw) / stride + 1;
    bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != co))
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));
    std::vector<double> out(static_cast<std::size_t>(co) * oh * ow, 0.0);
    const double* px = x.data();
    const double* pw = weight.data();
    bool pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;
    if (pointwise) {
        std::size_t hw = static_cast<std::size_t>(h) * w;
        for (int oc = 0; oc < co; ++oc) {
            double* orow = out.data() + oc * hw;
            if (has_bias) {
                double b = bias.data()[oc];
                for (std::size_t p = 0; p < hw; ++p) orow[p] = b;
            }
            for (int ic = 0; ic < ci; ++ic) {
                double wv = pw[static_cast<std::size_t>(oc) * ci + ic];
                const double* xrow = px + ic * hw;
                for (std::size_t p = 0; p < hw; ++p) orow[p] += wv * xrow[p];
            }
        }
        std::vector<Tensor> ins1 = {x, weight};
        if (has_bias) ins1.push_back(bias);
        return make_op({co, h, w}, std::move(out), std::move(ins1),
                       [ci, co, hw, has_bias](detail::Node& n) {
                           const double* px2 = n.inputs[0]->data.data();
                           const double* pw2 = n.inputs[1]->data.data();
                           double* dx = n.inputs[0]->grad.data();
                           double* dw = n.inputs[1]->grad.data();
                           for (int oc = 0; oc < co; ++oc) {
                               const double* grow = n.grad.data() + oc * hw;
                               if (has_bias) {
                                   double acc = 0.0;
                                   for (std::size_t p = 0; p < hw; ++p) acc += grow[p];
                                   n.inputs[2]->grad[oc] += acc;
                               }
                               for (int ic = 0; ic < ci; ++ic) {
                                   double wv = pw2[static_cast<std::size_t>(oc) * ci + ic];
                                   const double* xrow = px2 + ic * hw;
                                   double* dxrow = dx + ic * hw;
                                   double wacc = 0.0;
                                   for (std::size_t p = 0; p < hw; ++p) {
                                       dxrow[p] += wv * grow[p];
                                       wacc += grow[p] * xrow[p];
                                   }
                                   dw[static_cast<std::size_t>(oc) * ci + ic] += wacc;
                               }
                           }
                       });
    }
    // valid output range per kernel tap, so the inner loops stay branch-free
    auto tap_range = [&](int k, int extent, int count, int& lo, int& hi) {
        lo = 0;
        while (lo < count && lo * stride - padding + k < 0) ++lo;
        hi = count - 1;
        while (hi >= 0 && hi * stride - padding + k >= extent) --hi;
    };
    if (has_bias)
        for (int oc = 0; oc < co; ++oc) {
            double b = bias.data()[oc];
            double* orow = out.data() + static_cast<std::size_t>(oc) * oh * ow;
            for (std::size_t p = 0; p < static_cast<std::size_t>(oh) * ow; ++p) orow[p] = b;
        }
    for (int oc = 0; oc < co; ++oc)
        for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    double wv = pw[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx];
                    int ylo, yhi, xlo, xhi;
                    tap_range(ky, h, oh, ylo, yhi);
                    tap_range(kx, w, ow, xlo, xhi);
                    for (int oy = ylo; oy <= yhi; ++oy) {
                        const double* xr =
                            px + (static_cast<std::size_t>(ic) * h + oy * stride - padding + ky) * w -
                            padding + kx;
                        double* orow = out.data() + (static_cast<std::size_t>(oc) * oh + oy) * ow;
                        for (int ox = xlo; ox <= xhi; ++ox)
                            orow[ox] += wv * xr[static_cast<std::size_t>(ox) * stride];
                    }
                }
    std::vector<Tensor> ins = {x, weight};
    if (has_bias) ins.push_back(bias);
    return make_op({co, oh, ow}, std::move(out), std::move(ins),
                   [ci, h, w, co, kh, kw, oh, ow, stride, padding, has_bias](detail::Node& n) {
                       const double* px2 = n.inputs[0]->data.data();
                       const double* pw2 = n.inputs[1]->data.data();
                       double* dx = n.inputs[0]->grad.data();
                       double* dw = n.inputs[1]->grad.data();
                       double* db = has_bias ? n.inputs[2]->grad.data() : nullptr;
                       auto tap_range = [&](int k, int extent, int count, int& lo, int& hi) {
                           lo = 0;
                           while (lo < count && lo * stride - padding + k < 0) ++lo;
                           hi = count - 1;
                           while (hi >= 0 && hi * stride - padding + k >= extent) --hi;
                       };
                       if (db)
                           for (int oc = 0; oc < co; ++oc) {
                               const double* grow =
                                   n.grad.data() + static_cast<std::size_t>(oc) * oh * ow;
                               double acc = 0.0;
                               for (std::size_t p = 0; p < static_cast<std::size_t>(oh) * ow; ++p)
                                   acc += grow[p];
                               db[oc] += acc;
                           }
                       for (int oc = 0; oc < co; ++oc)
                           for (int ic = 0; ic < ci; ++ic)
                               for (int ky = 0; ky < kh; ++ky)
                                   for (int kx = 0; kx < kw; ++kx) {
                                       std::size_t wo =
                                           ((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx;
                                       double wv = pw2[wo];
                                       double wacc = 0.0;
                                       int ylo, yhi, xlo, xhi;
                                       tap_range(ky, h, oh, ylo, yhi);
                                       tap_range(kx, w, ow, xlo, xhi);
                                       for (int oy = ylo; oy <= yhi; ++oy) {
                                           const double* grow =
                                               n.grad.data() +
                                               (static_cast<std::size_t>(oc) * oh + oy) * ow;
                                           std::size_t base =
                                               (static_cast<std::size_t>(ic) * h + oy * stride -
                                                padding + ky) * w - padding + kx;
                                           for (int ox = xlo; ox <= xhi; ++ox) {
                                               std::size_t xo = base + static_cast<std::size_t>(ox) * stride;
                                               dx[xo] += grow[ox] * wv;
                                               wacc += grow[ox] * px2[xo];
                                           }
                                       }
                                       dw[wo] += wacc;
                                   }
                   });
}

Tensor dwconv(const Tensor& x, const Tensor& weight, const Tensor& bias, int padding) {
    if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != 1)
        throw ShapeError("dwconv: expected x[c,h,w], weight[c,1,kh,kw]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (weight.dim(0) != c) throw ShapeError("dwconv: channel count mismatch");
    int kh = weight.dim(2), kw = weight.dim(3);
    int oh = h + 2 * padding - kh + 1;
    int ow = w + 2 * padding - kw + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("dwconv: kernel larger than padded input");
    bool has_bias = bias.defined();
    std::vector<double> out(static_cast<std::size_t>(c) * oh * ow, 0.0);
    const double* px = x.data();
    const double* pw = weight.data();
    for (int ic = 0; ic < c; ++ic) {
        double b = has_bias ? bias.data()[ic] : 0.0;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = b;
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = oy - padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        int ix = ox - padding + kx;
                        if (ix < 0 || ix >= w) continue;
                        acc += px[(static_cast<std::size_t>(ic) * h + iy) * w + ix] *
                               pw[(static_cast<std::size_t>(ic) * kh + ky) * kw + kx];
                    }
                }
                out[(static_cast<std::size_t>(ic) * oh + oy) * ow + ox] = acc;
            }
    }
    std::vector<Tensor> ins = {x, weight};
    if (has_bias) ins.push_back(bias);
    return make_op({c, oh, ow}, std::move(out), std::move(ins),
                   [c, h, w, kh, kw, oh, ow, padding, has_bias](detail::Node& n) {
                       const double* px2 = n.inputs[0]->data.data();
                       const double* pw2 = n.inputs[1]->data.data();
                       double* dx = n.inputs[0]->grad.data();
                       double* dw = n.inputs[1]->grad.data();
                       double* db = has_bias ? n.inputs[2]->grad.data() : nullptr;
                       for (int ic = 0; ic < c; ++ic)
                           for (int oy = 0; oy < oh; ++oy)
                               for (int ox = 0; ox < ow; ++ox) {
                                   double g = n.grad[(static_cast<std::size_t>(ic) * oh + oy) * ow + ox];
                                   if (g == 0.0) continue;
                                   if (db) db[ic] += g;
                                   for (int ky = 0; ky < kh; ++ky) {
                                       int iy = oy - padding + ky;
                                       if (iy < 0 || iy >= h) continue;
                                       for (int kx = 0; kx < kw; ++kx) {
                                           int ix = ox - padding + kx;
                                           if (ix < 0 || ix >= w) continue;
                                           std::size_t xo = (static_cast<std::size_t>(ic) * h + iy) * w + ix;
                                           std::size_t wo = (static_cast<std::size_t>(ic) * kh + ky) * kw + kx;
                                           dx[xo] += g * pw2[wo];
                                           dw[wo] += g * px2[xo];
                                       }
                                   }
                               }
                   });
}

// ---- layer norm over channels at each spatial site ----

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() != 3) throw ShapeError("layer_norm: expected x[c,h,w]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
        throw ShapeError("layer_norm: gamma/beta must be [c]");
    std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> rstd(hw);
    const double* px = x.data();
    const double* pg = gamma.data();
    const double* pb = beta.data();
    for (std::size_t s = 0; s < hw; ++s) {
        double mean = 0.0;
        for (int ic = 0; ic < c; ++ic) mean += px[static_cast<std::size_t>(ic) * hw + s];
        mean /= c;
        double var = 0.0;
        for (int ic = 0; ic < c; ++ic) {
            double d = px[static_cast<std::size_t>(ic) * hw + s] - mean;
            var += d * d;
        }
        var /= c;
        double rs = 1.0 / std::sqrt(var + eps);
        rstd[s] = rs;
        for (int ic = 0; ic < c; ++ic) {
            std::size_t off = static_cast<std::size_t>(ic) * hw + s;
            double xh = (px[off] - mean) * rs;
            xhat[off] = xh;
            out[off] = pg[ic] * xh + pb[ic];
        }
    }
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [c, hw, xhat, rstd](detail::Node& n) {
                       const double* pg2 = n.inputs[1]->data.data();
                       double* dx = n.inputs[0]->grad.data();
                       double* dg = n.inputs[1]->grad.data();
                       double* db = n.inputs[2]->grad.data();
                       for (std::size_t s = 0; s < hw; ++s) {
                           double m1 = 0.0, m2 = 0.0;
                           for (int ic = 0; ic < c; ++ic) {
                               std::size_t off = static_cast<std::size_t>(ic) * hw + s;
                               double gy = n.grad[off] * pg2[ic];
                               m1 += gy;
                               m2 += gy * xhat[off];
                               dg[ic] += n.grad[off] * xhat[off];
                               db[ic] += n.grad[off];
                           }
                           m1 /= c;
                           m2 /= c;
                           for (int ic = 0; ic < c; ++ic) {
                               std::size_t off = static_cast<std::size_t>(ic) * hw + s;
                               double gy = n.grad[off] * pg2[ic];
                               dx[off] += (gy - m1 - xhat[off] * m2) * rstd[s];
                           }
                       }
                   });
}

// ---- pixel shuffle ----

Tensor pixel_shuffle(const Tensor& x, int s) {
    if (x.rank() != 3) throw ShapeError("pixel_shuffle: expected x[c,h,w]");
    int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (cin % (s * s) != 0)
        throw ShapeError("pixel_shuffle: channels " + std::to_string(cin) + " not divisible by s^2=" +
                         std::to_string(s * s));
    int c = cin / (s * s);
    int oh = h * s, ow = w * s;
    std::vector<std::size_t> map(x.size());  // out flat -> in flat
    for (int oc = 0; oc < c; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int y = oy / s, dy = oy % s;
                int xx = ox / s, dx = ox % s;
                std::size_t in_off =
                    ((static_cast<std::size_t>(oc) * s * s + static_cast<std::size_t>(dy) * s + dx) * h + y) * w + xx;
                map[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = in_off;
            }
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = px[map[o]];
    return make_op({c, oh, ow}, std::move(out), {x}, [map](detail::Node& n) {
        for (std::size_t o = 0; o < n.size(); ++o) n.inputs[0]->grad[map[o]] += n.grad[o];
    });
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
    if (x.rank() != 3 || s.rank() != 1 || s.dim(0) != x.dim(0))
        throw ShapeError("mul_channel: expected x[c,h,w], s[c]");
    int c = x.dim(0);
    std::size_t hw = x.size() / static_cast<std::size_t>(c);
    std::vector<double> out(x.size());
    const double* px = x.data();
    const double* ps = s.data();
    for (int ic = 0; ic < c; ++ic)
        for (std::size_t j = 0; j < hw; ++j)
            out[static_cast<std::size_t>(ic) * hw + j] = px[static_cast<std::size_t>(ic) * hw + j] * ps[ic];
    return make_op(x.shape(), std::move(out), {x, s}, [c, hw](detail::Node& n) {
        const double* px2 = n.inputs[0]->data.data();
        const double* ps2 = n.inputs[1]->data.data();
        for (int ic = 0; ic < c; ++ic)
            for (std::size_t j = 0; j < hw; ++j) {
                std::size_t off = static_cast<std::size_t>(ic) * hw + j;
                n.inputs[0]->grad[off] += n.grad[off] * ps2[ic];
                n.inputs[1]->grad[ic] += n.grad[off] * px2[off];
            }
    });
}

// ---- spatial ----

Tensor pad_edge(const Tensor& x, int top, int bottom, int left, int right) {
    if (x.rank() != 3) throw ShapeError("pad_edge: expected x[c,h,w]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int oh = h + top + bottom, ow = w + left + right;
    std::vector<std::size_t> map(static_cast<std::size_t>(c) * oh * ow);
    for (int ic = 0; ic < c; ++ic)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int iy = std::clamp(oy - top, 0, h - 1);
                int ix = std::clamp(ox - left, 0, w - 1);
                map[(static_cast<std::size_t>(ic) * oh + oy) * ow + ox] =
                    (static_cast<std::size_t>(ic) * h + iy) * w + ix;
            }
    std::vector<double> out(map.size());
    const double* px = x.data();
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = px[map[o]];
    return make_op({c, oh, ow}, std::move(out), {x}, [map](detail::Node& n) {
        for (std::size_t o = 0; o < n.size(); ++o) n.inputs[0]->grad[map[o]] += n.grad[o];
    });
}

Tensor crop_spatial(const Tensor& x, int top, int left, int h, int w) {
    if (x.rank() != 3) throw ShapeError("crop_spatial: expected x[c,h,w]");
    int c = x.dim(0), ih = x.dim(1), iw = x.dim(2);
    if (top + h > ih || left + w > iw) throw ShapeError("crop_spatial: crop out of bounds");
    std::vector<double> out(static_cast<std::size_t>(c) * h * w);
    const double* px = x.data();
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < h; ++y)
            std::memcpy(&out[(static_cast<std::size_t>(ic) * h + y) * w],
                        &px[(static_cast<std::size_t>(ic) * ih + top + y) * iw + left],
                        static_cast<std::size_t>(w) * sizeof(double));
    return make_op({c, h, w}, std::move(out), {x}, [c, ih, iw, top, left, h, w](detail::Node& n) {
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    n.inputs[0]->grad[(static_cast<std::size_t>(ic) * ih + top + y) * iw + left + xx] +=
                        n.grad[(static_cast<std::size_t>(ic) * h + y) * w + xx];
    });
}

Tensor roll2d(const Tensor& x, int dy, int dx) {
    if (x.rank() != 3) throw ShapeError("roll2d: expected x[c,h,w]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto wrap = [](int v, int n) { return ((v % n) + n) % n; };
    std::vector<std::size_t> map(x.size());  // out -> in
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                int iy = wrap(y - dy, h);
                int ix = wrap(xx - dx, w);
                map[(static_cast<std::size_t>(ic) * h + y) * w + xx] =
                    (static_cast<std::size_t>(ic) * h + iy) * w + ix;
            }
    std::vector<double> out(x.size());
    const double* px = x.data();
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = px[map[o]];
    return make_op(x.shape(), std::move(out), {x}, [map](detail::Node& n) {
        for (std::size_t o = 0; o < n.size(); ++o) n.inputs[0]->grad[map[o]] += n.grad[o];
    });
}

// ---- DFT ----

namespace {

using cplx = std::complex<double>;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT; sign = -1 forward, +1 inverse-style (unnormalized).
void fft1(std::vector<cplx>& a, int sign) {
    int n = static_cast<int>(a.size());
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = sign * 2.0 * 3.14159265358979323846 / len;
        cplx wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            cplx w(1.0);
            for (int j = 0; j < len / 2; ++j) {
                cplx u = a[static_cast<std::size_t>(i + j)];
                cplx v = a[static_cast<std::size_t>(i + j + len / 2)] * w;
                a[static_cast<std::size_t>(i + j)] = u + v;
                a[static_cast<std::size_t>(i + j + len / 2)] = u - v;
                w *= wl;
            }
        }
    }
}

void dft1_direct(std::vector<cplx>& a, int sign) {
    int n = static_cast<int>(a.size());
    std::vector<cplx> out(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        cplx acc(0.0);
        for (int j = 0; j < n; ++j) {
            double ang = sign * 2.0 * 3.14159265358979323846 * k * j / n;
            acc += a[static_cast<std::size_t>(j)] * cplx(std::cos(ang), std::sin(ang));
        }
        out[static_cast<std::size_t>(k)] = acc;
    }
    a = std::move(out);
}

void transform1(std::vector<cplx>& a, int sign) {
    if (is_pow2(static_cast<int>(a.size())))
        fft1(a, sign);
    else
        dft1_direct(a, sign);
}

// Unnormalized 2-D transform on an h*w plane (row-major), rows then columns.
void transform2(std::vector<cplx>& plane, int h, int w, int sign) {
    std::vector<cplx> line;
    for (int y = 0; y < h; ++y) {
        line.assign(plane.begin() + static_cast<std::ptrdiff_t>(y) * w,
                    plane.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
        transform1(line, sign);
        std::copy(line.begin(), line.end(), plane.begin() + static_cast<std::ptrdiff_t>(y) * w);
    }
    for (int x = 0; x < w; ++x) {
        line.resize(static_cast<std::size_t>(h));
        for (int y = 0; y < h; ++y) line[static_cast<std::size_t>(y)] = plane[static_cast<std::size_t>(y) * w + x];
        transform1(line, sign);
        for (int y = 0; y < h; ++y) plane[static_cast<std::size_t>(y) * w + x] = line[static_cast<std::size_t>(y)];
    }
}

} // namespace

std::pair<Tensor, Tensor> dft2(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("dft2: expected x[c,h,w]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<double> re(x.size()), im(x.size());
    const double* px = x.data();
    std::vector<cplx> plane(hw);
    for (int ic = 0; ic < c; ++ic) {
        for (std::size_t j = 0; j < hw; ++j) plane[j] = cplx(px[static_cast<std::size_t>(ic) * hw + j], 0.0);
        transform2(plane, h, w, -1);
        for (std::size_t j = 0; j < hw; ++j) {
            re[static_cast<std::size_t>(ic) * hw + j] = plane[j].real();
            im[static_cast<std::size_t>(ic) * hw + j] = plane[j].imag();
        }
    }
    // The transform is linear; each output's backward is the sign-flipped
    // transform of its own gradient.
    auto real_t = make_op(x.shape(), std::move(re), {x}, [c, h, w, hw](detail::Node& n) {
        std::vector<cplx> p(hw);
        for (int ic = 0; ic < c; ++ic) {
            for (std::size_t j = 0; j < hw; ++j) p[j] = cplx(n.grad[static_cast<std::size_t>(ic) * hw + j], 0.0);
            transform2(p, h, w, +1);
            for (std::size_t j = 0; j < hw; ++j)
                n.inputs[0]->grad[static_cast<std::size_t>(ic) * hw + j] += p[j].real();
        }
    });
    auto imag_t = make_op(x.shape(), std::move(im), {x}, [c, h, w, hw](detail::Node& n) {
        std::vector<cplx> p(hw);
        for (int ic = 0; ic < c; ++ic) {
            for (std::size_t j = 0; j < hw; ++j) p[j] = cplx(0.0, n.grad[static_cast<std::size_t>(ic) * hw + j]);
            transform2(p, h, w, +1);
            for (std::size_t j = 0; j < hw; ++j)
                n.inputs[0]->grad[static_cast<std::size_t>(ic) * hw + j] += p[j].real();
        }
    });
    return {real_t, imag_t};
}

// ---- bilinear resize (half-pixel alignment, edge clamp) ----

Tensor bilinear_resize(const Tensor& x, int oh, int ow) {
    if (x.rank() != 3) throw ShapeError("bilinear_resize: expected x[c,h,w]");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    std::vector<double> out(static_cast<std::size_t>(c) * oh * ow);
    const double* px = x.data();
    double sy = static_cast<double>(h) / oh;
    double sx = static_cast<double>(w) / ow;
    for (int oy = 0; oy < oh; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, h - 1);
        int y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < ow; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, w - 1);
            int x1c = std::clamp(x0 + 1, 0, w - 1);
            for (int ic = 0; ic < c; ++ic) {
                const double* pc = px + static_cast<std::size_t>(ic) * h * w;
                double v00 = pc[y0c * w + x0c], v01 = pc[y0c * w + x1c];
                double v10 = pc[y1c * w + x0c], v11 = pc[y1c * w + x1c];
                out[(static_cast<std::size_t>(ic) * oh + oy) * ow + ox] =
                    (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return Tensor::from_data({c, oh, ow}, std::move(out));
}

// ---- gradient checking ----

double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor& x,
                  double h, int max_checks, std::uint64_t seed) {
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor y = f(x);
    if (!y.all_finite()) throw NumericError("grad_check: non-finite output");
    y.backward();
    std::vector<double> analytic = x.grad();
    if (analytic.size() != x.size()) analytic.assign(x.size(), 0.0);

    std::vector<std::size_t> coords;
    if (max_checks <= 0 || static_cast<std::size_t>(max_checks) >= x.size()) {
        coords.resize(x.size());
        std::iota(coords.begin(), coords.end(), 0u);
    } else {
        Rng rng(seed);
        std::unordered_set<std::size_t> seen;
        while (coords.size() < static_cast<std::size_t>(max_checks)) {
            std::size_t c = rng.uniform_int(x.size());
            if (seen.insert(c).second) coords.push_back(c);
        }
    }
    double max_rel = 0.0;
    NoGrad ng;
    for (std::size_t c : coords) {
        double orig = x.data()[c];
        x.data()[c] = orig + h;
        double fp = f(x).item();
        x.data()[c] = orig - h;
        double fm = f(x).item();
        x.data()[c] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: non-finite perturbed value");
        double num = (fp - fm) / (2.0 * h);
        double denom = std::max({std::fabs(num), std::fabs(analytic[c]), 1e-8});
        max_rel = std::max(max_rel, std::fabs(num - analytic[c]) / denom);
    }
    return max_rel;
}

} // namespace rwf
