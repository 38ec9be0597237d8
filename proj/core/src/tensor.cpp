#include "cbw/tensor.hpp"

#include <malloc.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cbw {

void fail(const std::string& message) { throw std::runtime_error(message); }

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_strict_div = true;
thread_local double g_div_guard = 1e-12;

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) fail("tensor: shape extents must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

using NodePtr = std::shared_ptr<detail::Node>;

// Map-sized buffers churn fast; keeping them on the heap instead of mmap
// avoids repeated page faults on every op.
void tune_allocator_once() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
        return true;
    }();
    (void)done;
#endif
}

NodePtr make_node(std::vector<int> shape) {
    tune_allocator_once();
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value.resize(shape_numel(node->shape), 0.0);
    return node;
}

// Registers `out` as the result of an op over `inputs`. The backward closure
// is attached only when a tape is active and some input lies on the gradient
// path; otherwise the result is a plain value.
void record(const Tensor& out, std::initializer_list<Tensor> inputs,
            std::function<void()> backprop) {
    bool needs = false;
    for (const Tensor& t : inputs) {
        if (t.defined() && t.requires_grad()) needs = true;
    }
    Tape* tape = Tape::active();
    if (!tape || !needs) return;
    out.node()->requires_grad = true;
    out.node()->on_tape = true;
    out.node()->backprop = std::move(backprop);
    Tape::push_node(out.node());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) fail(std::string(op) + ": shape mismatch");
}

}  // namespace

namespace detail {

double* Node::grad_data() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
}

void Node::accumulate(std::size_t i, double g) { grad_data()[i] += g; }

}  // namespace detail

// ---- Tape -------------------------------------------------------------------

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::push_node(std::shared_ptr<detail::Node> node) {
    g_active_tape->nodes_.push_back(std::move(node));
}

std::size_t Tape::backward(const Tensor& loss) {
    if (!loss.defined() || !loss.node()->on_tape)
        fail("backward: tensor is detached from the tape");
    if (loss.rank() != 0) fail("backward: loss must be rank-0");
    loss.node()->grad.assign(1, 1.0);
    std::size_t visited = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        detail::Node& node = **it;
        if (node.grad.empty() || !node.backprop) continue;
        node.backprop();
        ++visited;
    }
    return visited;
}

NoGrad::NoGrad() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGrad::~NoGrad() { g_active_tape = previous_; }

std::size_t backward(const Tensor& loss) {
    if (!Tape::active()) fail("backward: no active tape");
    return Tape::active()->backward(loss);
}

void set_strict_div(bool strict) { g_strict_div = strict; }
bool strict_div() { return g_strict_div; }
void set_div_guard(double epsilon) { g_div_guard = epsilon; }
double div_guard() { return g_div_guard; }

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto node = make_node(std::move(shape));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node()->value.begin(), t.node()->value.end(), value);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return full({}, value, requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    if (data.size() != t.numel()) fail("from_data: data length does not match shape");
    t.node()->value = std::move(data);
    return t;
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

int Tensor::dim(int axis) const {
    if (axis < 0 || axis >= rank()) fail("dim: axis out of range");
    return node_->shape[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::numel() const { return node_->value.size(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::on_tape() const { return node_ && node_->on_tape; }

double Tensor::item() const {
    if (rank() != 0) fail("item: tensor is not rank-0");
    return node_->value[0];
}

double Tensor::at(std::size_t flat_index) const {
    if (flat_index >= numel()) fail("at: index out of range");
    return node_->value[flat_index];
}

const std::vector<double>& Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() {
    if (node_->on_tape) fail("mutable_values: cannot mutate a recorded result");
    return node_->value;
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::set_requires_grad(bool flag) {
    if (node_->on_tape) fail("set_requires_grad: tensor is an op result");
    node_->requires_grad = flag;
}

Tensor Tensor::detach() const {
    auto node = make_node(node_->shape);
    node->value = node_->value;
    return Tensor(std::move(node));
}

// ---- elementwise ------------------------------------------------------------

namespace {

// Handles equal shapes plus rank-0 broadcast on either side. The callables
// are template parameters so the per-element loops inline and vectorize.
template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    const bool a_scalar = a.rank() == 0;
    const bool b_scalar = b.rank() == 0;
    if (!a_scalar && !b_scalar) check_same_shape(a, b, name);
    const Tensor& shaped = a_scalar ? b : a;
    Tensor out(make_node(shaped.shape()));
    const std::size_t n = out.numel();
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.node()->value.data();
    if (!a_scalar && !b_scalar) {
        for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
    } else if (a_scalar && !b_scalar) {
        const double x = av[0];
        for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(x, bv[i]);
    } else if (!a_scalar && b_scalar) {
        const double y = bv[0];
        for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i], y);
    } else {
        ov[0] = fwd(av[0], bv[0]);
    }
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node().get();
    record(out, {a, b}, [an, bn, on, a_scalar, b_scalar, bwd, n]() {
        const double* g = on->grad.data();
        const double* ax = an->value.data();
        const double* bx = bn->value.data();
        const bool need_a = an->requires_grad;
        const bool need_b = bn->requires_grad;
        double* ga = need_a ? an->grad_data() : nullptr;
        double* gb = need_b ? bn->grad_data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            bwd(ax[a_scalar ? 0 : i], bx[b_scalar ? 0 : i], g[i], gx, gy);
            if (need_a) ga[a_scalar ? 0 : i] += gx;
            if (need_b) gb[b_scalar ? 0 : i] += gy;
        }
    });
    return out;
}

template <typename Fwd, typename Dfdx>
Tensor unary_op(const Tensor& a, Fwd fwd, Dfdx dfdx) {
    Tensor out(make_node(a.shape()));
    const std::size_t n = out.numel();
    const double* av = a.values().data();
    double* ov = out.node()->value.data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i]);
    auto an = a.node();
    auto on = out.node().get();
    record(out, {a}, [an, on, dfdx, n]() {
        const double* g = on->grad.data();
        const double* ax = an->value.data();
        const double* fx = on->value.data();
        double* ga = an->grad_data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * dfdx(ax[i], fx[i]);
    });
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                     [](double, double, double g, double& gx, double& gy) {
                         gx = g;
                         gy = g;
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                     [](double, double, double g, double& gx, double& gy) {
                         gx = g;
                         gy = -g;
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                     [](double x, double y, double g, double& gx, double& gy) {
                         gx = g * y;
                         gy = g * x;
                     });
}

namespace {

double guarded_denominator(double y) {
    if (y == 0.0) {
        if (g_strict_div) fail("div: division by exact zero in strict mode");
        return g_div_guard;
    }
    if (!g_strict_div && std::fabs(y) < g_div_guard)
        return y < 0.0 ? -g_div_guard : g_div_guard;
    return y;
}

}  // namespace

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "div",
                     [](double x, double y) { return x / guarded_denominator(y); },
                     [](double x, double y, double g, double& gx, double& gy) {
                         const double d = guarded_denominator(y);
                         gx = g / d;
                         gy = -g * x / (d * d);
                     });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor div(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
Tensor div(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

Tensor neg(const Tensor& a) {
    return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double fx) { return fx; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double fx) { return fx > 0.0 ? 0.5 / fx : 0.0; });
}

Tensor abs(const Tensor& a) {
    return unary_op(a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
    return unary_op(a, [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

Tensor sin(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sin(x); },
                    [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
    return unary_op(a, [](double x) { return std::cos(x); },
                    [](double x, double) { return -std::sin(x); });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double fx) { return fx * (1.0 - fx); });
}

Tensor elu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
                    [](double x, double fx) { return x > 0.0 ? 1.0 : fx + 1.0; });
}

namespace {

Tensor clamp_like(const Tensor& a, double lo, double hi) {
    Tensor out(make_node(a.shape()));
    const std::size_t n = out.numel();
    const double* av = a.values().data();
    double* ov = out.node()->value.data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = std::min(std::max(av[i], lo), hi);
    auto an = a.node();
    auto on = out.node().get();
    record(out, {a}, [an, on, lo, hi, n]() {
        const double* g = on->grad.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double x = an->value[i];
            if (x > lo && x < hi) an->accumulate(i, g[i]);  // subgradient 0 outside
        }
    });
    return out;
}

}  // namespace

Tensor min_with(const Tensor& a, double c) {
    return clamp_like(a, -std::numeric_limits<double>::infinity(), c);
}

Tensor max_with(const Tensor& a, double c) {
    return clamp_like(a, c, std::numeric_limits<double>::infinity());
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) fail("clamp: lo > hi");
    return clamp_like(a, lo, hi);
}

// ---- reductions ---------------------------------------------------------------

namespace {

Tensor reduce_impl(const Tensor& a, const std::vector<int>& axes, bool all_axes,
                   bool mean) {
    const int r = a.rank();
    std::vector<bool> reduced(static_cast<std::size_t>(r), false);
    if (all_axes) {
        std::fill(reduced.begin(), reduced.end(), true);
    } else {
        if (axes.empty()) fail("reduce: empty reduction set");
        for (int ax : axes) {
            if (ax < 0 || ax >= r) fail("reduce: axis out of range");
            reduced[static_cast<std::size_t>(ax)] = true;
        }
    }
    std::vector<int> out_shape;
    std::size_t count = 1;
    for (int i = 0; i < r; ++i) {
        if (reduced[static_cast<std::size_t>(i)])
            count *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
        else
            out_shape.push_back(a.shape()[static_cast<std::size_t>(i)]);
    }
    if (a.numel() == 0 || count == 0) fail("reduce: empty reduction set");

    // Strides of the input, and for each input element the flat output index.
    std::vector<std::size_t> in_strides(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        in_strides[static_cast<std::size_t>(i)] =
            in_strides[static_cast<std::size_t>(i + 1)] *
            static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i + 1)]);
    std::vector<std::size_t> out_strides(static_cast<std::size_t>(r), 0);
    {
        std::size_t stride = 1;
        for (int i = r - 1; i >= 0; --i) {
            if (!reduced[static_cast<std::size_t>(i)]) {
                out_strides[static_cast<std::size_t>(i)] = stride;
                stride *= static_cast<std::size_t>(a.shape()[static_cast<std::size_t>(i)]);
            }
        }
    }

    Tensor out(make_node(out_shape));
    const double scale = mean ? 1.0 / static_cast<double>(count) : 1.0;
    const double* av = a.values().data();
    double* ov = out.node()->value.data();
    const std::size_t n = a.numel();
    const std::vector<int> in_shape = a.shape();

    // Odometer walk: advance a multi-index and track the output offset.
    // Captures by value so the backward closure can outlive this frame.
    const auto for_each_mapping = [in_shape, out_strides, r, n](auto&& body) {
        std::vector<int> idx(static_cast<std::size_t>(r), 0);
        std::size_t oi = 0;
        for (std::size_t flat = 0; flat < n; ++flat) {
            body(flat, oi);
            for (int i = r - 1; i >= 0; --i) {
                const std::size_t ui = static_cast<std::size_t>(i);
                if (++idx[ui] < in_shape[ui]) {
                    oi += out_strides[ui];
                    break;
                }
                idx[ui] = 0;
                oi -= out_strides[ui] * static_cast<std::size_t>(in_shape[ui] - 1);
            }
        }
    };

    const bool full = out_shape.empty();
    if (full) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += av[i];
        ov[0] = s * scale;
    } else {
        for_each_mapping([&](std::size_t flat, std::size_t oi) { ov[oi] += av[flat]; });
        if (mean)
            for (double& v : out.node()->value) v *= scale;
    }

    auto an = a.node();
    auto on = out.node().get();
    record(out, {a}, [an, on, for_each_mapping, scale, n, full]() {
        const double* g = on->grad.data();
        double* ga = an->grad_data();
        if (full) {
            const double gv = g[0] * scale;
            for (std::size_t i = 0; i < n; ++i) ga[i] += gv;
        } else {
            for_each_mapping(
                [&](std::size_t flat, std::size_t oi) { ga[flat] += g[oi] * scale; });
        }
    });
    return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& a) { return reduce_impl(a, {}, true, false); }
Tensor reduce_mean(const Tensor& a) { return reduce_impl(a, {}, true, true); }

Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes) {
    return reduce_impl(a, axes, false, false);
}

Tensor reduce_mean(const Tensor& a, const std::vector<int>& axes) {
    return reduce_impl(a, axes, false, true);
}

// ---- conv2d -------------------------------------------------------------------

namespace {

// Copies one padded HxW plane out of src.
void pad_plane(const double* src, int h, int w, int pad, PadMode mode, double* dst) {
    const int ph = h + 2 * pad;
    const int pw = w + 2 * pad;
    for (int y = 0; y < ph; ++y) {
        int sy = y - pad;
        if (mode == PadMode::Reflect) {
            if (sy < 0) sy = -sy;
            if (sy > h - 1) sy = 2 * (h - 1) - sy;
        }
        const bool row_in = sy >= 0 && sy < h;
        for (int x = 0; x < pw; ++x) {
            int sx = x - pad;
            if (mode == PadMode::Reflect) {
                if (sx < 0) sx = -sx;
                if (sx > w - 1) sx = 2 * (w - 1) - sx;
            }
            const bool in = row_in && sx >= 0 && sx < w;
            dst[y * pw + x] = in ? src[sy * w + sx] : 0.0;
        }
    }
}

// Folds a padded-plane gradient back onto the source plane.
void unpad_accumulate(const double* gpad, int h, int w, int pad, PadMode mode,
                      double* gsrc) {
    const int ph = h + 2 * pad;
    const int pw = w + 2 * pad;
    for (int y = 0; y < ph; ++y) {
        int sy = y - pad;
        if (mode == PadMode::Reflect) {
            if (sy < 0) sy = -sy;
            if (sy > h - 1) sy = 2 * (h - 1) - sy;
        }
        if (sy < 0 || sy >= h) continue;
        for (int x = 0; x < pw; ++x) {
            int sx = x - pad;
            if (mode == PadMode::Reflect) {
                if (sx < 0) sx = -sx;
                if (sx > w - 1) sx = 2 * (w - 1) - sx;
            }
            if (sx < 0 || sx >= w) continue;
            gsrc[sy * w + sx] += gpad[y * pw + x];
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, Padding padding) {
    if (input.rank() != 4) fail("conv2d: input must be [N,C,H,W]");
    if (weight.rank() != 4) fail("conv2d: weight must be [F,C,kH,kW]");
    if (stride < 1) fail("conv2d: stride must be >= 1");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int f = weight.dim(0), kc = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    if (kc != c) fail("conv2d: channel mismatch between input and weight");
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != f))
        fail("conv2d: bias must be [F]");
    const int pad = padding.size;
    if (padding.mode == PadMode::Reflect && pad > 0 && (h < pad + 1 || w < pad + 1))
        fail("conv2d: reflection padding larger than input");
    const int ph = h + 2 * pad, pw = w + 2 * pad;
    const int oh = (ph - kh) / stride + 1;
    const int ow = (pw - kw) / stride + 1;
    if (oh < 1 || ow < 1) fail("conv2d: kernel does not fit padded input");

    Tensor out(make_node({n, f, oh, ow}));
    const double* in = input.values().data();
    const double* wv = weight.values().data();
    const double* bv = bias.defined() ? bias.values().data() : nullptr;
    double* ov = out.node()->value.data();

    std::vector<double> padded(static_cast<std::size_t>(c) * ph * pw);
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci)
            pad_plane(in + (static_cast<std::size_t>(ni) * c + ci) * h * w, h, w, pad,
                      padding.mode, padded.data() + static_cast<std::size_t>(ci) * ph * pw);
        for (int fi = 0; fi < f; ++fi) {
            double* oplane = ov + (static_cast<std::size_t>(ni) * f + fi) * oh * ow;
            const double b = bv ? bv[fi] : 0.0;
            std::fill(oplane, oplane + static_cast<std::size_t>(oh) * ow, b);
            for (int ci = 0; ci < c; ++ci) {
                const double* iplane = padded.data() + static_cast<std::size_t>(ci) * ph * pw;
                const double* wplane =
                    wv + ((static_cast<std::size_t>(fi) * c + ci) * kh) * kw;
                for (int oy = 0; oy < oh; ++oy) {
                    double* __restrict__ orow = oplane + static_cast<std::size_t>(oy) * ow;
                    for (int ky = 0; ky < kh; ++ky) {
                        const double* irow =
                            iplane + static_cast<std::size_t>(oy * stride + ky) * pw;
                        for (int kx = 0; kx < kw; ++kx) {
                            const double coeff = wplane[ky * kw + kx];
                            if (coeff == 0.0) continue;
                            const double* __restrict__ ir = irow + kx;
                            if (stride == 1) {
                                for (int ox = 0; ox < ow; ++ox) orow[ox] += coeff * ir[ox];
                            } else {
                                for (int ox = 0; ox < ow; ++ox)
                                    orow[ox] += coeff * ir[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }

    auto in_node = input.node();
    auto w_node = weight.node();
    auto b_node = bias.defined() ? bias.node() : nullptr;
    auto out_node = out.node().get();
    const PadMode mode = padding.mode;
    record(out, {input, weight, bias}, [=]() {
        const double* g = out_node->grad.data();
        std::vector<double> padded_in(static_cast<std::size_t>(c) * ph * pw);
        std::vector<double> padded_grad;
        const bool need_in = in_node->requires_grad;
        const bool need_w = w_node->requires_grad;
        if (need_in) padded_grad.resize(static_cast<std::size_t>(c) * ph * pw);
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < c; ++ci)
                pad_plane(in_node->value.data() +
                              (static_cast<std::size_t>(ni) * c + ci) * h * w,
                          h, w, pad, mode,
                          padded_in.data() + static_cast<std::size_t>(ci) * ph * pw);
            if (need_in) std::fill(padded_grad.begin(), padded_grad.end(), 0.0);
            for (int fi = 0; fi < f; ++fi) {
                const double* gplane = g + (static_cast<std::size_t>(ni) * f + fi) * oh * ow;
                if (b_node && b_node->requires_grad) {
                    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                    int i = 0;
                    for (; i + 4 <= oh * ow; i += 4) {
                        s0 += gplane[i];
                        s1 += gplane[i + 1];
                        s2 += gplane[i + 2];
                        s3 += gplane[i + 3];
                    }
                    for (; i < oh * ow; ++i) s0 += gplane[i];
                    b_node->accumulate(static_cast<std::size_t>(fi), s0 + s1 + s2 + s3);
                }
                for (int ci = 0; ci < c; ++ci) {
                    const double* iplane =
                        padded_in.data() + static_cast<std::size_t>(ci) * ph * pw;
                    double* gpad = need_in ? padded_grad.data() +
                                                 static_cast<std::size_t>(ci) * ph * pw
                                           : nullptr;
                    const std::size_t wbase =
                        (static_cast<std::size_t>(fi) * c + ci) * kh * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const std::size_t tap = static_cast<std::size_t>(ky) * pw + kx;
                            if (need_w) {
                                // Four-lane accumulation keeps the reduction
                                // order fixed while letting the loop vectorize.
                                double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                                for (int oy = 0; oy < oh; ++oy) {
                                    const double* __restrict__ grow =
                                        gplane + static_cast<std::size_t>(oy) * ow;
                                    const double* __restrict__ ir =
                                        iplane + static_cast<std::size_t>(oy * stride) * pw +
                                        tap;
                                    int ox = 0;
                                    if (stride == 1) {
                                        for (; ox + 4 <= ow; ox += 4) {
                                            s0 += grow[ox] * ir[ox];
                                            s1 += grow[ox + 1] * ir[ox + 1];
                                            s2 += grow[ox + 2] * ir[ox + 2];
                                            s3 += grow[ox + 3] * ir[ox + 3];
                                        }
                                        for (; ox < ow; ++ox) s0 += grow[ox] * ir[ox];
                                    } else {
                                        for (; ox < ow; ++ox) s0 += grow[ox] * ir[ox * stride];
                                    }
                                }
                                w_node->accumulate(wbase + ky * kw + kx, s0 + s1 + s2 + s3);
                            }
                            if (gpad) {
                                const double coeff = w_node->value[wbase + ky * kw + kx];
                                if (coeff == 0.0) continue;
                                for (int oy = 0; oy < oh; ++oy) {
                                    const double* __restrict__ grow =
                                        gplane + static_cast<std::size_t>(oy) * ow;
                                    double* __restrict__ gr = gpad +
                                                 static_cast<std::size_t>(oy * stride) * pw +
                                                 tap;
                                    if (stride == 1) {
                                        for (int ox = 0; ox < ow; ++ox)
                                            gr[ox] += coeff * grow[ox];
                                    } else {
                                        for (int ox = 0; ox < ow; ++ox)
                                            gr[ox * stride] += coeff * grow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (need_in) {
                for (int ci = 0; ci < c; ++ci)
                    unpad_accumulate(padded_grad.data() + static_cast<std::size_t>(ci) * ph * pw,
                                     h, w, pad, mode,
                                     in_node->grad_data() +
                                         (static_cast<std::size_t>(ni) * c + ci) * h * w);
            }
        }
    });
    return out;
}

// ---- grid sample ---------------------------------------------------------------

GridSampleResult grid_sample_bilinear(const Tensor& map, const Tensor& coords) {
    if (map.rank() != 4) fail("grid_sample: map must be [N,C,H,W]");
    if (coords.rank() != 4 || coords.dim(3) != 2)
        fail("grid_sample: coords must be [N,Hq,Wq,2]");
    if (coords.dim(0) != map.dim(0)) fail("grid_sample: batch mismatch");
    const int n = map.dim(0), c = map.dim(1), h = map.dim(2), w = map.dim(3);
    const int hq = coords.dim(1), wq = coords.dim(2);
    const std::size_t q = static_cast<std::size_t>(hq) * wq;

    Tensor out(make_node({n, c, hq, wq}));
    Tensor mask(make_node({n, hq, wq}));
    const double* mv = map.values().data();
    const double* cv = coords.values().data();
    double* ov = out.node()->value.data();
    double* kv = mask.node()->value.data();

    for (int ni = 0; ni < n; ++ni) {
        const double* cb = cv + static_cast<std::size_t>(ni) * q * 2;
        double* kb = kv + static_cast<std::size_t>(ni) * q;
        for (std::size_t p = 0; p < q; ++p) {
            const double x = cb[p * 2 + 0];
            const double y = cb[p * 2 + 1];
            const int x0 = static_cast<int>(std::floor(x));
            const int y0 = static_cast<int>(std::floor(y));
            const double fx = x - x0;
            const double fy = y - y0;
            // Neighbours with zero weight are ignored for the bounds test, so
            // exact integer coordinates on the far edge remain in bounds.
            const bool need_x1 = fx > 0.0;
            const bool need_y1 = fy > 0.0;
            bool ok = x0 >= 0 && y0 >= 0 && x0 <= w - 1 && y0 <= h - 1;
            if (need_x1) ok = ok && (x0 + 1 <= w - 1);
            if (need_y1) ok = ok && (y0 + 1 <= h - 1);
            kb[p] = ok ? 1.0 : 0.0;
            if (!ok) continue;
            const int x1 = need_x1 ? x0 + 1 : x0;
            const int y1 = need_y1 ? y0 + 1 : y0;
            const double w00 = (1.0 - fx) * (1.0 - fy);
            const double w10 = fx * (1.0 - fy);
            const double w01 = (1.0 - fx) * fy;
            const double w11 = fx * fy;
            for (int ci = 0; ci < c; ++ci) {
                const double* plane =
                    mv + (static_cast<std::size_t>(ni) * c + ci) * h * w;
                ov[(static_cast<std::size_t>(ni) * c + ci) * q + p] =
                    w00 * plane[y0 * w + x0] + w10 * plane[y0 * w + x1] +
                    w01 * plane[y1 * w + x0] + w11 * plane[y1 * w + x1];
            }
        }
    }

    auto m_node = map.node();
    auto c_node = coords.node();
    auto o_node = out.node().get();
    auto k_node = mask.node();
    record(out, {map, coords}, [=]() {
        const double* g = o_node->grad.data();
        const double* cvb = c_node->value.data();
        const double* kvb = k_node->value.data();
        for (int ni = 0; ni < n; ++ni) {
            const double* cb = cvb + static_cast<std::size_t>(ni) * q * 2;
            const double* kb = kvb + static_cast<std::size_t>(ni) * q;
            for (std::size_t p = 0; p < q; ++p) {
                if (kb[p] == 0.0) continue;
                const double x = cb[p * 2 + 0];
                const double y = cb[p * 2 + 1];
                const int x0 = static_cast<int>(std::floor(x));
                const int y0 = static_cast<int>(std::floor(y));
                const double fx = x - x0;
                const double fy = y - y0;
                const bool need_x1 = fx > 0.0 && x0 + 1 <= w - 1;
                const bool need_y1 = fy > 0.0 && y0 + 1 <= h - 1;
                const int x1 = need_x1 ? x0 + 1 : x0;
                const int y1 = need_y1 ? y0 + 1 : y0;
                double gx = 0.0, gy = 0.0;
                for (int ci = 0; ci < c; ++ci) {
                    const std::size_t base = (static_cast<std::size_t>(ni) * c + ci);
                    const double go = g[base * q + p];
                    if (go == 0.0) continue;
                    const double* plane = m_node->value.data() + base * h * w;
                    const double v00 = plane[y0 * w + x0];
                    const double v10 = plane[y0 * w + x1];
                    const double v01 = plane[y1 * w + x0];
                    const double v11 = plane[y1 * w + x1];
                    if (m_node->requires_grad) {
                        double* gp = m_node->grad_data() + base * h * w;
                        gp[y0 * w + x0] += go * (1.0 - fx) * (1.0 - fy);
                        gp[y0 * w + x1] += go * fx * (1.0 - fy);
                        gp[y1 * w + x0] += go * (1.0 - fx) * fy;
                        gp[y1 * w + x1] += go * fx * fy;
                    }
                    if (c_node->requires_grad && need_x1)
                        gx += go * ((v10 - v00) * (1.0 - fy) + (v11 - v01) * fy);
                    if (c_node->requires_grad && need_y1)
                        gy += go * ((v01 - v00) * (1.0 - fx) + (v11 - v10) * fx);
                }
                if (c_node->requires_grad) {
                    c_node->accumulate(static_cast<std::size_t>(ni) * q * 2 + p * 2 + 0, gx);
                    c_node->accumulate(static_cast<std::size_t>(ni) * q * 2 + p * 2 + 1, gy);
                }
            }
        }
    });
    return {out, Tensor(std::move(k_node))};
}

// ---- spatial gradient ------------------------------------------------------------

SpatialGradient spatial_gradient(const Tensor& map) {
    if (map.rank() < 2) fail("spatial_gradient: rank must be >= 2");
    const int w = map.shape().back();
    const int h = map.shape()[map.shape().size() - 2];
    if (h < 2 || w < 2) fail("spatial_gradient: trailing extents must be >= 2");
    const std::size_t planes = map.numel() / (static_cast<std::size_t>(h) * w);

    Tensor dx(make_node(map.shape()));
    Tensor dy(make_node(map.shape()));
    const double* mv = map.values().data();
    double* xv = dx.node()->value.data();
    double* yv = dy.node()->value.data();
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const double* p = mv + pl * h * w;
        double* px = xv + pl * h * w;
        double* py = yv + pl * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                px[y * w + x] = x + 1 < w ? p[y * w + x + 1] - p[y * w + x] : 0.0;
                py[y * w + x] = y + 1 < h ? p[(y + 1) * w + x] - p[y * w + x] : 0.0;
            }
    }

    auto m_node = map.node();
    auto dx_node = dx.node().get();
    auto dy_node = dy.node().get();
    record(dx, {map}, [m_node, dx_node, planes, h, w]() {
        const double* g = dx_node->grad.data();
        for (std::size_t pl = 0; pl < planes; ++pl) {
            double* gm = m_node->grad_data() + pl * h * w;
            const double* gp = g + pl * h * w;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x + 1 < w; ++x) {
                    gm[y * w + x + 1] += gp[y * w + x];
                    gm[y * w + x] -= gp[y * w + x];
                }
        }
    });
    record(dy, {map}, [m_node, dy_node, planes, h, w]() {
        const double* g = dy_node->grad.data();
        for (std::size_t pl = 0; pl < planes; ++pl) {
            double* gm = m_node->grad_data() + pl * h * w;
            const double* gp = g + pl * h * w;
            for (int y = 0; y + 1 < h; ++y)
                for (int x = 0; x < w; ++x) {
                    gm[(y + 1) * w + x] += gp[y * w + x];
                    gm[y * w + x] -= gp[y * w + x];
                }
        }
    });
    return {dx, dy};
}

// ---- box mean ---------------------------------------------------------------------

namespace {

// Separable box sum over a reflection-padded plane: rows then columns.
void box_sum_plane(const double* src, int h, int w, int pad, double inv, double* tmp_rows,
                   double* dst) {
    const int pw = w + 2 * pad;
    const int ph = h + 2 * pad;
    const int window = 2 * pad + 1;
    // tmp_rows: [ph x w] horizontal sums over the padded rows.
    for (int y = 0; y < ph; ++y) {
        const double* row = src + static_cast<std::size_t>(y) * pw;
        double* trow = tmp_rows + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = 0; k < window; ++k) s += row[x + k];
            trow[x] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        double* drow = dst + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) drow[x] = 0.0;
        for (int k = 0; k < window; ++k) {
            const double* trow = tmp_rows + static_cast<std::size_t>(y + k) * w;
            for (int x = 0; x < w; ++x) drow[x] += trow[x];
        }
        for (int x = 0; x < w; ++x) drow[x] *= inv;
    }
}

}  // namespace

Tensor box_mean(const Tensor& a, int window) {
    if (window < 1 || window % 2 == 0) fail("box_mean: window must be odd and positive");
    if (a.rank() < 2) fail("box_mean: rank must be >= 2");
    const int w = a.shape().back();
    const int h = a.shape()[a.shape().size() - 2];
    const int pad = window / 2;
    if (h < pad + 1 || w < pad + 1) fail("box_mean: window larger than input");
    const std::size_t planes = a.numel() / (static_cast<std::size_t>(h) * w);
    const double inv = 1.0 / (static_cast<double>(window) * window);

    const int ph = h + 2 * pad, pw = w + 2 * pad;
    Tensor out(make_node(a.shape()));
    std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
    std::vector<double> tmp(static_cast<std::size_t>(ph) * w);
    const double* av = a.values().data();
    double* ov = out.node()->value.data();
    for (std::size_t pl = 0; pl < planes; ++pl) {
        pad_plane(av + pl * h * w, h, w, pad, PadMode::Reflect, padded.data());
        box_sum_plane(padded.data(), h, w, pad, inv, tmp.data(), ov + pl * h * w);
    }

    auto a_node = a.node();
    auto o_node = out.node().get();
    record(out, {a}, [a_node, o_node, planes, h, w, pad, window, inv, ph, pw]() {
        const double* g = o_node->grad.data();
        std::vector<double> gpad(static_cast<std::size_t>(ph) * pw);
        std::vector<double> grow_sums(static_cast<std::size_t>(h) * pw);
        for (std::size_t pl = 0; pl < planes; ++pl) {
            // Transpose of the separable pass: spread each output gradient
            // over its window via row sums first.
            const double* gp = g + pl * h * w;
            std::fill(grow_sums.begin(), grow_sums.end(), 0.0);
            for (int y = 0; y < h; ++y) {
                const double* grow = gp + static_cast<std::size_t>(y) * w;
                double* srow = grow_sums.data() + static_cast<std::size_t>(y) * pw;
                for (int k = 0; k < window; ++k)
                    for (int x = 0; x < w; ++x) srow[x + k] += grow[x];
            }
            std::fill(gpad.begin(), gpad.end(), 0.0);
            for (int y = 0; y < h; ++y) {
                const double* srow = grow_sums.data() + static_cast<std::size_t>(y) * pw;
                for (int k = 0; k < window; ++k) {
                    double* prow = gpad.data() + static_cast<std::size_t>(y + k) * pw;
                    for (int x = 0; x < pw; ++x) prow[x] += srow[x] * inv;
                }
            }
            unpad_accumulate(gpad.data(), h, w, pad, PadMode::Reflect,
                             a_node->grad_data() + pl * h * w);
        }
    });
    return out;
}

// ---- resampling ---------------------------------------------------------------------

Tensor upsample_nearest2(const Tensor& a) {
    if (a.rank() < 2) fail("upsample_nearest2: rank must be >= 2");
    const int w = a.shape().back();
    const int h = a.shape()[a.shape().size() - 2];
    const std::size_t planes = a.numel() / (static_cast<std::size_t>(h) * w);
    std::vector<int> shape = a.shape();
    shape[shape.size() - 2] = h * 2;
    shape[shape.size() - 1] = w * 2;
    Tensor out(make_node(shape));
    const double* av = a.values().data();
    double* ov = out.node()->value.data();
    const int oh = h * 2, ow = w * 2;
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const double* ap = av + pl * h * w;
        double* op = ov + pl * static_cast<std::size_t>(oh) * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) op[y * ow + x] = ap[(y / 2) * w + x / 2];
    }
    auto a_node = a.node();
    auto o_node = out.node().get();
    record(out, {a}, [a_node, o_node, planes, h, w, oh, ow]() {
        const double* g = o_node->grad.data();
        for (std::size_t pl = 0; pl < planes; ++pl) {
            double* gm = a_node->grad_data() + pl * h * w;
            const double* gp = g + pl * static_cast<std::size_t>(oh) * ow;
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) gm[(y / 2) * w + x / 2] += gp[y * ow + x];
        }
    });
    return out;
}

Tensor downsample_area2(const Tensor& a) {
    if (a.rank() < 2) fail("downsample_area2: rank must be >= 2");
    const int w = a.shape().back();
    const int h = a.shape()[a.shape().size() - 2];
    if (h % 2 != 0 || w % 2 != 0) fail("downsample_area2: extents must be even");
    const std::size_t planes = a.numel() / (static_cast<std::size_t>(h) * w);
    std::vector<int> shape = a.shape();
    shape[shape.size() - 2] = h / 2;
    shape[shape.size() - 1] = w / 2;
    Tensor out(make_node(shape));
    const double* av = a.values().data();
    double* ov = out.node()->value.data();
    const int oh = h / 2, ow = w / 2;
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const double* ap = av + pl * h * w;
        double* op = ov + pl * static_cast<std::size_t>(oh) * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                op[y * ow + x] = 0.25 * (ap[(2 * y) * w + 2 * x] + ap[(2 * y) * w + 2 * x + 1] +
                                         ap[(2 * y + 1) * w + 2 * x] +
                                         ap[(2 * y + 1) * w + 2 * x + 1]);
    }
    auto a_node = a.node();
    auto o_node = out.node().get();
    record(out, {a}, [a_node, o_node, planes, h, w, oh, ow]() {
        const double* g = o_node->grad.data();
        for (std::size_t pl = 0; pl < planes; ++pl) {
            double* gm = a_node->grad_data() + pl * h * w;
            const double* gp = g + pl * static_cast<std::size_t>(oh) * ow;
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    const double gv = 0.25 * gp[y * ow + x];
                    gm[(2 * y) * w + 2 * x] += gv;
                    gm[(2 * y) * w + 2 * x + 1] += gv;
                    gm[(2 * y + 1) * w + 2 * x] += gv;
                    gm[(2 * y + 1) * w + 2 * x + 1] += gv;
                }
        }
    });
    return out;
}

// ---- shape ops ---------------------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    if (a.rank() != b.rank()) fail("concat: rank mismatch");
    if (axis < 0 || axis >= a.rank()) fail("concat: axis out of range");
    for (int i = 0; i < a.rank(); ++i)
        if (i != axis && a.dim(i) != b.dim(i)) fail("concat: shape mismatch off-axis");
    std::vector<int> shape = a.shape();
    shape[static_cast<std::size_t>(axis)] += b.dim(axis);

    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a.dim(i));
    for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<std::size_t>(a.dim(i));
    const std::size_t a_block = static_cast<std::size_t>(a.dim(axis)) * inner;
    const std::size_t b_block = static_cast<std::size_t>(b.dim(axis)) * inner;

    Tensor out(make_node(shape));
    double* ov = out.node()->value.data();
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(av + o * a_block, av + (o + 1) * a_block, ov + o * (a_block + b_block));
        std::copy(bv + o * b_block, bv + (o + 1) * b_block,
                  ov + o * (a_block + b_block) + a_block);
    }
    auto a_node = a.node();
    auto b_node = b.node();
    auto o_node = out.node().get();
    record(out, {a, b}, [a_node, b_node, o_node, outer, a_block, b_block]() {
        const double* g = o_node->grad.data();
        for (std::size_t o = 0; o < outer; ++o) {
            if (a_node->requires_grad) {
                double* ga = a_node->grad_data();
                for (std::size_t i = 0; i < a_block; ++i)
                    ga[o * a_block + i] += g[o * (a_block + b_block) + i];
            }
            if (b_node->requires_grad) {
                double* gb = b_node->grad_data();
                for (std::size_t i = 0; i < b_block; ++i)
                    gb[o * b_block + i] += g[o * (a_block + b_block) + a_block + i];
            }
        }
    });
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.numel()) fail("reshape: element count mismatch");
    Tensor out(make_node(std::move(shape)));
    out.node()->value = a.values();
    auto a_node = a.node();
    auto o_node = out.node().get();
    record(out, {a}, [a_node, o_node]() {
        const double* g = o_node->grad.data();
        for (std::size_t i = 0; i < a_node->value.size(); ++i) a_node->accumulate(i, g[i]);
    });
    return out;
}

Tensor index_scalar(const Tensor& a, std::size_t flat_index) {
    if (flat_index >= a.numel()) fail("index_scalar: index out of range");
    Tensor out(make_node({}));
    out.node()->value[0] = a.values()[flat_index];
    auto a_node = a.node();
    auto o_node = out.node().get();
    record(out, {a}, [a_node, o_node, flat_index]() {
        a_node->accumulate(flat_index, o_node->grad[0]);
    });
    return out;
}

Tensor slice1d(const Tensor& a, int start, int len) {
    if (a.rank() != 1) fail("slice1d: tensor must be rank-1");
    if (start < 0 || len < 1 || start + len > a.dim(0)) fail("slice1d: range out of bounds");
    Tensor out(make_node({len}));
    std::copy(a.values().begin() + start, a.values().begin() + start + len,
              out.node()->value.begin());
    auto a_node = a.node();
    auto o_node = out.node().get();
    record(out, {a}, [a_node, o_node, start, len]() {
        for (int i = 0; i < len; ++i)
            a_node->accumulate(static_cast<std::size_t>(start + i), o_node->grad[i]);
    });
    return out;
}

// Multiplies `a` by `b` broadcast over a's leading axes; b's shape must equal
// a's trailing shape.
Tensor mul_trailing(const Tensor& a, const Tensor& b) {
    const int ra = a.rank(), rb = b.rank();
    if (rb > ra) fail("mul_trailing: b has higher rank than a");
    for (int i = 0; i < rb; ++i)
        if (a.dim(ra - rb + i) != b.dim(i)) fail("mul_trailing: trailing shape mismatch");
    const std::size_t block = b.numel();
    const std::size_t reps = a.numel() / std::max<std::size_t>(block, 1);
    Tensor out(make_node(a.shape()));
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.node()->value.data();
    for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < block; ++i) ov[r * block + i] = av[r * block + i] * bv[i];
    auto a_node = a.node();
    auto b_node = b.node();
    auto o_node = out.node().get();
    record(out, {a, b}, [a_node, b_node, o_node, reps, block]() {
        const double* g = o_node->grad.data();
        for (std::size_t r = 0; r < reps; ++r)
            for (std::size_t i = 0; i < block; ++i) {
                if (a_node->requires_grad)
                    a_node->accumulate(r * block + i, g[r * block + i] * b_node->value[i]);
                if (b_node->requires_grad)
                    b_node->accumulate(i, g[r * block + i] * a_node->value[r * block + i]);
            }
    });
    return out;
}

Tensor stack_last(const Tensor& x, const Tensor& y) {
    check_same_shape(x, y, "stack_last");
    std::vector<int> shape = x.shape();
    shape.push_back(2);
    Tensor out(make_node(std::move(shape)));
    const std::size_t n = x.numel();
    const double* xv = x.values().data();
    const double* yv = y.values().data();
    double* ov = out.node()->value.data();
    for (std::size_t i = 0; i < n; ++i) {
        ov[i * 2 + 0] = xv[i];
        ov[i * 2 + 1] = yv[i];
    }
    auto x_node = x.node();
    auto y_node = y.node();
    auto o_node = out.node().get();
    record(out, {x, y}, [x_node, y_node, o_node, n]() {
        const double* g = o_node->grad.data();
        for (std::size_t i = 0; i < n; ++i) {
            if (x_node->requires_grad) x_node->accumulate(i, g[i * 2 + 0]);
            if (y_node->requires_grad) y_node->accumulate(i, g[i * 2 + 1]);
        }
    });
    return out;
}

}  // namespace cbw
