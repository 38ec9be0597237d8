#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace cbw {

class Tensor;

namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // lazily allocated, same length as value
    bool requires_grad = false;
    bool on_tape = false;
    std::function<void()> backprop;  // empty for leaves and detached results

    std::size_t numel() const { return value.size(); }
    double* grad_data();  // allocates zeros on demand
    void accumulate(std::size_t i, double g);
};

}  // namespace detail

// Ordered record of executed operations. Ops append themselves to the
// thread-local active tape; reverse replay visits each node exactly once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const { return nodes_.size(); }

    // Reverse accumulation from `loss` (rank-0, recorded on this tape).
    // Returns the number of nodes whose backward step ran.
    std::size_t backward(const Tensor& loss);

    void clear() { nodes_.clear(); }

    // Makes this tape the active recorder for the current thread.
    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* active();
    static void push_node(std::shared_ptr<detail::Node> node);

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Suspends recording within a scope; values still computed.
class NoGrad {
public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    Tape* previous_;
};

// Division-by-zero policy. Strict mode (default) throws on an exact zero
// denominator; otherwise denominators smaller than the guard epsilon are
// replaced by +/-epsilon.
void set_strict_div(bool strict);
bool strict_div();
void set_div_guard(double epsilon);
double div_guard();

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int rank() const;
    int dim(int axis) const;
    std::size_t numel() const;
    bool requires_grad() const;
    bool on_tape() const;

    double item() const;  // rank-0 only
    double at(std::size_t flat_index) const;
    const std::vector<double>& values() const;
    std::vector<double>& mutable_values();  // leaves only (optimizer updates)

    const std::vector<double>& grad() const;  // zeros if untouched
    void zero_grad();
    void set_requires_grad(bool flag);  // leaves only

    Tensor detach() const;

    // internal
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// ---- elementwise suite -----------------------------------------------------
// Binary ops require equal shapes or a rank-0 operand (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);
Tensor div(double a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);      // subgradient 0 at 0
Tensor square(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor elu(const Tensor& a);
Tensor min_with(const Tensor& a, double c);  // min(a, c)
Tensor max_with(const Tensor& a, double c);  // max(a, c)
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- reductions ------------------------------------------------------------
// Empty `axes` means reduce over all axes. Passing axes = {} explicitly via
// reduce_* with an empty vector and `all_axes=false` is rejected.
Tensor reduce_sum(const Tensor& a);
Tensor reduce_mean(const Tensor& a);
Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes);
Tensor reduce_mean(const Tensor& a, const std::vector<int>& axes);

// ---- structured ops --------------------------------------------------------
enum class PadMode { Zero, Reflect };

struct Padding {
    PadMode mode = PadMode::Zero;
    int size = 0;
};

// input [N,C,H,W], weight [F,C,kH,kW], bias [F] (or undefined for no bias).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, Padding padding);

struct GridSampleResult {
    Tensor values;     // [N,C,Hq,Wq]
    Tensor in_bounds;  // [N,Hq,Wq], detached {0,1}
};

// map [N,C,H,W], coords [N,Hq,Wq,2] in pixel units (x, y). Samples with any
// nonzero-weight neighbour outside [0,W-1]x[0,H-1] return 0 with in_bounds 0.
GridSampleResult grid_sample_bilinear(const Tensor& map, const Tensor& coords);

struct SpatialGradient {
    Tensor dx;
    Tensor dy;
};

// Forward differences along the trailing two axes; last column/row zero.
SpatialGradient spatial_gradient(const Tensor& map);

// Per-channel k x k box mean over the trailing two axes, reflection padded.
Tensor box_mean(const Tensor& a, int window);

// Trailing-two-axes resampling (any rank >= 2).
Tensor upsample_nearest2(const Tensor& a);
Tensor downsample_area2(const Tensor& a);  // requires even trailing extents

Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor index_scalar(const Tensor& a, std::size_t flat_index);  // rank-0 view
Tensor slice1d(const Tensor& a, int start, int len);
Tensor mul_trailing(const Tensor& a, const Tensor& b);  // b matches a's trailing shape
Tensor stack_last(const Tensor& x, const Tensor& y);  // [..] x2 -> [..,2]

// ---- backward --------------------------------------------------------------
// Runs reverse-mode accumulation on the active tape. `loss` must be rank-0
// and recorded; throws otherwise.
std::size_t backward(const Tensor& loss);

[[noreturn]] void fail(const std::string& message);

}  // namespace cbw
