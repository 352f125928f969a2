#include "grlb/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <unordered_set>

namespace grlb {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<uint64_t> g_next_seq{1};

bool finite_checks_enabled() {
    static const bool on = [] {
        const char* env = std::getenv("GRLB_CHECK_FINITE");
        return env != nullptr && env[0] != '0';
    }();
    return on;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

[[noreturn]] void shape_fail(const char* op, std::initializer_list<std::vector<int>> shapes) {
    std::ostringstream os;
    os << op << ": shape mismatch, got ";
    bool first = true;
    for (const auto& s : shapes) {
        if (!first) os << " vs ";
        os << shape_str(s);
        first = false;
    }
    throw ShapeError(os.str());
}

int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::shared_ptr<TensorNode> new_node(std::vector<int> shape) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data.resize(numel_of(n->shape));
    n->seq = g_next_seq.fetch_add(1);
    return n;
}

void check_finite(const char* op, const TensorNode& n) {
    if (!finite_checks_enabled()) return;
    for (float v : n.data) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << op << ": non-finite output value " << v;
            throw std::runtime_error(os.str());
        }
    }
}

// Marks `out` as produced by an op over `parents`; backward_fn may be empty
// when no parent needs gradients or grad mode is off.
void record(const std::shared_ptr<TensorNode>& out,
            std::vector<std::shared_ptr<TensorNode>> parents,
            std::function<void()> backward_fn) {
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p->requires_grad) {
                needs = true;
                break;
            }
        }
    }
    if (needs) {
        out->requires_grad = true;
        out->is_leaf = false;
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
}

void maybe_parallel(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n < 1 << 15) {
        fn(0, n);
    } else {
        parallel_for((n + 4095) / 4096, [&](int64_t b, int64_t e) {
            fn(b * 4096, std::min<int64_t>(n, e * 4096));
        });
    }
}

}  // namespace

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::from_node(std::shared_ptr<TensorNode> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

Tensor::Tensor(std::vector<int> shape, bool requires_grad) {
    node_ = new_node(std::move(shape));
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
        shape_fail("tensor", {shape, {static_cast<int>(data.size())}});
    node_ = new_node(std::move(shape));
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, float stddev, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    for (auto& v : t.node_->data) v = stddev * rng.normal();
    return t;
}

float Tensor::value() const {
    if (numel() != 1) throw ShapeError("value: tensor is not scalar, shape " + shape_str(shape()));
    return node_->data[0];
}

void Tensor::backward() const {
    if (!node_) throw std::runtime_error("backward: undefined tensor");
    if (numel() != 1) throw ShapeError("backward: loss is not scalar, shape " + shape_str(shape()));
    if (node_->backward_done)
        throw std::runtime_error("backward: called twice on the same graph root");
    if (node_->is_leaf && !node_->backward_fn)
        throw std::runtime_error("backward: empty graph (loss is a leaf)");

    // Iterative DFS postorder: parents land before children, so the reversed
    // list is a valid reverse-topological visit order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode* p = n->parents[idx++].get();
            if (!seen.count(p) && !p->parents.empty()) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
    node_->backward_done = true;
}

namespace ops {

namespace {

// Shared plumbing for same-shape binary ops.
void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail(op, {a.shape(), b.shape()});
}

void accumulate(TensorNode* dst, const float* src, int64_t n) {
    dst->ensure_grad();
    float* g = dst->grad.data();
    for (int64_t i = 0; i < n; ++i) g[i] += src[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out->data.data();
    maybe_parallel(n, [&](int64_t s, int64_t e) {
        for (int64_t i = s; i < e; ++i) po[i] = pa[i] + pb[i];
    });
    check_finite("add", *out);
    TensorNode* o = out.get();
    record(out, {a.node(), b.node()}, [o] {
        const int64_t n = o->numel();
        for (auto& p : o->parents)
            if (p->requires_grad) accumulate(p.get(), o->grad.data(), n);
    });
    return Tensor::from_node(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out->data.data();
    maybe_parallel(n, [&](int64_t s, int64_t e) {
        for (int64_t i = s; i < e; ++i) po[i] = pa[i] - pb[i];
    });
    check_finite("sub", *out);
    TensorNode* o = out.get();
    record(out, {a.node(), b.node()}, [o] {
        const int64_t n = o->numel();
        auto& pa = o->parents[0];
        auto& pb = o->parents[1];
        if (pa->requires_grad) accumulate(pa.get(), o->grad.data(), n);
        if (pb->requires_grad) {
            pb->ensure_grad();
            float* g = pb->grad.data();
            const float* go = o->grad.data();
            for (int64_t i = 0; i < n; ++i) g[i] -= go[i];
        }
    });
    return Tensor::from_node(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out->data.data();
    maybe_parallel(n, [&](int64_t s, int64_t e) {
        for (int64_t i = s; i < e; ++i) po[i] = pa[i] * pb[i];
    });
    check_finite("mul", *out);
    TensorNode* o = out.get();
    record(out, {a.node(), b.node()}, [o] {
        const int64_t n = o->numel();
        auto& pa = o->parents[0];
        auto& pb = o->parents[1];
        const float* go = o->grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            float* g = pa->grad.data();
            const float* vb = pb->data.data();
            for (int64_t i = 0; i < n; ++i) g[i] += go[i] * vb[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            float* g = pb->grad.data();
            const float* va = pa->data.data();
            for (int64_t i = 0; i < n; ++i) g[i] += go[i] * va[i];
        }
    });
    return Tensor::from_node(out);
}

Tensor add_scalar(const Tensor& a, float s) {
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    float* po = out->data.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + s;
    check_finite("add_scalar", *out);
    TensorNode* o = out.get();
    record(out, {a.node()}, [o] {
        accumulate(o->parents[0].get(), o->grad.data(), o->numel());
    });
    return Tensor::from_node(out);
}

Tensor mul_scalar(const Tensor& a, float s) {
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    float* po = out->data.data();
    maybe_parallel(n, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) po[i] = pa[i] * s;
    });
    check_finite("mul_scalar", *out);
    TensorNode* o = out.get();
    record(out, {a.node()}, [o, s] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        const int64_t n = o->numel();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i] * s;
    });
    return Tensor::from_node(out);
}

Tensor abs(const Tensor& a) {
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    float* po = out->data.data();
    for (int64_t i = 0; i < n; ++i) po[i] = std::fabs(pa[i]);
    TensorNode* o = out.get();
    // Subgradient convention at ties: sign(0) = 0.
    record(out, {a.node()}, [o] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        const float* v = p->data.data();
        const int64_t n = o->numel();
        for (int64_t i = 0; i < n; ++i)
            g[i] += go[i] * (v[i] > 0.0f ? 1.0f : (v[i] < 0.0f ? -1.0f : 0.0f));
    });
    return Tensor::from_node(out);
}

Tensor sigmoid(const Tensor& a) {
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    float* po = out->data.data();
    for (int64_t i = 0; i < n; ++i) po[i] = 1.0f / (1.0f + std::exp(-pa[i]));
    check_finite("sigmoid", *out);
    TensorNode* o = out.get();
    record(out, {a.node()}, [o] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        const float* y = o->data.data();
        const int64_t n = o->numel();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i] * y[i] * (1.0f - y[i]);
    });
    return Tensor::from_node(out);
}

Tensor silu(const Tensor& a) {
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    float* po = out->data.data();
    maybe_parallel(n, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            float s = 1.0f / (1.0f + std::exp(-pa[i]));
            po[i] = pa[i] * s;
        }
    });
    check_finite("silu", *out);
    TensorNode* o = out.get();
    record(out, {a.node()}, [o] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        const float* x = p->data.data();
        const int64_t n = o->numel();
        maybe_parallel(n, [&](int64_t b, int64_t e) {
            for (int64_t i = b; i < e; ++i) {
                float s = 1.0f / (1.0f + std::exp(-x[i]));
                g[i] += go[i] * s * (1.0f + x[i] * (1.0f - s));
            }
        });
    });
    return Tensor::from_node(out);
}

Tensor log(const Tensor& a) {
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    float* po = out->data.data();
    for (int64_t i = 0; i < n; ++i) po[i] = std::log(pa[i]);
    check_finite("log", *out);
    TensorNode* o = out.get();
    record(out, {a.node()}, [o] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        const float* x = p->data.data();
        const int64_t n = o->numel();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i] / x[i];
    });
    return Tensor::from_node(out);
}

Tensor clamp(const Tensor& a, float lo, float hi) {
    auto out = new_node(a.shape());
    const int64_t n = out->numel();
    const float* pa = a.data().data();
    float* po = out->data.data();
    for (int64_t i = 0; i < n; ++i) po[i] = std::min(hi, std::max(lo, pa[i]));
    TensorNode* o = out.get();
    record(out, {a.node()}, [o, lo, hi] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        const float* x = p->data.data();
        const int64_t n = o->numel();
        for (int64_t i = 0; i < n; ++i)
            if (x[i] >= lo && x[i] <= hi) g[i] += go[i];
    });
    return Tensor::from_node(out);
}

Tensor mean(const Tensor& a) {
    auto out = new_node({1});
    const int64_t n = a.numel();
    const float* pa = a.data().data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += pa[i];
    out->data[0] = static_cast<float>(acc / static_cast<double>(n));
    check_finite("mean", *out);
    TensorNode* o = out.get();
    record(out, {a.node()}, [o, n] {
        auto& p = o->parents[0];
        p->ensure_grad();
        const float s = o->grad[0] / static_cast<float>(n);
        float* g = p->grad.data();
        for (int64_t i = 0; i < n; ++i) g[i] += s;
    });
    return Tensor::from_node(out);
}

Tensor sum(const Tensor& a) {
    auto out = new_node({1});
    const int64_t n = a.numel();
    const float* pa = a.data().data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += pa[i];
    out->data[0] = static_cast<float>(acc);
    check_finite("sum", *out);
    TensorNode* o = out.get();
    record(out, {a.node()}, [o, n] {
        auto& p = o->parents[0];
        p->ensure_grad();
        const float s = o->grad[0];
        float* g = p->grad.data();
        for (int64_t i = 0; i < n; ++i) g[i] += s;
    });
    return Tensor::from_node(out);
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape("mse", a, b);
    auto out = new_node({1});
    const int64_t n = a.numel();
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        acc += d * d;
    }
    out->data[0] = static_cast<float>(acc / static_cast<double>(n));
    check_finite("mse", *out);
    TensorNode* o = out.get();
    record(out, {a.node(), b.node()}, [o, n] {
        auto& pa = o->parents[0];
        auto& pb = o->parents[1];
        const float s = 2.0f * o->grad[0] / static_cast<float>(n);
        const float* va = pa->data.data();
        const float* vb = pb->data.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            float* g = pa->grad.data();
            maybe_parallel(n, [&](int64_t lo, int64_t hi) {
                for (int64_t i = lo; i < hi; ++i) g[i] += s * (va[i] - vb[i]);
            });
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            float* g = pb->grad.data();
            maybe_parallel(n, [&](int64_t lo, int64_t hi) {
                for (int64_t i = lo; i < hi; ++i) g[i] -= s * (va[i] - vb[i]);
            });
        }
    });
    return Tensor::from_node(out);
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const auto& s0 = parts[0].shape();
    if (s0.size() != 4) shape_fail("concat_channels", {s0});
    int ctotal = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
            shape_fail("concat_channels", {s0, s});
        ctotal += s[1];
    }
    auto out = new_node({s0[0], ctotal, s0[2], s0[3]});
    const int64_t hw = static_cast<int64_t>(s0[2]) * s0[3];
    const int N = s0[0];
    float* po = out->data.data();
    for (int nidx = 0; nidx < N; ++nidx) {
        int64_t coff = 0;
        for (const auto& p : parts) {
            const int c = p.shape()[1];
            const float* src = p.data().data() + static_cast<int64_t>(nidx) * c * hw;
            std::copy(src, src + c * hw, po + (static_cast<int64_t>(nidx) * ctotal + coff) * hw);
            coff += c;
        }
    }
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const auto& p : parts) parents.push_back(p.node());
    TensorNode* o = out.get();
    record(out, std::move(parents), [o, hw, N, ctotal] {
        const float* go = o->grad.data();
        int64_t coff = 0;
        for (auto& p : o->parents) {
            const int c = p->shape[1];
            if (p->requires_grad) {
                p->ensure_grad();
                float* g = p->grad.data();
                for (int nidx = 0; nidx < N; ++nidx) {
                    const float* src = go + (static_cast<int64_t>(nidx) * ctotal + coff) * hw;
                    float* dst = g + static_cast<int64_t>(nidx) * c * hw;
                    for (int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                }
            }
            coff += c;
        }
    });
    return Tensor::from_node(out);
}

Tensor crop2d(const Tensor& a, int r0, int r1, int c0, int c1) {
    const auto& s = a.shape();
    if (s.size() != 4) shape_fail("crop2d", {s});
    const int H = s[2], W = s[3];
    if (r0 < 0 || c0 < 0 || r1 > H || c1 > W || r0 >= r1 || c0 >= c1)
        throw ShapeError("crop2d: window out of range for shape " + shape_str(s));
    const int oh = r1 - r0, ow = c1 - c0;
    auto out = new_node({s[0], s[1], oh, ow});
    const int64_t planes = static_cast<int64_t>(s[0]) * s[1];
    const float* pa = a.data().data();
    float* po = out->data.data();
    for (int64_t p = 0; p < planes; ++p) {
        const float* src = pa + p * H * W;
        float* dst = po + p * oh * ow;
        for (int r = 0; r < oh; ++r)
            std::copy(src + (r0 + r) * W + c0, src + (r0 + r) * W + c1, dst + r * ow);
    }
    TensorNode* o = out.get();
    record(out, {a.node()}, [o, r0, c0, H, W, oh, ow, planes] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        for (int64_t pl = 0; pl < planes; ++pl) {
            float* dst = g + pl * H * W;
            const float* src = go + pl * oh * ow;
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c) dst[(r0 + r) * W + c0 + c] += src[r * ow + c];
        }
    });
    return Tensor::from_node(out);
}

Tensor select_batch(const Tensor& a, int i) {
    const auto& s = a.shape();
    if (s.size() != 4 || i < 0 || i >= s[0]) shape_fail("select_batch", {s, {i}});
    const int64_t plane = static_cast<int64_t>(s[1]) * s[2] * s[3];
    auto out = new_node({1, s[1], s[2], s[3]});
    const float* src = a.data().data() + static_cast<int64_t>(i) * plane;
    std::copy(src, src + plane, out->data.begin());
    TensorNode* o = out.get();
    record(out, {a.node()}, [o, i, plane] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data() + static_cast<int64_t>(i) * plane;
        const float* go = o->grad.data();
        for (int64_t k = 0; k < plane; ++k) g[k] += go[k];
    });
    return Tensor::from_node(out);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1]) shape_fail("conv2d", {xs, ws});
    const int K = ws[2];
    if (ws[3] != K || K % 2 == 0) shape_fail("conv2d", {ws});
    if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != ws[0]))
        shape_fail("conv2d", {ws, b.shape()});
    const int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3], Cout = ws[0], P = K / 2;
    auto out = new_node({N, Cout, H, W});
    const int64_t hw = static_cast<int64_t>(H) * W;
    const float* px = x.data().data();
    const float* pw = w.data().data();
    const float* pb = b.defined() ? b.data().data() : nullptr;
    float* po = out->data.data();

    parallel_for(static_cast<int64_t>(N) * Cout, [&](int64_t lo, int64_t hi) {
        for (int64_t t = lo; t < hi; ++t) {
            const int n = static_cast<int>(t / Cout);
            const int co = static_cast<int>(t % Cout);
            float* o = po + t * hw;
            const float bias = pb ? pb[co] : 0.0f;
            std::fill(o, o + hw, bias);
            for (int ci = 0; ci < Cin; ++ci) {
                const float* xin = px + (static_cast<int64_t>(n) * Cin + ci) * hw;
                const float* wk = pw + ((static_cast<int64_t>(co) * Cin + ci) * K) * K;
                for (int kh = 0; kh < K; ++kh) {
                    const int dy = kh - P;
                    const int h0 = std::max(0, -dy), h1 = std::min(H, H - dy);
                    for (int kw = 0; kw < K; ++kw) {
                        const int dx = kw - P;
                        const int w0 = std::max(0, -dx), w1 = std::min(W, W - dx);
                        const float wv = wk[kh * K + kw];
                        if (wv == 0.0f) continue;
                        for (int h = h0; h < h1; ++h) {
                            const float* xr = xin + static_cast<int64_t>(h + dy) * W + dx;
                            float* orow = o + static_cast<int64_t>(h) * W;
                            for (int c = w0; c < w1; ++c) orow[c] += wv * xr[c];
                        }
                    }
                }
            }
        }
    });
    check_finite("conv2d", *out);

    TensorNode* o = out.get();
    auto parents = b.defined()
                       ? std::vector<std::shared_ptr<TensorNode>>{x.node(), w.node(), b.node()}
                       : std::vector<std::shared_ptr<TensorNode>>{x.node(), w.node()};
    record(out, std::move(parents), [o, N, Cin, Cout, H, W, K, P, hw] {
        auto& xp = o->parents[0];
        auto& wp = o->parents[1];
        const float* go = o->grad.data();
        const float* px = xp->data.data();
        const float* pw = wp->data.data();

        if (xp->requires_grad) {
            xp->ensure_grad();
            float* gx = xp->grad.data();
            parallel_for(static_cast<int64_t>(N) * Cin, [&](int64_t lo, int64_t hi) {
                for (int64_t t = lo; t < hi; ++t) {
                    const int n = static_cast<int>(t / Cin);
                    const int ci = static_cast<int>(t % Cin);
                    float* g = gx + t * hw;
                    for (int co = 0; co < Cout; ++co) {
                        const float* gout = go + (static_cast<int64_t>(n) * Cout + co) * hw;
                        const float* wk = pw + ((static_cast<int64_t>(co) * Cin + ci) * K) * K;
                        for (int kh = 0; kh < K; ++kh) {
                            const int dy = P - kh;  // transposed kernel offset
                            const int h0 = std::max(0, -dy), h1 = std::min(H, H - dy);
                            for (int kw = 0; kw < K; ++kw) {
                                const int dx = P - kw;
                                const int w0 = std::max(0, -dx), w1 = std::min(W, W - dx);
                                const float wv = wk[kh * K + kw];
                                if (wv == 0.0f) continue;
                                for (int h = h0; h < h1; ++h) {
                                    const float* gr = gout + static_cast<int64_t>(h + dy) * W + dx;
                                    float* grow = g + static_cast<int64_t>(h) * W;
                                    for (int c = w0; c < w1; ++c) grow[c] += wv * gr[c];
                                }
                            }
                        }
                    }
                }
            });
        }

        if (wp->requires_grad) {
            wp->ensure_grad();
            float* gw = wp->grad.data();
            parallel_for(Cout, [&](int64_t lo, int64_t hi) {
                for (int64_t co = lo; co < hi; ++co) {
                    for (int ci = 0; ci < Cin; ++ci) {
                        float* gk = gw + ((co * Cin + ci) * K) * K;
                        for (int kh = 0; kh < K; ++kh) {
                            const int dy = kh - P;
                            const int h0 = std::max(0, -dy), h1 = std::min(H, H - dy);
                            for (int kw = 0; kw < K; ++kw) {
                                const int dx = kw - P;
                                const int w0 = std::max(0, -dx), w1 = std::min(W, W - dx);
                                double acc = 0.0;
                                for (int n = 0; n < N; ++n) {
                                    const float* gout = go + (static_cast<int64_t>(n) * Cout + co) * hw;
                                    const float* xin = px + (static_cast<int64_t>(n) * Cin + ci) * hw;
                                    for (int h = h0; h < h1; ++h) {
                                        const float* gr = gout + static_cast<int64_t>(h) * W;
                                        const float* xr = xin + static_cast<int64_t>(h + dy) * W + dx;
                                        float rowacc = 0.0f;
                                        for (int c = w0; c < w1; ++c) rowacc += gr[c] * xr[c];
                                        acc += rowacc;
                                    }
                                }
                                gk[kh * K + kw] += static_cast<float>(acc);
                            }
                        }
                    }
                }
            });
        }

        if (o->parents.size() > 2 && o->parents[2]->requires_grad) {
            auto& bp = o->parents[2];
            bp->ensure_grad();
            float* gb = bp->grad.data();
            for (int co = 0; co < Cout; ++co) {
                double acc = 0.0;
                for (int n = 0; n < N; ++n) {
                    const float* gout = go + (static_cast<int64_t>(n) * Cout + co) * hw;
                    for (int64_t i = 0; i < hw; ++i) acc += gout[i];
                }
                gb[co] += static_cast<float>(acc);
            }
        }
    });
    return Tensor::from_node(out);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0]) shape_fail("linear", {xs, ws});
    const int N = xs[0], F = xs[1], G = ws[1];
    if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != G))
        shape_fail("linear", {ws, b.shape()});
    auto out = new_node({N, G});
    const float* px = x.data().data();
    const float* pw = w.data().data();
    const float* pb = b.defined() ? b.data().data() : nullptr;
    float* po = out->data.data();
    for (int n = 0; n < N; ++n) {
        float* orow = po + static_cast<int64_t>(n) * G;
        if (pb)
            std::copy(pb, pb + G, orow);
        else
            std::fill(orow, orow + G, 0.0f);
        const float* xrow = px + static_cast<int64_t>(n) * F;
        for (int i = 0; i < F; ++i) {
            const float xv = xrow[i];
            const float* wrow = pw + static_cast<int64_t>(i) * G;
            for (int j = 0; j < G; ++j) orow[j] += xv * wrow[j];
        }
    }
    check_finite("linear", *out);
    TensorNode* o = out.get();
    auto parents = b.defined()
                       ? std::vector<std::shared_ptr<TensorNode>>{x.node(), w.node(), b.node()}
                       : std::vector<std::shared_ptr<TensorNode>>{x.node(), w.node()};
    record(out, std::move(parents), [o, N, F, G] {
        auto& xp = o->parents[0];
        auto& wp = o->parents[1];
        const float* go = o->grad.data();
        if (xp->requires_grad) {
            xp->ensure_grad();
            float* gx = xp->grad.data();
            const float* pw = wp->data.data();
            for (int n = 0; n < N; ++n) {
                const float* grow = go + static_cast<int64_t>(n) * G;
                float* gxrow = gx + static_cast<int64_t>(n) * F;
                for (int i = 0; i < F; ++i) {
                    const float* wrow = pw + static_cast<int64_t>(i) * G;
                    float acc = 0.0f;
                    for (int j = 0; j < G; ++j) acc += grow[j] * wrow[j];
                    gxrow[i] += acc;
                }
            }
        }
        if (wp->requires_grad) {
            wp->ensure_grad();
            float* gw = wp->grad.data();
            const float* px = xp->data.data();
            for (int n = 0; n < N; ++n) {
                const float* grow = go + static_cast<int64_t>(n) * G;
                const float* xrow = px + static_cast<int64_t>(n) * F;
                for (int i = 0; i < F; ++i) {
                    float* gwrow = gw + static_cast<int64_t>(i) * G;
                    const float xv = xrow[i];
                    for (int j = 0; j < G; ++j) gwrow[j] += xv * grow[j];
                }
            }
        }
        if (o->parents.size() > 2 && o->parents[2]->requires_grad) {
            auto& bp = o->parents[2];
            bp->ensure_grad();
            float* gb = bp->grad.data();
            for (int n = 0; n < N; ++n) {
                const float* grow = go + static_cast<int64_t>(n) * G;
                for (int j = 0; j < G; ++j) gb[j] += grow[j];
            }
        }
    });
    return Tensor::from_node(out);
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups) {
    const auto& s = x.shape();
    if (s.size() != 4) shape_fail("group_norm", {s});
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    if (C % groups != 0) throw ShapeError("group_norm: channels " + std::to_string(C) +
                                          " not divisible by groups " + std::to_string(groups));
    if (gamma.shape() != std::vector<int>{C} || beta.shape() != std::vector<int>{C})
        shape_fail("group_norm", {s, gamma.shape(), beta.shape()});
    constexpr float kEps = 1e-5f;
    const int cg = C / groups;
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int64_t m = cg * hw;

    auto out = new_node(s);
    auto xhat = std::make_shared<std::vector<float>>(x.numel());
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(N) * groups);
    const float* px = x.data().data();
    const float* pg = gamma.data().data();
    const float* pbeta = beta.data().data();
    float* po = out->data.data();
    float* ph = xhat->data();

    parallel_for(static_cast<int64_t>(N) * groups, [&](int64_t lo, int64_t hi) {
        for (int64_t t = lo; t < hi; ++t) {
            const int64_t base = t * m;
            double sum = 0.0, sq = 0.0;
            for (int64_t i = 0; i < m; ++i) {
                const double v = px[base + i];
                sum += v;
                sq += v * v;
            }
            const double mu = sum / static_cast<double>(m);
            const double var = std::max(0.0, sq / static_cast<double>(m) - mu * mu);
            const float is = static_cast<float>(1.0 / std::sqrt(var + kEps));
            (*inv_std)[t] = is;
            const int cbase = static_cast<int>(t % groups) * cg;
            for (int c = 0; c < cg; ++c) {
                const float gm = pg[cbase + c];
                const float bt = pbeta[cbase + c];
                const int64_t off = base + c * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    const float h = (px[off + i] - static_cast<float>(mu)) * is;
                    ph[off + i] = h;
                    po[off + i] = gm * h + bt;
                }
            }
        }
    });
    check_finite("group_norm", *out);

    TensorNode* o = out.get();
    record(out, {x.node(), gamma.node(), beta.node()},
           [o, xhat, inv_std, N, C, H, W, groups, cg, hw, m] {
               auto& xp = o->parents[0];
               auto& gp = o->parents[1];
               auto& bp = o->parents[2];
               const float* go = o->grad.data();
               const float* ph = xhat->data();
               const float* pg = gp->data.data();

               if (gp->requires_grad || bp->requires_grad) {
                   gp->ensure_grad();
                   bp->ensure_grad();
                   float* gg = gp->grad.data();
                   float* gb = bp->grad.data();
                   for (int c = 0; c < C; ++c) {
                       double ag = 0.0, ab = 0.0;
                       for (int n = 0; n < N; ++n) {
                           const int64_t off = (static_cast<int64_t>(n) * C + c) * hw;
                           for (int64_t i = 0; i < hw; ++i) {
                               ag += static_cast<double>(go[off + i]) * ph[off + i];
                               ab += go[off + i];
                           }
                       }
                       gg[c] += static_cast<float>(ag);
                       gb[c] += static_cast<float>(ab);
                   }
               }

               if (xp->requires_grad) {
                   xp->ensure_grad();
                   float* gx = xp->grad.data();
                   parallel_for(static_cast<int64_t>(N) * groups, [&](int64_t lo, int64_t hi) {
                       for (int64_t t = lo; t < hi; ++t) {
                           const int64_t base = t * m;
                           const int cbase = static_cast<int>(t % groups) * cg;
                           const float is = (*inv_std)[t];
                           double sum_d = 0.0, sum_dh = 0.0;
                           for (int c = 0; c < cg; ++c) {
                               const float gm = pg[cbase + c];
                               const int64_t off = base + c * hw;
                               for (int64_t i = 0; i < hw; ++i) {
                                   const double d = static_cast<double>(go[off + i]) * gm;
                                   sum_d += d;
                                   sum_dh += d * ph[off + i];
                               }
                           }
                           const float mean_d = static_cast<float>(sum_d / static_cast<double>(m));
                           const float mean_dh = static_cast<float>(sum_dh / static_cast<double>(m));
                           for (int c = 0; c < cg; ++c) {
                               const float gm = pg[cbase + c];
                               const int64_t off = base + c * hw;
                               for (int64_t i = 0; i < hw; ++i) {
                                   const float d = go[off + i] * gm;
                                   gx[off + i] += is * (d - mean_d - ph[off + i] * mean_dh);
                               }
                           }
                       }
                   });
               }
           });
    return Tensor::from_node(out);
}

Tensor add_channel(const Tensor& x, const Tensor& e) {
    const auto& xs = x.shape();
    const auto& es = e.shape();
    if (xs.size() != 4 || es.size() != 2 || es[0] != xs[0] || es[1] != xs[1])
        shape_fail("add_channel", {xs, es});
    const int64_t hw = static_cast<int64_t>(xs[2]) * xs[3];
    const int64_t nc = static_cast<int64_t>(xs[0]) * xs[1];
    auto out = new_node(xs);
    const float* px = x.data().data();
    const float* pe = e.data().data();
    float* po = out->data.data();
    for (int64_t t = 0; t < nc; ++t) {
        const float ev = pe[t];
        const float* xr = px + t * hw;
        float* orow = po + t * hw;
        for (int64_t i = 0; i < hw; ++i) orow[i] = xr[i] + ev;
    }
    check_finite("add_channel", *out);
    TensorNode* o = out.get();
    record(out, {x.node(), e.node()}, [o, nc, hw] {
        auto& xp = o->parents[0];
        auto& ep = o->parents[1];
        const float* go = o->grad.data();
        if (xp->requires_grad) accumulate(xp.get(), go, nc * hw);
        if (ep->requires_grad) {
            ep->ensure_grad();
            float* g = ep->grad.data();
            for (int64_t t = 0; t < nc; ++t) {
                double acc = 0.0;
                const float* gr = go + t * hw;
                for (int64_t i = 0; i < hw; ++i) acc += gr[i];
                g[t] += static_cast<float>(acc);
            }
        }
    });
    return Tensor::from_node(out);
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
    const auto& xs = x.shape();
    const auto& ss = s.shape();
    if (xs.size() != 4 || ss.size() != 2 || ss[0] != xs[0] || ss[1] != xs[1])
        shape_fail("mul_channel", {xs, ss});
    const int64_t hw = static_cast<int64_t>(xs[2]) * xs[3];
    const int64_t nc = static_cast<int64_t>(xs[0]) * xs[1];
    auto out = new_node(xs);
    const float* px = x.data().data();
    const float* ps = s.data().data();
    float* po = out->data.data();
    for (int64_t t = 0; t < nc; ++t) {
        const float sv = ps[t];
        const float* xr = px + t * hw;
        float* orow = po + t * hw;
        for (int64_t i = 0; i < hw; ++i) orow[i] = xr[i] * sv;
    }
    check_finite("mul_channel", *out);
    TensorNode* o = out.get();
    record(out, {x.node(), s.node()}, [o, nc, hw] {
        auto& xp = o->parents[0];
        auto& sp = o->parents[1];
        const float* go = o->grad.data();
        if (xp->requires_grad) {
            xp->ensure_grad();
            float* g = xp->grad.data();
            const float* ps = sp->data.data();
            for (int64_t t = 0; t < nc; ++t) {
                const float sv = ps[t];
                const float* gr = go + t * hw;
                float* grow = g + t * hw;
                for (int64_t i = 0; i < hw; ++i) grow[i] += gr[i] * sv;
            }
        }
        if (sp->requires_grad) {
            sp->ensure_grad();
            float* g = sp->grad.data();
            const float* px = xp->data.data();
            for (int64_t t = 0; t < nc; ++t) {
                double acc = 0.0;
                const float* gr = go + t * hw;
                const float* xr = px + t * hw;
                for (int64_t i = 0; i < hw; ++i) acc += static_cast<double>(gr[i]) * xr[i];
                g[t] += static_cast<float>(acc);
            }
        }
    });
    return Tensor::from_node(out);
}

Tensor avg_pool2(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0) shape_fail("avg_pool2", {s});
    const int H = s[2], W = s[3], OH = H / 2, OW = W / 2;
    const int64_t planes = static_cast<int64_t>(s[0]) * s[1];
    auto out = new_node({s[0], s[1], OH, OW});
    const float* px = x.data().data();
    float* po = out->data.data();
    for (int64_t p = 0; p < planes; ++p) {
        const float* xin = px + p * H * W;
        float* o = po + p * OH * OW;
        for (int r = 0; r < OH; ++r)
            for (int c = 0; c < OW; ++c)
                o[r * OW + c] = 0.25f * (xin[(2 * r) * W + 2 * c] + xin[(2 * r) * W + 2 * c + 1] +
                                         xin[(2 * r + 1) * W + 2 * c] + xin[(2 * r + 1) * W + 2 * c + 1]);
    }
    TensorNode* o = out.get();
    record(out, {x.node()}, [o, planes, H, W, OH, OW] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        for (int64_t pl = 0; pl < planes; ++pl) {
            float* gin = g + pl * H * W;
            const float* gout = go + pl * OH * OW;
            for (int r = 0; r < OH; ++r)
                for (int c = 0; c < OW; ++c) {
                    const float v = 0.25f * gout[r * OW + c];
                    gin[(2 * r) * W + 2 * c] += v;
                    gin[(2 * r) * W + 2 * c + 1] += v;
                    gin[(2 * r + 1) * W + 2 * c] += v;
                    gin[(2 * r + 1) * W + 2 * c + 1] += v;
                }
        }
    });
    return Tensor::from_node(out);
}

Tensor upsample2(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() != 4) shape_fail("upsample2", {s});
    const int H = s[2], W = s[3], OH = H * 2, OW = W * 2;
    const int64_t planes = static_cast<int64_t>(s[0]) * s[1];
    auto out = new_node({s[0], s[1], OH, OW});
    const float* px = x.data().data();
    float* po = out->data.data();
    for (int64_t p = 0; p < planes; ++p) {
        const float* xin = px + p * H * W;
        float* o = po + p * OH * OW;
        for (int r = 0; r < OH; ++r) {
            const float* xr = xin + (r / 2) * W;
            float* orow = o + static_cast<int64_t>(r) * OW;
            for (int c = 0; c < OW; ++c) orow[c] = xr[c / 2];
        }
    }
    TensorNode* o = out.get();
    record(out, {x.node()}, [o, planes, H, W, OH, OW] {
        auto& p = o->parents[0];
        p->ensure_grad();
        float* g = p->grad.data();
        const float* go = o->grad.data();
        for (int64_t pl = 0; pl < planes; ++pl) {
            float* gin = g + pl * H * W;
            const float* gout = go + pl * OH * OW;
            for (int r = 0; r < OH; ++r) {
                float* gr = gin + (r / 2) * W;
                const float* gorow = gout + static_cast<int64_t>(r) * OW;
                for (int c = 0; c < OW; ++c) gr[c / 2] += gorow[c];
            }
        }
    });
    return Tensor::from_node(out);
}

}  // namespace ops

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, p] : params_) {
        m_.emplace_back(p.numel(), 0.0f);
        v_.emplace_back(p.numel(), 0.0f);
    }
}

void Adam::step() {
    step_count_++;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& [name, p] = params_[i];
        auto node = p.node();
        if (node->grad.empty()) continue;  // no gradient flowed: parameter frozen this step
        float* w = node->data.data();
        const float* g = node->grad.data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        const int64_t n = node->numel();
        for (int64_t j = 0; j < n; ++j) {
            if (!std::isfinite(g[j]))
                throw std::runtime_error("adam_step: non-finite gradient in parameter '" + name + "'");
            m[j] = cfg_.beta1 * m[j] + (1.0f - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0f - cfg_.beta2) * g[j] * g[j];
            const float mhat = m[j] / static_cast<float>(bc1);
            const float vhat = v[j] / static_cast<float>(bc2);
            w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        node->grad.clear();
    }
}

void Adam::set_state(int64_t step, std::vector<std::vector<float>> m,
                     std::vector<std::vector<float>> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
        throw DataError("adam: optimizer state does not match parameter list");
    for (size_t i = 0; i < params_.size(); ++i)
        if (static_cast<int64_t>(m[i].size()) != params_[i].second.numel() ||
            static_cast<int64_t>(v[i].size()) != params_[i].second.numel())
            throw DataError("adam: moment shape mismatch for '" + params_[i].first + "'");
    step_count_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

GradCheckReport grad_check(std::vector<Tensor> params, const std::function<Tensor()>& loss_fn,
                           double tolerance, Rng& rng, int min_coords, float h) {
    // Analytic gradients once.
    for (auto& p : params) p.zero_grad();
    Tensor loss = loss_fn();
    loss.backward();
    std::vector<std::vector<float>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        if (p.has_grad())
            analytic.emplace_back(p.grad().begin(), p.grad().end());
        else
            analytic.emplace_back(p.numel(), 0.0f);
    }

    int64_t total = 0;
    for (auto& p : params) total += p.numel();
    const int want = static_cast<int>(std::min<int64_t>(total, min_coords));

    // Resolution floor: below this magnitude the float32 difference
    // quotient is indistinguishable from rounding noise at the requested
    // tolerance.
    constexpr double kEps32 = 6e-8;
    constexpr double kNoiseFactor = 6.0;
    const double loss_scale = std::max(1e-6, std::abs(static_cast<double>(loss.value())));
    const double noise = kNoiseFactor * kEps32 * loss_scale / (2.0 * h);
    const double floor = noise / (2.0 * tolerance);

    GradCheckReport rep;
    NoGradGuard ng;
    const int max_attempts = 40 * want;
    for (int k = 0; k < max_attempts && rep.coords_checked < want; ++k) {
        // Pick a coordinate uniformly over all parameters.
        int64_t flat = rng.uniform_int(0, total - 1);
        size_t pi = 0;
        while (flat >= params[pi].numel()) {
            flat -= params[pi].numel();
            pi++;
        }
        float* slot = params[pi].mutable_data().data() + flat;
        const float orig = *slot;
        *slot = orig + h;
        const double fp = loss_fn().value();
        *slot = orig - h;
        const double fm = loss_fn().value();
        *slot = orig;
        const double fd = (fp - fm) / (2.0 * static_cast<double>(h));
        const double ad = analytic[pi][flat];
        if (std::abs(ad) < floor && std::abs(fd) < floor) {
            rep.coords_skipped++;
            continue;
        }
        const double rel = std::abs(ad - fd) / (std::abs(ad) + std::abs(fd) + 1e-8);
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        rep.coords_checked++;
    }
    rep.pass = rep.max_rel_err < tolerance;
    return rep;
}

}  // namespace grlb
