#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "grlb/common.hpp"
#include "grlb/rng.hpp"

namespace grlb {

class Tensor;

struct TensorNode {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // allocated on demand, same length as data
    bool requires_grad = false;
    bool is_leaf = true;
    bool backward_done = false;  // set on the loss root after backward()
    uint64_t seq = 0;            // creation order, used for reverse-topo walks
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward_fn;  // accumulates this->grad into parents

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }
};

// Dense float32 array with optional reverse-mode gradient tracking.
// Value-semantic handle onto a shared node; data is immutable once created
// except through the optimizer's explicit in-place update.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int> shape, bool requires_grad = false);
    Tensor(std::vector<int> shape, std::vector<float> data, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, Rng& rng, float stddev = 1.0f,
                        bool requires_grad = false);
    static Tensor from_node(std::shared_ptr<TensorNode> n);  // internal: op plumbing

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }

    std::span<const float> data() const { return node_->data; }
    std::span<float> mutable_data() { return node_->data; }
    std::span<const float> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    float value() const;  // scalar tensors only

    void zero_grad() { node_->grad.clear(); }

    std::shared_ptr<TensorNode> node() const { return node_; }

    // Reverse-mode pass from a scalar loss. Populates .grad on every
    // requires_grad leaf reachable from it; each node visited exactly once.
    // Calling twice on the same root without rebuilding the graph throws.
    void backward() const;

private:
    std::shared_ptr<TensorNode> node_;
};

// Disables graph recording in scope (inference / sampling).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_mode_enabled();

namespace ops {

// Elementwise / scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor abs(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, float lo, float hi);

// Reductions
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// Shape / layout
Tensor concat_channels(const std::vector<Tensor>& parts);  // NCHW, dim 1
Tensor crop2d(const Tensor& a, int r0, int r1, int c0, int c1);  // NCHW, H/W window
Tensor select_batch(const Tensor& a, int i);  // NCHW -> [1,C,H,W] view copy of example i

// NN
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);  // stride 1, zero pad, odd kernel
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // [N,F]x[F,G]+[G]
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups = 8);
Tensor add_channel(const Tensor& x, const Tensor& e);  // x:[N,C,H,W] + e:[N,C] broadcast over H,W
Tensor mul_channel(const Tensor& x, const Tensor& s);  // x:[N,C,H,W] * s:[N,C] broadcast over H,W
Tensor avg_pool2(const Tensor& x);                     // 2x2, stride 2
Tensor upsample2(const Tensor& x);                     // nearest, x2

}  // namespace ops

// Adam with bias correction. Moment tensors shape-match their parameters.
struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

class Adam {
public:
    Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg = {});

    // Applies one update from the .grad of each parameter, then clears grads.
    // Throws on non-finite gradients, naming the parameter.
    void step();

    int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    std::span<const float> moment1(size_t i) const { return m_[i]; }
    std::span<const float> moment2(size_t i) const { return v_[i]; }

    // Checkpoint plumbing.
    void set_state(int64_t step, std::vector<std::vector<float>> m, std::vector<std::vector<float>> v);
    const std::vector<std::vector<float>>& m() const { return m_; }
    const std::vector<std::vector<float>>& v() const { return v_; }

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::vector<float>> m_, v_;
    int64_t step_count_ = 0;
    AdamConfig cfg_;
};

// Central finite differences on randomly sampled parameter coordinates.
// float32 evaluation bounds the difference quotient's resolution at about
// eps32 * |loss| / (2h); coordinates where both the analytic and the FD
// gradient fall below that floor are skipped (the oracle is blind there;
// a deflated or inflated backward still lands above the floor on one side
// and gets checked). max_rel_err is taken over the checked coordinates.
struct GradCheckReport {
    double max_rel_err = 0.0;
    int coords_checked = 0;
    int coords_skipped = 0;
    bool pass = false;
};

GradCheckReport grad_check(std::vector<Tensor> params, const std::function<Tensor()>& loss_fn,
                           double tolerance, Rng& rng, int min_coords = 64, float h = 1e-3f);

}  // namespace grlb
