#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace lapose {

// Small reverse-mode autodiff over float32 matrices. Every tensor is a 2-D
// array (rows x cols); sequences and grids are handled as rows. The graph is
// rebuilt per forward pass; calling backward() on a scalar accumulates
// gradients into every reachable node with requires_grad set.
//
// Gradient recording is controlled by an RAII guard (NoGradGuard) so
// evaluation passes run pure forward with zero bookkeeping.

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<float> value;
    std::vector<float> grad; // allocated lazily on backward
    bool requires_grad = false;
    std::vector<TensorNodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    size_t size() const { return size_t(rows) * cols; }
    float* row(int r) { return value.data() + size_t(r) * cols; }
    const float* row(int r) const { return value.data() + size_t(r) * cols; }
    void ensure_grad();
};

class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols, bool requires_grad = false);
    explicit Tensor(TensorNodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(int rows, int cols);
    static Tensor from_data(int rows, int cols, const std::vector<float>& data);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    size_t size() const { return node_->size(); }
    std::vector<float>& data() { return node_->value; }
    const std::vector<float>& data() const { return node_->value; }
    std::vector<float>& grad() { return node_->grad; }
    const std::vector<float>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    TensorNodePtr node() const { return node_; }

    float scalar() const; // value of a 1x1 tensor

    // Runs reverse-mode accumulation from this scalar node.
    void backward() const;

private:
    TensorNodePtr node_;
};

// While alive, newly created ops record no graph (pure forward).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);          // [n,k] x [k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);       // a * b^T, b is [m,k]
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor add_row_broadcast(const Tensor& a, const Tensor& row); // row is [1,m]
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// Row-wise softmax with an optional additive mask (same shape; use -inf to
// exclude positions). Masked entries get exactly zero probability.
Tensor softmax_rows(const Tensor& a, const Tensor* mask = nullptr);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int first, int count);
Tensor slice_cols(const Tensor& a, int first, int count);
Tensor transpose(const Tensor& a);
Tensor mean_rows(const Tensor& a);                        // [n,m] -> [1,m]

// out row r = a row indices[r]; indices may repeat.
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);

// Fused scaled-dot-product attention over `batch` independent groups laid out
// consecutively in rows: q is [batch*n, d], k and v are [batch*m, d]. An
// optional additive mask [n, m] is shared across groups (-inf excludes a pair
// and yields an exactly-zero weight). Returns [batch*n, d].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch,
                 const Tensor* mask, float scale);

// Mean cross-entropy over rows of logits against integer targets.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Mean absolute error against a constant target (no grad into target).
Tensor l1_against(const Tensor& a, const std::vector<float>& target);

Tensor sum(const Tensor& a);
Tensor add_scalar(const Tensor& a, const Tensor& b); // both 1x1

// Bridge for losses computed outside the graph (e.g. in double precision):
// emits a 1x1 node carrying `value` whose backward adds out_grad * grads[i]
// into inputs[i]. Each grads[i] must match inputs[i]'s element count.
Tensor scalar_with_grads(const std::vector<Tensor>& inputs, float value,
                         std::vector<std::vector<float>> grads);

} // namespace ops

// Named trainable tensors of a model, ordered by insertion.
class ParameterRegistry {
public:
    Tensor create(const std::string& name, int rows, int cols);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<std::string>& names() const { return order_; }
    std::vector<Tensor*> tensors();

    // SHA-256 over all parameter bytes in registration order.
    std::string content_hash() const;

private:
    std::map<std::string, Tensor> params_;
    std::vector<std::string> order_;
};

class Rng;

// Gaussian init helper used by all modules.
void init_gaussian(Tensor& t, Rng& rng, float sigma = 0.02f);

} // namespace lapose
