#include "lapose/tensor.hpp"

#include "lapose/common.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace lapose {

namespace {

thread_local bool g_grad_enabled = true;

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstMatMap as_mat(const TensorNode& n) { return ConstMatMap(n.value.data(), n.rows, n.cols); }
MatMap grad_mat(TensorNode& n) { return MatMap(n.grad.data(), n.rows, n.cols); }
ConstMatMap grad_mat_const(const TensorNode& n) {
    return ConstMatMap(n.grad.data(), n.rows, n.cols);
}

TensorNodePtr make_node(int rows, int cols) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(size_t(rows) * cols, 0.0f);
    return n;
}

// Wires parents/backward only while grad recording is on and some parent needs
// gradients; otherwise the node is a detached constant.
void attach(const TensorNodePtr& out, std::vector<TensorNodePtr> parents,
            std::function<void(TensorNode&)> backward_fn) {
    bool needs = false;
    if (g_grad_enabled)
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
    if (!needs) return;
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward_fn = std::move(backward_fn);
}

void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(std::string("tensor: ") + msg);
}

} // namespace

void TensorNode::ensure_grad() {
    if (grad.size() != size()) grad.assign(size(), 0.0f);
}

Tensor::Tensor(int rows, int cols, bool requires_grad) : node_(make_node(rows, cols)) {
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(int rows, int cols) { return Tensor(rows, cols, false); }

Tensor Tensor::from_data(int rows, int cols, const std::vector<float>& data) {
    check(data.size() == size_t(rows) * cols, "from_data size mismatch");
    Tensor t(rows, cols, false);
    t.data() = data;
    return t;
}

float Tensor::scalar() const {
    check(node_ && node_->size() == 1, "scalar() needs a 1x1 tensor");
    return node_->value[0];
}

void Tensor::backward() const {
    check(node_ && node_->size() == 1, "backward() starts from a scalar");

    // Topological order via iterative DFS.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
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
        TensorNode* n = *it;
        if (!n->backward_fn) continue;
        for (auto& p : n->parents)
            if (p->requires_grad) p->ensure_grad();
        n->backward_fn(*n);
    }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.cols() == b.rows(), "matmul inner dims");
    auto out = make_node(a.rows(), b.cols());
    MatMap(out->value.data(), out->rows, out->cols).noalias() =
        as_mat(*a.node()) * as_mat(*b.node());
    auto an = a.node(), bn = b.node();
    attach(out, {an, bn}, [an, bn](TensorNode& o) {
        if (an->requires_grad)
            grad_mat(*an).noalias() += grad_mat_const(o) * as_mat(*bn).transpose();
        if (bn->requires_grad)
            grad_mat(*bn).noalias() += as_mat(*an).transpose() * grad_mat_const(o);
    });
    return Tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check(a.cols() == b.cols(), "matmul_nt inner dims");
    auto out = make_node(a.rows(), b.rows());
    MatMap(out->value.data(), out->rows, out->cols).noalias() =
        as_mat(*a.node()) * as_mat(*b.node()).transpose();
    auto an = a.node(), bn = b.node();
    attach(out, {an, bn}, [an, bn](TensorNode& o) {
        if (an->requires_grad) grad_mat(*an).noalias() += grad_mat_const(o) * as_mat(*bn);
        if (bn->requires_grad)
            grad_mat(*bn).noalias() += grad_mat_const(o).transpose() * as_mat(*an);
    });
    return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "add shape");
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->value[i] = a.data()[i] + b.data()[i];
    auto an = a.node(), bn = b.node();
    attach(out, {an, bn}, [an, bn](TensorNode& o) {
        if (an->requires_grad)
            for (size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < o.size(); ++i) bn->grad[i] += o.grad[i];
    });
    return Tensor(out);
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& row) {
    check(row.rows() == 1 && row.cols() == a.cols(), "add_row_broadcast shape");
    auto out = make_node(a.rows(), a.cols());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c)
            out->value[size_t(r) * a.cols() + c] = a.data()[size_t(r) * a.cols() + c] + row.data()[c];
    auto an = a.node(), rn = row.node();
    attach(out, {an, rn}, [an, rn](TensorNode& o) {
        if (an->requires_grad)
            for (size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
        if (rn->requires_grad)
            for (int r = 0; r < o.rows; ++r)
                for (int c = 0; c < o.cols; ++c) rn->grad[c] += o.grad[size_t(r) * o.cols + c];
    });
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0f)); }

Tensor mul(const Tensor& a, const Tensor& b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape");
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->value[i] = a.data()[i] * b.data()[i];
    auto an = a.node(), bn = b.node();
    attach(out, {an, bn}, [an, bn](TensorNode& o) {
        if (an->requires_grad)
            for (size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i] * bn->value[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < o.size(); ++i) bn->grad[i] += o.grad[i] * an->value[i];
    });
    return Tensor(out);
}

Tensor scale(const Tensor& a, float s) {
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->value[i] = a.data()[i] * s;
    auto an = a.node();
    attach(out, {an}, [an, s](TensorNode& o) {
        for (size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i] * s;
    });
    return Tensor(out);
}

Tensor relu(const Tensor& a) {
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) out->value[i] = std::max(0.0f, a.data()[i]);
    auto an = a.node();
    attach(out, {an}, [an](TensorNode& o) {
        for (size_t i = 0; i < o.size(); ++i)
            if (an->value[i] > 0.0f) an->grad[i] += o.grad[i];
    });
    return Tensor(out);
}

Tensor gelu(const Tensor& a) {
    // tanh approximation
    constexpr float c0 = 0.7978845608028654f; // sqrt(2/pi)
    constexpr float c1 = 0.044715f;
    auto out = make_node(a.rows(), a.cols());
    for (size_t i = 0; i < out->size(); ++i) {
        float x = a.data()[i];
        float t = std::tanh(c0 * (x + c1 * x * x * x));
        out->value[i] = 0.5f * x * (1.0f + t);
    }
    auto an = a.node();
    attach(out, {an}, [an](TensorNode& o) {
        for (size_t i = 0; i < o.size(); ++i) {
            float x = an->value[i];
            float u = c0 * (x + c1 * x * x * x);
            float t = std::tanh(u);
            float du = c0 * (1.0f + 3.0f * c1 * x * x);
            float d = 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
            an->grad[i] += o.grad[i] * d;
        }
    });
    return Tensor(out);
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, float eps) {
    check(gamma.rows() == 1 && gamma.cols() == a.cols(), "layer_norm gamma shape");
    check(beta.rows() == 1 && beta.cols() == a.cols(), "layer_norm beta shape");
    int n = a.rows(), m = a.cols();
    auto out = make_node(n, m);
    std::vector<float> inv_std(static_cast<size_t>(n), 0.0f);
    std::vector<float> mean(static_cast<size_t>(n), 0.0f);
    for (int r = 0; r < n; ++r) {
        const float* x = a.node()->row(r);
        float mu = 0.0f;
        for (int c = 0; c < m; ++c) mu += x[c];
        mu /= float(m);
        float var = 0.0f;
        for (int c = 0; c < m; ++c) var += (x[c] - mu) * (x[c] - mu);
        var /= float(m);
        float is = 1.0f / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = is;
        float* y = out->row(r);
        for (int c = 0; c < m; ++c) y[c] = (x[c] - mu) * is * gamma.data()[c] + beta.data()[c];
    }
    auto an = a.node(), gn = gamma.node(), bn = beta.node();
    attach(out, {an, gn, bn}, [an, gn, bn, mean, inv_std](TensorNode& o) {
        int n = o.rows, m = o.cols;
        for (int r = 0; r < n; ++r) {
            const float* x = an->row(r);
            const float* go = o.grad.data() + size_t(r) * m;
            float mu = mean[size_t(r)], is = inv_std[size_t(r)];
            if (gn->requires_grad || bn->requires_grad)
                for (int c = 0; c < m; ++c) {
                    float xhat = (x[c] - mu) * is;
                    if (gn->requires_grad) gn->grad[c] += go[c] * xhat;
                    if (bn->requires_grad) bn->grad[c] += go[c];
                }
            if (an->requires_grad) {
                float sum_g = 0.0f, sum_gx = 0.0f;
                for (int c = 0; c < m; ++c) {
                    float g = go[c] * gn->value[c];
                    float xhat = (x[c] - mu) * is;
                    sum_g += g;
                    sum_gx += g * xhat;
                }
                float* gi = an->grad.data() + size_t(r) * m;
                for (int c = 0; c < m; ++c) {
                    float g = go[c] * gn->value[c];
                    float xhat = (x[c] - mu) * is;
                    gi[c] += is * (g - (sum_g + xhat * sum_gx) / float(m));
                }
            }
        }
    });
    return Tensor(out);
}

Tensor softmax_rows(const Tensor& a, const Tensor* mask) {
    if (mask) check(mask->rows() == a.rows() && mask->cols() == a.cols(), "softmax mask shape");
    int n = a.rows(), m = a.cols();
    auto out = make_node(n, m);
    for (int r = 0; r < n; ++r) {
        const float* x = a.node()->row(r);
        const float* mk = mask ? mask->node()->row(r) : nullptr;
        float mx = -std::numeric_limits<float>::infinity();
        for (int c = 0; c < m; ++c) {
            float v = mk ? x[c] + mk[c] : x[c];
            if (v > mx) mx = v;
        }
        float* y = out->row(r);
        float sum = 0.0f;
        for (int c = 0; c < m; ++c) {
            float v = mk ? x[c] + mk[c] : x[c];
            // exp(-inf - mx) is exactly 0, so masked slots contribute nothing.
            float e = std::isinf(v) && v < 0 ? 0.0f : std::exp(v - mx);
            y[c] = e;
            sum += e;
        }
        float inv = 1.0f / sum;
        for (int c = 0; c < m; ++c) y[c] *= inv;
    }
    auto an = a.node();
    attach(out, {an}, [an](TensorNode& o) {
        int n = o.rows, m = o.cols;
        for (int r = 0; r < n; ++r) {
            const float* y = o.row(r);
            const float* go = o.grad.data() + size_t(r) * m;
            float dot = 0.0f;
            for (int c = 0; c < m; ++c) dot += y[c] * go[c];
            float* gi = an->grad.data() + size_t(r) * m;
            for (int c = 0; c < m; ++c) gi[c] += y[c] * (go[c] - dot);
        }
    });
    return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_rows empty");
    int cols = parts[0].cols();
    int rows = 0;
    for (const auto& p : parts) {
        check(p.cols() == cols, "concat_rows col mismatch");
        rows += p.rows();
    }
    auto out = make_node(rows, cols);
    int at = 0;
    std::vector<TensorNodePtr> parents;
    std::vector<int> offsets;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out->value.begin() + size_t(at) * cols);
        parents.push_back(p.node());
        offsets.push_back(at);
        at += p.rows();
    }
    attach(out, parents, [parents, offsets, cols](TensorNode& o) {
        for (size_t i = 0; i < parents.size(); ++i) {
            auto& p = parents[i];
            if (!p->requires_grad) continue;
            const float* src = o.grad.data() + size_t(offsets[i]) * cols;
            for (size_t k = 0; k < p->size(); ++k) p->grad[k] += src[k];
        }
    });
    return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_cols empty");
    int rows = parts[0].rows();
    int cols = 0;
    for (const auto& p : parts) {
        check(p.rows() == rows, "concat_cols row mismatch");
        cols += p.cols();
    }
    auto out = make_node(rows, cols);
    std::vector<TensorNodePtr> parents;
    std::vector<int> offsets;
    int at = 0;
    for (const auto& p : parts) {
        for (int r = 0; r < rows; ++r)
            std::copy(p.node()->row(r), p.node()->row(r) + p.cols(), out->row(r) + at);
        parents.push_back(p.node());
        offsets.push_back(at);
        at += p.cols();
    }
    attach(out, parents, [parents, offsets](TensorNode& o) {
        for (size_t i = 0; i < parents.size(); ++i) {
            auto& p = parents[i];
            if (!p->requires_grad) continue;
            for (int r = 0; r < o.rows; ++r) {
                const float* src = o.grad.data() + size_t(r) * o.cols + offsets[i];
                float* dst = p->grad.data() + size_t(r) * p->cols;
                for (int c = 0; c < p->cols; ++c) dst[c] += src[c];
            }
        }
    });
    return Tensor(out);
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
    auto out = make_node(int(indices.size()), a.cols());
    for (size_t r = 0; r < indices.size(); ++r) {
        check(indices[r] >= 0 && indices[r] < a.rows(), "gather_rows index range");
        std::copy(a.node()->row(indices[r]), a.node()->row(indices[r]) + a.cols(), out->row(int(r)));
    }
    auto an = a.node();
    attach(out, {an}, [an, indices](TensorNode& o) {
        for (size_t r = 0; r < indices.size(); ++r) {
            const float* src = o.grad.data() + r * size_t(o.cols);
            float* dst = an->grad.data() + size_t(indices[r]) * an->cols;
            for (int c = 0; c < o.cols; ++c) dst[c] += src[c];
        }
    });
    return Tensor(out);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch,
                 const Tensor* mask, float scale) {
    check(q.cols() == k.cols() && k.rows() == v.rows(), "attention shapes");
    check(q.rows() % batch == 0 && k.rows() % batch == 0, "attention batch layout");
    int n = q.rows() / batch;
    int m = k.rows() / batch;
    int d = q.cols();
    int dv = v.cols();
    if (mask) check(mask->rows() == n && mask->cols() == m, "attention mask shape");

    auto out = make_node(batch * n, dv);
    // Probabilities are kept for the backward pass.
    auto probs = std::make_shared<std::vector<float>>(size_t(batch) * n * m);

    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (int b = 0; b < batch; ++b) {
        ConstMatMap qb(q.data().data() + size_t(b) * n * d, n, d);
        ConstMatMap kb(k.data().data() + size_t(b) * m * d, m, d);
        ConstMatMap vb(v.data().data() + size_t(b) * m * dv, m, dv);
        RowMat s(n, m);
        s.noalias() = qb * kb.transpose();
        s *= scale;
        float* pb = probs->data() + size_t(b) * n * m;
        for (int r = 0; r < n; ++r) {
            const float* mk = mask ? mask->node()->row(r) : nullptr;
            float mx = -std::numeric_limits<float>::infinity();
            for (int c = 0; c < m; ++c) {
                float x = mk ? s(r, c) + mk[c] : s(r, c);
                if (x > mx) mx = x;
            }
            float sum = 0.0f;
            for (int c = 0; c < m; ++c) {
                float x = mk ? s(r, c) + mk[c] : s(r, c);
                float e = (std::isinf(x) && x < 0) ? 0.0f : std::exp(x - mx);
                pb[size_t(r) * m + c] = e;
                sum += e;
            }
            float inv = 1.0f / sum;
            for (int c = 0; c < m; ++c) pb[size_t(r) * m + c] *= inv;
        }
        ConstMatMap pm(pb, n, m);
        MatMap ob(out->value.data() + size_t(b) * n * dv, n, dv);
        ob.noalias() = pm * vb;
    }

    auto qn = q.node(), kn = k.node(), vn = v.node();
    attach(out, {qn, kn, vn}, [qn, kn, vn, probs, batch, n, m, d, dv, scale](TensorNode& o) {
        using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        for (int b = 0; b < batch; ++b) {
            ConstMatMap qb(qn->value.data() + size_t(b) * n * d, n, d);
            ConstMatMap kb(kn->value.data() + size_t(b) * m * d, m, d);
            ConstMatMap vb(vn->value.data() + size_t(b) * m * dv, m, dv);
            ConstMatMap pm(probs->data() + size_t(b) * n * m, n, m);
            ConstMatMap go(o.grad.data() + size_t(b) * n * dv, n, dv);

            if (vn->requires_grad) {
                MatMap gv(vn->grad.data() + size_t(b) * m * dv, m, dv);
                gv.noalias() += pm.transpose() * go;
            }
            RowMat gp(n, m);
            gp.noalias() = go * vb.transpose();
            // softmax backward: ds = p .* (gp - rowsum(gp .* p))
            RowMat gs(n, m);
            for (int r = 0; r < n; ++r) {
                float dot = 0.0f;
                for (int c = 0; c < m; ++c) dot += gp(r, c) * pm(r, c);
                for (int c = 0; c < m; ++c) gs(r, c) = pm(r, c) * (gp(r, c) - dot) * scale;
            }
            if (qn->requires_grad) {
                MatMap gq(qn->grad.data() + size_t(b) * n * d, n, d);
                gq.noalias() += gs * kb;
            }
            if (kn->requires_grad) {
                MatMap gk(kn->grad.data() + size_t(b) * m * d, m, d);
                gk.noalias() += gs.transpose() * qb;
            }
        }
    });
    return Tensor(out);
}

Tensor slice_rows(const Tensor& a, int first, int count) {
    check(first >= 0 && count >= 0 && first + count <= a.rows(), "slice_rows range");
    auto out = make_node(count, a.cols());
    std::copy(a.data().begin() + size_t(first) * a.cols(),
              a.data().begin() + size_t(first + count) * a.cols(), out->value.begin());
    auto an = a.node();
    int cols = a.cols();
    attach(out, {an}, [an, first, cols](TensorNode& o) {
        float* dst = an->grad.data() + size_t(first) * cols;
        for (size_t i = 0; i < o.size(); ++i) dst[i] += o.grad[i];
    });
    return Tensor(out);
}

Tensor slice_cols(const Tensor& a, int first, int count) {
    check(first >= 0 && count >= 0 && first + count <= a.cols(), "slice_cols range");
    auto out = make_node(a.rows(), count);
    for (int r = 0; r < a.rows(); ++r)
        std::copy(a.node()->row(r) + first, a.node()->row(r) + first + count, out->row(r));
    auto an = a.node();
    attach(out, {an}, [an, first](TensorNode& o) {
        for (int r = 0; r < o.rows; ++r) {
            float* dst = an->grad.data() + size_t(r) * an->cols + first;
            const float* src = o.grad.data() + size_t(r) * o.cols;
            for (int c = 0; c < o.cols; ++c) dst[c] += src[c];
        }
    });
    return Tensor(out);
}

Tensor transpose(const Tensor& a) {
    auto out = make_node(a.cols(), a.rows());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) out->value[size_t(c) * a.rows() + r] = a.node()->row(r)[c];
    auto an = a.node();
    attach(out, {an}, [an](TensorNode& o) {
        for (int r = 0; r < o.rows; ++r)
            for (int c = 0; c < o.cols; ++c)
                an->grad[size_t(c) * an->cols + r] += o.grad[size_t(r) * o.cols + c];
    });
    return Tensor(out);
}

Tensor mean_rows(const Tensor& a) {
    auto out = make_node(1, a.cols());
    float inv = 1.0f / float(a.rows());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) out->value[c] += a.node()->row(r)[c] * inv;
    auto an = a.node();
    attach(out, {an}, [an, inv](TensorNode& o) {
        for (int r = 0; r < an->rows; ++r)
            for (int c = 0; c < an->cols; ++c)
                an->grad[size_t(r) * an->cols + c] += o.grad[c] * inv;
    });
    return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    check(int(targets.size()) == logits.rows(), "cross_entropy target count");
    int n = logits.rows(), k = logits.cols();
    auto out = make_node(1, 1);
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        const float* x = logits.node()->row(r);
        check(targets[size_t(r)] >= 0 && targets[size_t(r)] < k, "cross_entropy target range");
        float mx = x[0];
        for (int c = 1; c < k; ++c) mx = std::max(mx, x[c]);
        double lse = 0.0;
        for (int c = 0; c < k; ++c) lse += std::exp(double(x[c] - mx));
        total += std::log(lse) + double(mx) - double(x[targets[size_t(r)]]);
    }
    out->value[0] = float(total / n);
    auto ln = logits.node();
    attach(out, {ln}, [ln, targets](TensorNode& o) {
        int n = ln->rows, k = ln->cols;
        float g = o.grad[0] / float(n);
        for (int r = 0; r < n; ++r) {
            const float* x = ln->row(r);
            float* gi = ln->grad.data() + size_t(r) * k;
            float mx = x[0];
            for (int c = 1; c < k; ++c) mx = std::max(mx, x[c]);
            double lse = 0.0;
            for (int c = 0; c < k; ++c) lse += std::exp(double(x[c] - mx));
            float inv = float(1.0 / lse);
            for (int c = 0; c < k; ++c) {
                float p = std::exp(x[c] - mx) * inv;
                gi[c] += g * (p - (c == targets[size_t(r)] ? 1.0f : 0.0f));
            }
        }
    });
    return Tensor(out);
}

Tensor l1_against(const Tensor& a, const std::vector<float>& target) {
    check(target.size() == a.size(), "l1_against size");
    auto out = make_node(1, 1);
    double total = 0.0;
    for (size_t i = 0; i < a.size(); ++i) total += std::abs(double(a.data()[i]) - target[i]);
    out->value[0] = float(total / double(a.size()));
    auto an = a.node();
    attach(out, {an}, [an, target](TensorNode& o) {
        float g = o.grad[0] / float(an->size());
        for (size_t i = 0; i < an->size(); ++i) {
            float d = an->value[i] - target[i];
            an->grad[i] += g * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f));
        }
    });
    return Tensor(out);
}

Tensor sum(const Tensor& a) {
    auto out = make_node(1, 1);
    double total = 0.0;
    for (float v : a.data()) total += v;
    out->value[0] = float(total);
    auto an = a.node();
    attach(out, {an}, [an](TensorNode& o) {
        for (size_t i = 0; i < an->size(); ++i) an->grad[i] += o.grad[0];
    });
    return Tensor(out);
}

Tensor add_scalar(const Tensor& a, const Tensor& b) { return add(a, b); }

Tensor scalar_with_grads(const std::vector<Tensor>& inputs, float value,
                         std::vector<std::vector<float>> grads) {
    check(inputs.size() == grads.size(), "scalar_with_grads arity");
    for (size_t i = 0; i < inputs.size(); ++i)
        check(inputs[i].size() == grads[i].size(), "scalar_with_grads grad size");
    auto out = make_node(1, 1);
    out->value[0] = value;
    std::vector<TensorNodePtr> parents;
    for (const auto& t : inputs) parents.push_back(t.node());
    attach(out, parents, [parents, grads](TensorNode& o) {
        for (size_t i = 0; i < parents.size(); ++i) {
            auto& p = parents[i];
            if (!p->requires_grad) continue;
            for (size_t k = 0; k < p->size(); ++k) p->grad[k] += o.grad[0] * grads[i][k];
        }
    });
    return Tensor(out);
}

} // namespace ops

Tensor ParameterRegistry::create(const std::string& name, int rows, int cols) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Tensor t(rows, cols, true);
    params_.emplace(name, t);
    order_.push_back(name);
    return t;
}

Tensor& ParameterRegistry::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
}

const Tensor& ParameterRegistry::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
}

bool ParameterRegistry::contains(const std::string& name) const { return params_.count(name) > 0; }

std::vector<Tensor*> ParameterRegistry::tensors() {
    std::vector<Tensor*> out;
    out.reserve(order_.size());
    for (const auto& name : order_) out.push_back(&params_.at(name));
    return out;
}

std::string ParameterRegistry::content_hash() const {
    std::vector<uint8_t> bytes;
    for (const auto& name : order_) {
        const auto& t = params_.at(name);
        bytes.insert(bytes.end(), name.begin(), name.end());
        const uint8_t* p = reinterpret_cast<const uint8_t*>(t.data().data());
        bytes.insert(bytes.end(), p, p + t.data().size() * sizeof(float));
    }
    return hex_string(sha256(bytes.data(), bytes.size()));
}

void init_gaussian(Tensor& t, Rng& rng, float sigma) {
    for (auto& v : t.data()) v = float(rng.normal(0.0, sigma));
}

} // namespace lapose
