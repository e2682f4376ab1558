#include "godeflow/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "godeflow/errors.hpp"

namespace godeflow::ad {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    std::span<double> grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

struct Access {
    static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
    static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

using detail::Access;
using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

thread_local bool g_grad_enabled = true;

const std::shared_ptr<Node>& node_of(const Tensor& t) {
    if (!t.defined()) throw StateError("operation on an undefined tensor");
    return Access::node(t);
}

// Parents needing a gradient, or nothing when recording is off.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                     [](const auto& p) { return p->requires_grad; });
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Access::wrap(std::move(node));
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
    }
}

enum class Broadcast { same, rows, scalar };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb) return Broadcast::same;
    if (sa.size() == 2 && ((sb.size() == 2 && sb[0] == 1 && sb[1] == sa[1]) || (sb.size() == 1 && sb[0] == sa[1]))) {
        return Broadcast::rows;
    }
    if (b.numel() == 1) return Broadcast::scalar;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
}

inline std::size_t rhs_index(Broadcast mode, std::size_t k, std::size_t cols) {
    switch (mode) {
        case Broadcast::same: return k;
        case Broadcast::rows: return k % cols;
        case Broadcast::scalar: return 0;
    }
    return k;
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, GradA grad_a, GradB grad_b) {
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    const Broadcast mode = broadcast_mode(a, b, op);
    const std::size_t n = na->value.size();
    const std::size_t cols = a.rank() == 2 ? a.shape()[1] : 1;
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = fwd(na->value[k], nb->value[rhs_index(mode, k, cols)]);
    return make_result(a.shape(), std::move(out), {na, nb}, [mode, cols, grad_a, grad_b](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const std::size_t n = self.value.size();
        if (pa.requires_grad) {
            auto ga = pa.grad_buffer();
            for (std::size_t k = 0; k < n; ++k) {
                ga[k] += self.grad[k] * grad_a(pa.value[k], pb.value[rhs_index(mode, k, cols)]);
            }
        }
        if (pb.requires_grad) {
            auto gb = pb.grad_buffer();
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t j = rhs_index(mode, k, cols);
                gb[j] += self.grad[k] * grad_b(pa.value[k], pb.value[j]);
            }
        }
    });
}

// dfn(x, y) is the local derivative given input x and output y.
template <typename Fwd, typename Dfn>
Tensor unary(const Tensor& a, Fwd fwd, Dfn dfn) {
    const auto& na = node_of(a);
    std::vector<double> out(na->value.size());
    std::transform(na->value.begin(), na->value.end(), out.begin(), fwd);
    return make_result(a.shape(), std::move(out), {na}, [dfn](Node& self) {
        Node& p = *self.parents[0];
        auto g = p.grad_buffer();
        for (std::size_t k = 0; k < self.value.size(); ++k) g[k] += self.grad[k] * dfn(p.value[k], self.value[k]);
    });
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t k = 0; k < shape.size(); ++k) out << (k ? ", " : "") << shape[k];
    out << ']';
    return out.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from_values(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_numel(shape)) {
        throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " + std::to_string(values.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_values({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_of(*this)->shape; }
std::size_t Tensor::numel() const { return node_of(*this)->value.size(); }

std::size_t Tensor::rows() const {
    require_rank2(*this, "rows");
    return shape()[0];
}

std::size_t Tensor::cols() const {
    require_rank2(*this, "cols");
    return shape()[1];
}

std::span<const double> Tensor::values() const { return node_of(*this)->value; }

std::span<double> Tensor::mutable_values() {
    const auto& n = node_of(*this);
    if (n->backward) throw StateError("mutable_values: only leaf tensors may be written");
    return n->value;
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
    return values()[0];
}

bool Tensor::requires_grad() const { return node_of(*this)->requires_grad; }
bool Tensor::is_leaf() const { return !node_of(*this)->backward; }
bool Tensor::has_grad() const { return !node_of(*this)->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_of(*this)->grad; }

void Tensor::clear_grad() {
    auto& g = node_of(*this)->grad;
    g.clear();
    g.shrink_to_fit();
}

Tensor Tensor::detach() const { return from_values(shape(), node_of(*this)->value, false); }

void Tensor::backward() const {
    const auto& root = node_of(*this);
    if (root->value.size() != 1) {
        throw DimensionError("backward: called on non-scalar tensor of shape " + shape_string(root->shape));
    }
    if (!root->requires_grad) throw StateError("backward: tensor does not require grad");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
    // The record is single-use; leaves keep their gradients.
    for (Node* node : order) {
        if (node->backward) {
            node->backward = nullptr;
            node->parents.clear();
            node->grad.clear();
            node->grad.shrink_to_fit();
            node->requires_grad = false;
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- operations -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    std::vector<double> out(m * n);
    {
        Eigen::Map<const RowMat> ma(na->value.data(), m, k);
        Eigen::Map<const RowMat> mb(nb->value.data(), k, n);
        Eigen::Map<RowMat> mc(out.data(), m, n);
        mc.noalias() = ma * mb;
    }
    return make_result({m, n}, std::move(out), {na, nb}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        Eigen::Map<const RowMat> gc(self.grad.data(), m, n);
        if (pa.requires_grad) {
            Eigen::Map<RowMat> ga(pa.grad_buffer().data(), m, k);
            ga.noalias() += gc * Eigen::Map<const RowMat>(pb.value.data(), k, n).transpose();
        }
        if (pb.requires_grad) {
            Eigen::Map<RowMat> gb(pb.grad_buffer().data(), k, n);
            gb.noalias() += Eigen::Map<const RowMat>(pa.value.data(), m, k).transpose() * gc;
        }
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t m = parts[0].rows();
    std::vector<std::size_t> widths;
    std::vector<std::shared_ptr<Node>> parents;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) {
            throw DimensionError("concat_cols: incompatible shapes " + shape_string(parts[0].shape()) + " and " +
                                 shape_string(p.shape()));
        }
        widths.push_back(p.cols());
        total += p.cols();
        parents.push_back(node_of(p));
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (std::size_t q = 0; q < parts.size(); ++q) {
        const auto& v = parents[q]->value;
        for (std::size_t r = 0; r < m; ++r) {
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * widths[q]), widths[q],
                        out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
        }
        offset += widths[q];
    }
    return make_result({m, total}, std::move(out), std::move(parents), [m, total, widths](Node& self) {
        std::size_t offset = 0;
        for (std::size_t q = 0; q < self.parents.size(); ++q) {
            Node& p = *self.parents[q];
            if (p.requires_grad) {
                auto g = p.grad_buffer();
                for (std::size_t r = 0; r < m; ++r) {
                    for (std::size_t c = 0; c < widths[q]; ++c) g[r * widths[q] + c] += self.grad[r * total + offset + c];
                }
            }
            offset += widths[q];
        }
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t n = parts[0].cols();
    std::vector<std::shared_ptr<Node>> parents;
    std::size_t total_rows = 0;
    std::vector<double> out;
    for (const auto& p : parts) {
        if (p.cols() != n) {
            throw DimensionError("concat_rows: incompatible shapes " + shape_string(parts[0].shape()) + " and " +
                                 shape_string(p.shape()));
        }
        total_rows += p.rows();
        parents.push_back(node_of(p));
        out.insert(out.end(), parents.back()->value.begin(), parents.back()->value.end());
    }
    return make_result({total_rows, n}, std::move(out), std::move(parents), [](Node& self) {
        std::size_t offset = 0;
        for (auto& parent : self.parents) {
            const std::size_t len = parent->value.size();
            if (parent->requires_grad) {
                auto g = parent->grad_buffer();
                for (std::size_t k = 0; k < len; ++k) g[k] += self.grad[offset + k];
            }
            offset += len;
        }
    });
}

Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
    require_rank2(a, "select_rows");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    const auto& na = node_of(a);
    std::vector<double> out(idx.size() * n);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= m) {
            throw DimensionError("select_rows: row " + std::to_string(idx[r]) + " out of range for shape " +
                                 shape_string(a.shape()));
        }
        std::copy_n(na->value.begin() + static_cast<std::ptrdiff_t>(idx[r] * n), n,
                    out.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    return make_result({idx.size(), n}, std::move(out), {na}, [idx, n](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < n; ++c) g[idx[r] * n + c] += self.grad[r * n + c];
        }
    });
}

Tensor sum(const Tensor& a) {
    const auto& na = node_of(a);
    double total = 0.0;
    for (double v : na->value) total += v;
    return make_result({}, {total}, {na}, [](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        const double up = self.grad[0];
        for (double& x : g) x += up;
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.numel());
    if (n == 0) throw DimensionError("mean: empty tensor");
    return scale(sum(a), 1.0 / n);
}

Tensor mean(const Tensor& a, int axis) {
    require_rank2(a, "mean");
    if (axis != 0 && axis != 1) throw DimensionError("mean: axis must be 0 or 1");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    const auto& na = node_of(a);
    const bool over_rows = axis == 0;
    Shape shape = over_rows ? Shape{1, n} : Shape{m, 1};
    std::vector<double> out(over_rows ? n : m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) out[over_rows ? c : r] += na->value[r * n + c];
    }
    const double denom = static_cast<double>(over_rows ? m : n);
    for (double& v : out) v /= denom;
    return make_result(std::move(shape), std::move(out), {na}, [m, n, over_rows, denom](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[over_rows ? c : r] / denom;
        }
    });
}

Tensor square(const Tensor& a) {
    return unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) throw DomainError("log: non-positive input");
    }
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

namespace {

// Row-wise over the last axis; rank-1 tensors are a single row.
std::pair<std::size_t, std::size_t> row_layout(const Tensor& a, const char* op) {
    if (a.rank() == 1) return {1, a.shape()[0]};
    if (a.rank() == 2) return {a.shape()[0], a.shape()[1]};
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_string(a.shape()));
}

}  // namespace

Tensor softmax(const Tensor& a) {
    const auto [m, n] = row_layout(a, "softmax");
    const auto& na = node_of(a);
    std::vector<double> out(m * n);
    for (std::size_t r = 0; r < m; ++r) {
        const double* x = na->value.data() + r * n;
        double* y = out.data() + r * n;
        const double mx = *std::max_element(x, x + n);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) z += (y[c] = std::exp(x[c] - mx));
        for (std::size_t c = 0; c < n; ++c) y[c] /= z;
    }
    return make_result(a.shape(), std::move(out), {na}, [m, n](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < m; ++r) {
            const double* y = self.value.data() + r * n;
            const double* gy = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += gy[c] * y[c];
            for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (gy[c] - dot);
        }
    });
}

Tensor log_softmax(const Tensor& a) {
    const auto [m, n] = row_layout(a, "log_softmax");
    const auto& na = node_of(a);
    std::vector<double> out(m * n);
    for (std::size_t r = 0; r < m; ++r) {
        const double* x = na->value.data() + r * n;
        const double mx = *std::max_element(x, x + n);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[c] - lse;
    }
    return make_result(a.shape(), std::move(out), {na}, [m, n](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < m; ++r) {
            const double* y = self.value.data() + r * n;
            const double* gy = self.grad.data() + r * n;
            double total = 0.0;
            for (std::size_t c = 0; c < n; ++c) total += gy[c];
            for (std::size_t c = 0; c < n; ++c) g[r * n + c] += gy[c] - std::exp(y[c]) * total;
        }
    });
}

Tensor reverse_gradient(const Tensor& a) {
    const auto& na = node_of(a);
    return make_result(a.shape(), na->value, {na}, [](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] -= self.grad[k];
    });
}

Tensor neighbor_mean(const Tensor& a, std::shared_ptr<const RowIndex> index) {
    require_rank2(a, "neighbor_mean");
    const std::size_t m = a.shape()[0];
    const std::size_t n = a.shape()[1];
    if (!index || index->offsets.size() != m + 1) {
        throw DimensionError("neighbor_mean: row index does not match shape " + shape_string(a.shape()));
    }
    const auto& na = node_of(a);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t begin = index->offsets[i];
        const std::size_t end = index->offsets[i + 1];
        if (begin == end) continue;
        double* y = out.data() + i * n;
        for (std::size_t k = begin; k < end; ++k) {
            const double* x = na->value.data() + index->indices[k] * n;
            for (std::size_t c = 0; c < n; ++c) y[c] += x[c];
        }
        const double inv = 1.0 / static_cast<double>(end - begin);
        for (std::size_t c = 0; c < n; ++c) y[c] *= inv;
    }
    return make_result({m, n}, std::move(out), {na}, [m, n, index = std::move(index)](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t begin = index->offsets[i];
            const std::size_t end = index->offsets[i + 1];
            if (begin == end) continue;
            const double inv = 1.0 / static_cast<double>(end - begin);
            const double* gy = self.grad.data() + i * n;
            for (std::size_t k = begin; k < end; ++k) {
                double* gx = g.data() + index->indices[k] * n;
                for (std::size_t c = 0; c < n; ++c) gx[c] += gy[c] * inv;
            }
        }
    });
}

}  // namespace godeflow::ad
