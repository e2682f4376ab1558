#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace godeflow::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
struct Access;
}  // namespace detail

// Dense row-major array of doubles. A Tensor is a cheap handle: copies share
// the same storage and the same place in the recorded computation graph.
//
// Every operation whose inputs require gradients records a node holding its
// parents and a backward closure. Calling backward() on a scalar result walks
// that record in reverse topological order, accumulates gradients into every
// leaf that requires them, and then releases the interior of the record.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    // Rank-2 accessors.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const;
    // Writable only on leaves; used by optimizers and checkpoint loading.
    std::span<double> mutable_values();
    double item() const;

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void clear_grad();

    void backward() const;

    // Same values, no history, requires_grad = false.
    Tensor detach() const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend struct detail::Access;
};

// Disables recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// CSR row lists for neighbor_mean: row i averages the rows indices[offsets[i]..offsets[i+1]).
struct RowIndex {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> indices;
};

// Elementwise binary ops accept equal shapes, a rank-2 lhs with a [1, n] or
// [n] rhs broadcast over rows, or a single-element rhs.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Rank-2 mean along axis 0 ([1, n]) or axis 1 ([m, 1]).
Tensor mean(const Tensor& a, int axis);

Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

// Identity forward; the gradient flowing back is negated.
Tensor reverse_gradient(const Tensor& a);

Tensor neighbor_mean(const Tensor& a, std::shared_ptr<const RowIndex> index);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace godeflow::ad
