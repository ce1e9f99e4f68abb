#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ucm/common.hpp"

namespace ucm {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Backing store for a tensor value. Tensors are thin shared handles onto a
// node; the autograd tape keeps nodes alive across forward/backward.
template <typename Real>
struct NodeT {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    }
    void release_grad() {
        grad.clear();
        grad.shrink_to_fit();
    }
    void release_data() {
        data.clear();
        data.shrink_to_fit();
    }
};

}  // namespace detail

template <typename Real>
class TensorT {
  public:
    using Node = detail::NodeT<Real>;

    TensorT() = default;

    static TensorT zeros(Shape shape) { return filled(std::move(shape), Real(0)); }

    static TensorT filled(Shape shape, Real value) {
        TensorT t;
        t.node_ = std::make_shared<Node>();
        const std::int64_t n = shape_numel(shape);
        t.node_->shape = std::move(shape);
        t.node_->data.assign(static_cast<std::size_t>(n), value);
        return t;
    }

    static TensorT from_data(Shape shape, std::vector<Real> data) {
        const std::int64_t n = shape_numel(shape);
        if (n != static_cast<std::int64_t>(data.size()))
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        TensorT t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        return t;
    }

    static TensorT scalar(Real value) { return filled({1}, value); }

    // U(-bound, bound)
    static TensorT uniform(Shape shape, Rng& rng, Real bound) {
        TensorT t = zeros(std::move(shape));
        for (auto& v : t.node_->data) v = static_cast<Real>(rng.uniform(-bound, bound));
        return t;
    }

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const { return node_->shape; }
    std::int64_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::int64_t numel() const { return node_->numel(); }

    Real* data() { return node_->data.data(); }
    const Real* data() const { return node_->data.data(); }
    std::vector<Real>& vec() { return node_->data; }
    const std::vector<Real>& vec() const { return node_->data; }

    Real value() const {
        if (numel() != 1) throw ContractError("Tensor::value: tensor is not a scalar");
        return node_->data[0];
    }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    TensorT& set_requires_grad(bool flag) {
        node_->requires_grad = flag;
        return *this;
    }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    Real* grad_data() {
        node_->ensure_grad();
        return node_->grad.data();
    }
    const std::vector<Real>& grad_vec() const { return node_->grad; }
    // grad as a plain vector, zeros if never touched
    std::vector<Real> grad_or_zeros() const {
        if (!node_->grad.empty()) return node_->grad;
        return std::vector<Real>(node_->data.size(), Real(0));
    }
    void zero_grad() {
        if (node_) node_->release_grad();
    }

    std::shared_ptr<Node> node() const { return node_; }

    // index helpers for the canonical layouts
    Real& at2(std::int64_t i, std::int64_t j) { return node_->data[static_cast<std::size_t>(i * dim(1) + j)]; }
    Real at2(std::int64_t i, std::int64_t j) const { return node_->data[static_cast<std::size_t>(i * dim(1) + j)]; }
    Real& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return node_->data[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }
    Real at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return node_->data[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }

    bool same_shape(const TensorT& other) const { return node_->shape == other.node_->shape; }

  private:
    std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;  // 64-bit shadow precision for gradient checks

template <typename Real>
void check_finite(const TensorT<Real>& t, const char* where);

}  // namespace ucm
