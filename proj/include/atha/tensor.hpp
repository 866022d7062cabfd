#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "atha/errors.hpp"

namespace atha {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// One node of the autodiff graph. The graph is rebuilt on every forward pass;
// backward() walks it in reverse topological order, visiting each node once.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, only when requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates this node's grad into its parents' grads.
    std::function<void(Node&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
        if (requires_grad && grad.empty()) grad.assign(data.size(), 0.0);
    }
};

// Dense row-major tensor of doubles, a shared handle to a graph node.
// Copying a Tensor copies the handle; use clone() for a deep copy.
class Tensor {
public:
    Tensor() : node_(std::make_shared<Node>()) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t numel() const { return node_->numel(); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    double value() const;  // single-element tensors only

    double operator()(int i) const { return node_->data[static_cast<std::size_t>(i)]; }
    double& operator()(int i) { return node_->data[static_cast<std::size_t>(i)]; }
    double operator()(int i, int j) const;
    double& operator()(int i, int j);

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v);

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    // Deep copy of values; the copy is a graph leaf.
    Tensor clone() const;
    // Same values, constant leaf (no grad, no history).
    Tensor detach() const;

    // Reverse-mode sweep from this scalar. Grads accumulate across calls
    // until zero_grad() is invoked on the leaves.
    void backward() const;

    std::shared_ptr<Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_op(Shape shape, std::vector<double> data,
                          std::vector<Tensor> parents,
                          std::function<void(Node&)> backward_fn);
};

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn);

// ---- arithmetic ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor scale(const Tensor& a, double c);
Tensor scale_by(const Tensor& a, const Tensor& s);     // s is a 1-element tensor
Tensor add_rowwise(const Tensor& x, const Tensor& row);

// ---- structure ----
Tensor transpose(const Tensor& x);                     // 2-D
Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& x, const std::vector<int>& indices);
Tensor slice_cols(const Tensor& x, int start, int count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// ---- nonlinearities / normalization ----
Tensor gelu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor softmax(const Tensor& x);                       // over the last axis
Tensor normalize_rows(const Tensor& x);                // x_i / ||x_i||

// ---- similarity / loss ----
Tensor cosine_similarity(const Tensor& u, const Tensor& v);
Tensor pairwise_neg_euclidean(const Tensor& v, const Tensor& t);
Tensor cross_entropy_from_similarities(const Tensor& sims, int label, double tau);

// ---- reductions ----
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);

}  // namespace atha
