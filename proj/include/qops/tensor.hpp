#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace qops {

// Dense 64-bit float tensor, 1-D or 2-D, row-major. 2-D row vectors (1 x d)
// are the working convention for states and embeddings; matrices multiply on
// the right, y = x * W with W stored input_dim x output_dim.
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data, zeroed at creation
  bool requires_grad = false;
};

// Value-semantics handle around shared node state, so parameters can live
// across many tapes while each forward pass builds a fresh graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row_vector(std::vector<double> values);  // 1 x n

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double value() const;  // scalar tensors only
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad();

  std::shared_ptr<TensorNode> handle() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;

  friend Tensor wrap_node(std::shared_ptr<TensorNode> n);
};

// Records operations in execution order; execution order is a topological
// order, so one reverse sweep visits every op exactly once.
class Tape {
 public:
  void record(std::vector<std::shared_ptr<TensorNode>> inputs,
              std::shared_ptr<TensorNode> output, std::function<void()> backward);

  // Reverse sweep from a scalar loss recorded on this tape. Leaf gradients
  // (inputs never produced by this tape) are zeroed first unless accumulate
  // is set. A tape can be walked only once.
  void backward(const Tensor& loss, bool accumulate = false);

  std::size_t num_ops() const { return ops_.size(); }
  bool consumed() const { return consumed_; }
  bool produced(const Tensor& t) const;

 private:
  struct Record {
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    std::function<void()> fn;
  };
  std::vector<Record> ops_;
  std::unordered_set<const TensorNode*> produced_;
  bool consumed_ = false;
};

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor softmax(Tape& tape, const Tensor& v);  // vector-shaped input, max-subtracted
Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);  // strictly positive input
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);  // elementwise
Tensor affine(Tape& tape, const Tensor& x, double scale, double shift);  // a*x + b
Tensor scale(Tape& tape, const Tensor& x, double s);
Tensor mul_scalar(Tape& tape, const Tensor& x, const Tensor& s);  // s is 1 x 1

Tensor concat(Tape& tape, const std::vector<Tensor>& parts);      // row vectors
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);   // T x d
Tensor add_rowwise(Tape& tape, const Tensor& m, const Tensor& r); // m[i,:] + r
Tensor transpose(Tape& tape, const Tensor& m);
Tensor row(Tape& tape, const Tensor& m, std::size_t i);
Tensor embedding_lookup(Tape& tape, const Tensor& table, std::size_t id);
Tensor slice_rows(Tape& tape, const Tensor& m, std::size_t r0, std::size_t r1);
Tensor slice_cols(Tape& tape, const Tensor& m, std::size_t c0, std::size_t c1);
Tensor pick(Tape& tape, const Tensor& x, std::size_t flat_index);  // 1 x 1
Tensor sum(Tape& tape, const Tensor& x);                           // 1 x 1

// Central-difference check of every coordinate of every parameter against the
// tape gradient of f. Returns the max over coordinates of
// |a - n| / max(1e-8, |a| + |n|). f must be deterministic; a repeated
// evaluation at the base point that disagrees bitwise raises logic_error.
double grad_check(const std::function<Tensor(Tape&)>& f, const std::vector<Tensor>& params,
                  double eps);

}  // namespace qops
