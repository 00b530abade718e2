#include "qops/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qops {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void require_2d(const Tensor& t, const char* what) {
  if (t.shape().size() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected 2-D tensor, got " +
                                shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

bool vector_like(const Tensor& t) {
  return t.shape().size() == 1 || (t.shape().size() == 2 && (t.rows() == 1 || t.cols() == 1));
}

}  // namespace

Tensor wrap_node(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  if (shape.empty() || shape.size() > 2) {
    throw std::invalid_argument("tensor shape must be 1-D or 2-D, got " + shape_str(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  std::size_t n = shape_product(node->shape);
  node->data.assign(n, 0.0);
  node->grad.assign(n, 0.0);
  node->requires_grad = requires_grad;
  return wrap_node(std::move(node));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  if (data.size() != t.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(t.shape()));
  }
  t.data() = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({1, 1}, {v}); }

Tensor Tensor::row_vector(std::vector<double> values) {
  std::size_t n = values.size();
  return from_data({1, n}, std::move(values));
}

std::size_t Tensor::rows() const { return node_->shape.size() == 2 ? node_->shape[0] : 1; }

std::size_t Tensor::cols() const { return node_->shape.back(); }

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("value() requires a scalar tensor, got " + shape_str(shape()));
  }
  return node_->data[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tape::record(std::vector<std::shared_ptr<TensorNode>> inputs,
                  std::shared_ptr<TensorNode> output, std::function<void()> backward) {
  produced_.insert(output.get());
  ops_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

bool Tape::produced(const Tensor& t) const {
  return produced_.count(t.handle().get()) > 0;
}

void Tape::backward(const Tensor& loss, bool accumulate) {
  if (consumed_) throw std::logic_error("tape already walked backward");
  if (loss.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss");
  }
  if (!produced_.count(loss.handle().get())) {
    throw std::invalid_argument("loss tensor was not produced by this tape");
  }
  if (!accumulate) {
    for (const auto& op : ops_) {
      for (const auto& in : op.inputs) {
        if (!produced_.count(in.get())) {
          std::fill(in->grad.begin(), in->grad.end(), 0.0);
        }
      }
    }
  }
  loss.handle()->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->fn();
  }
  consumed_ = true;
}

namespace {

Tensor make_out(std::vector<std::size_t> shape) { return Tensor::zeros(std::move(shape)); }

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                " * " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_out({m, n});
  const auto& A = a.data();
  const auto& B = b.data();
  auto& O = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[p * n + j];
      O[i * n + j] = acc;
    }
  }
  auto an = a.handle(), bn = b.handle(), on = out.handle();
  tape.record({an, bn}, on, [an, bn, on, m, k, n] {
    const auto& G = on->grad;
    const auto& A = an->data;
    const auto& B = bn->data;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
        an->grad[i * k + p] += acc;
      }
    }
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += A[i * k + p] * G[i * n + j];
        bn->grad[p * n + j] += acc;
      }
    }
  });
  return out;
}

Tensor softmax(Tape& tape, const Tensor& v) {
  if (!vector_like(v) || v.size() == 0) {
    throw std::invalid_argument("softmax: expected a non-empty vector, got " +
                                shape_str(v.shape()));
  }
  const std::size_t n = v.size();
  Tensor out = make_out(v.shape());
  const auto& X = v.data();
  auto& Y = out.data();
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : X) mx = std::max(mx, x);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Y[i] = std::exp(X[i] - mx);
    total += Y[i];
  }
  for (std::size_t i = 0; i < n; ++i) Y[i] /= total;
  auto vn = v.handle(), on = out.handle();
  tape.record({vn}, on, [vn, on, n] {
    const auto& G = on->grad;
    const auto& Y = on->data;
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += G[i] * Y[i];
    for (std::size_t i = 0; i < n; ++i) vn->grad[i] += Y[i] * (G[i] - dot);
  });
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(Tape& tape, const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = make_out(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = fwd(x.data()[i]);
  auto xn = x.handle(), on = out.handle();
  tape.record({xn}, on, [xn, on, n, bwd] {
    for (std::size_t i = 0; i < n; ++i) {
      xn->grad[i] += on->grad[i] * bwd(xn->data[i], on->data[i]);
    }
  });
  return out;
}

}  // namespace

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) {
      throw std::invalid_argument("log: input must be strictly positive, got " +
                                  std::to_string(v));
    }
  }
  return unary_op(
      tape, x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor affine(Tape& tape, const Tensor& x, double scale, double shift) {
  return unary_op(
      tape, x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Tensor scale(Tape& tape, const Tensor& x, double s) { return affine(tape, x, s, 0.0); }

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make_out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  auto an = a.handle(), bn = b.handle(), on = out.handle();
  tape.record({an, bn}, on, [an, bn, on, n] {
    for (std::size_t i = 0; i < n; ++i) {
      an->grad[i] += on->grad[i];
      bn->grad[i] += on->grad[i];
    }
  });
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make_out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  auto an = a.handle(), bn = b.handle(), on = out.handle();
  tape.record({an, bn}, on, [an, bn, on, n] {
    for (std::size_t i = 0; i < n; ++i) {
      an->grad[i] += on->grad[i];
      bn->grad[i] -= on->grad[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  auto an = a.handle(), bn = b.handle(), on = out.handle();
  tape.record({an, bn}, on, [an, bn, on, n] {
    for (std::size_t i = 0; i < n; ++i) {
      an->grad[i] += on->grad[i] * bn->data[i];
      bn->grad[i] += on->grad[i] * an->data[i];
    }
  });
  return out;
}

Tensor mul_scalar(Tape& tape, const Tensor& x, const Tensor& s) {
  if (s.size() != 1) {
    throw std::invalid_argument("mul_scalar: scale must be 1x1, got " + shape_str(s.shape()));
  }
  Tensor out = make_out(x.shape());
  const std::size_t n = x.size();
  const double sv = s.data()[0];
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * sv;
  auto xn = x.handle(), sn = s.handle(), on = out.handle();
  tape.record({xn, sn}, on, [xn, sn, on, n] {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      xn->grad[i] += on->grad[i] * sn->data[0];
      acc += on->grad[i] * xn->data[i];
    }
    sn->grad[0] += acc;
  });
  return out;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty part list");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != 1) {
      throw std::invalid_argument("concat: parts must be row vectors, got " +
                                  shape_str(p.shape()));
    }
    total += p.cols();
  }
  Tensor out = make_out({1, total});
  std::size_t off = 0;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + off);
    off += p.cols();
    inputs.push_back(p.handle());
    widths.push_back(p.cols());
  }
  auto on = out.handle();
  auto ins = inputs;
  tape.record(std::move(inputs), on, [ins, on, widths] {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      for (std::size_t i = 0; i < widths[k]; ++i) ins[k]->grad[i] += on->grad[off + i];
      off += widths[k];
    }
  });
  return out;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty row list");
  const std::size_t d = rows.front().cols();
  for (const auto& r : rows) {
    if (r.rows() != 1 || r.cols() != d) {
      throw std::invalid_argument("stack_rows: rows must all be 1x" + std::to_string(d) +
                                  ", got " + shape_str(r.shape()));
    }
  }
  const std::size_t t = rows.size();
  Tensor out = make_out({t, d});
  std::vector<std::shared_ptr<TensorNode>> inputs;
  for (std::size_t i = 0; i < t; ++i) {
    std::copy(rows[i].data().begin(), rows[i].data().end(), out.data().begin() + i * d);
    inputs.push_back(rows[i].handle());
  }
  auto on = out.handle();
  auto ins = inputs;
  tape.record(std::move(inputs), on, [ins, on, d] {
    for (std::size_t i = 0; i < ins.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) ins[i]->grad[j] += on->grad[i * d + j];
    }
  });
  return out;
}

Tensor add_rowwise(Tape& tape, const Tensor& m, const Tensor& r) {
  require_2d(m, "add_rowwise");
  if (r.rows() != 1 || r.cols() != m.cols()) {
    throw std::invalid_argument("add_rowwise: row shape " + shape_str(r.shape()) +
                                " does not match matrix " + shape_str(m.shape()));
  }
  const std::size_t t = m.rows(), d = m.cols();
  Tensor out = make_out({t, d});
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.data()[i * d + j] = m.data()[i * d + j] + r.data()[j];
  }
  auto mn = m.handle(), rn = r.handle(), on = out.handle();
  tape.record({mn, rn}, on, [mn, rn, on, t, d] {
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        mn->grad[i * d + j] += on->grad[i * d + j];
        rn->grad[j] += on->grad[i * d + j];
      }
    }
  });
  return out;
}

Tensor transpose(Tape& tape, const Tensor& m) {
  require_2d(m, "transpose");
  const std::size_t r = m.rows(), c = m.cols();
  Tensor out = make_out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = m.data()[i * c + j];
  }
  auto mn = m.handle(), on = out.handle();
  tape.record({mn}, on, [mn, on, r, c] {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) mn->grad[i * c + j] += on->grad[j * r + i];
    }
  });
  return out;
}

Tensor row(Tape& tape, const Tensor& m, std::size_t i) {
  require_2d(m, "row");
  if (i >= m.rows()) {
    throw std::out_of_range("row index " + std::to_string(i) + " out of range for " +
                            shape_str(m.shape()));
  }
  const std::size_t d = m.cols();
  Tensor out = make_out({1, d});
  std::copy(m.data().begin() + i * d, m.data().begin() + (i + 1) * d, out.data().begin());
  auto mn = m.handle(), on = out.handle();
  tape.record({mn}, on, [mn, on, i, d] {
    for (std::size_t j = 0; j < d; ++j) mn->grad[i * d + j] += on->grad[j];
  });
  return out;
}

Tensor embedding_lookup(Tape& tape, const Tensor& table, std::size_t id) {
  require_2d(table, "embedding_lookup");
  if (id >= table.rows()) {
    throw std::out_of_range("embedding id " + std::to_string(id) + " out of range for table " +
                            shape_str(table.shape()));
  }
  return row(tape, table, id);
}

Tensor slice_rows(Tape& tape, const Tensor& m, std::size_t r0, std::size_t r1) {
  require_2d(m, "slice_rows");
  if (r0 >= r1 || r1 > m.rows()) {
    throw std::out_of_range("slice_rows: invalid range [" + std::to_string(r0) + "," +
                            std::to_string(r1) + ") for " + shape_str(m.shape()));
  }
  const std::size_t d = m.cols(), t = r1 - r0;
  Tensor out = make_out({t, d});
  std::copy(m.data().begin() + r0 * d, m.data().begin() + r1 * d, out.data().begin());
  auto mn = m.handle(), on = out.handle();
  tape.record({mn}, on, [mn, on, r0, t, d] {
    for (std::size_t i = 0; i < t * d; ++i) mn->grad[r0 * d + i] += on->grad[i];
  });
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& m, std::size_t c0, std::size_t c1) {
  require_2d(m, "slice_cols");
  if (c0 >= c1 || c1 > m.cols()) {
    throw std::out_of_range("slice_cols: invalid range [" + std::to_string(c0) + "," +
                            std::to_string(c1) + ") for " + shape_str(m.shape()));
  }
  const std::size_t r = m.rows(), c = m.cols(), w = c1 - c0;
  Tensor out = make_out({r, w});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out.data()[i * w + j] = m.data()[i * c + c0 + j];
  }
  auto mn = m.handle(), on = out.handle();
  tape.record({mn}, on, [mn, on, r, c, c0, w] {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) mn->grad[i * c + c0 + j] += on->grad[i * w + j];
    }
  });
  return out;
}

Tensor pick(Tape& tape, const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.size()) {
    throw std::out_of_range("pick index " + std::to_string(flat_index) + " out of range for " +
                            shape_str(x.shape()));
  }
  Tensor out = Tensor::scalar(x.data()[flat_index]);
  auto xn = x.handle(), on = out.handle();
  tape.record({xn}, on, [xn, on, flat_index] { xn->grad[flat_index] += on->grad[0]; });
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  auto xn = x.handle(), on = out.handle();
  const std::size_t n = x.size();
  tape.record({xn}, on, [xn, on, n] {
    for (std::size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[0];
  });
  return out;
}

double grad_check(const std::function<Tensor(Tape&)>& f, const std::vector<Tensor>& params,
                  double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  }
  for (const auto& p : params) wrap_node(p.handle()).zero_grad();

  Tape tape;
  Tensor loss = f(tape);
  if (loss.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
  const double base = loss.value();
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  {
    Tape repeat_tape;
    Tensor repeat = f(repeat_tape);
    if (repeat.value() != base) {
      throw std::logic_error("grad_check: f is not deterministic (repeated evaluation differs)");
    }
  }

  auto eval = [&]() {
    Tape t;
    return f(t).value();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + eps;
      const double up = eval();
      p.data()[i] = saved - eps;
      const double down = eval();
      p.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace qops
