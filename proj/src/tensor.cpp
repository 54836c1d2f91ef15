#include "prefiner/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefiner/error.hpp"
#include "prefiner/kernels.hpp"

namespace prefiner {

namespace {

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(Shape shape) {
  auto node = std::make_shared<TensorNode>();
  node->value.assign(shape_size(shape), 0.0);
  node->shape = std::move(shape);
  return node;
}

void ensure_grad(TensorNode& node) {
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
}

/// The tape to record on, or nullptr when no input needs a gradient.
Tape* recording(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

Tensor finish(NodePtr out, Tape* tape, std::vector<NodePtr> inputs, Tape::Rule rule) {
  if (tape != nullptr) {
    out->requires_grad = true;
    out->is_leaf = false;
    tape->record(std::move(inputs), out, std::move(rule));
  }
  return Tensor(std::move(out));
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::ShapeMismatch, what);
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

// Row-major strides.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Visits every output element of a permutation in row-major output order,
// handing the matching source offset to `fn(out_index, src_offset)`.
template <typename Fn>
void for_each_permuted(const Shape& out_shape, const std::vector<std::size_t>& src_strides_permuted, Fn&& fn) {
  const std::size_t rank = out_shape.size();
  const std::size_t total = shape_size(out_shape);
  if (total == 0) return;
  if (rank == 0) {
    fn(0, 0);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t inner_stride = src_strides_permuted[rank - 1];
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) fn(o + j, src + j * inner_stride);
    // advance the multi-index over the outer axes
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      src += src_strides_permuted[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= src_strides_permuted[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
}

struct Broadcast {
  std::size_t outer;
  std::size_t inner;  // size of b
};

Broadcast check_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  require(is_suffix(a.shape(), b.shape()),
          std::string(op) + ": shape " + shape_string(b.shape()) + " does not broadcast to " + shape_string(a.shape()));
  const std::size_t inner = b.size();
  return {inner == 0 ? 0 : a.size() / inner, inner};
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  auto out = make_node(a.shape());
  const auto& x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) out->value[i] = f(x[i]);
  Tape* tape = recording({&a});
  auto an = a.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an}, [an, o, df] {
    if (!an->requires_grad) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * df(an->value[i], o->value[i]);
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = make_node(std::move(shape));
  std::fill(node->value.begin(), node->value.end(), value);
  Tensor t(std::move(node));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    fail(ErrorCode::ShapeMismatch, "shape " + shape_string(shape) + " needs " + std::to_string(shape_size(shape)) +
                                       " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  Tensor t(std::move(node));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
  t.set_requires_grad(requires_grad);
  return t;
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    ensure_grad(*node_);
  } else if (node_->is_leaf) {
    node_->grad.clear();
  }
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) fail(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  require(index.size() == rank(), "at(): index rank differs from tensor rank");
  std::size_t off = 0;
  std::size_t ax = 0;
  for (std::size_t i : index) {
    require(i < shape()[ax], "at(): index out of range");
    off = off * shape()[ax] + i;
    ++ax;
  }
  return node_->value[off];
}

Tensor Tensor::detach() const { return from(shape(), values(), false); }

// ---- Tape -----------------------------------------------------------------

void Tape::record(std::vector<std::shared_ptr<TensorNode>> inputs, std::shared_ptr<TensorNode> output, Rule rule) {
  records_.push_back({std::move(inputs), std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    fail(ErrorCode::NonScalarLoss,
         "backward() needs a single-element loss, got shape " + (loss.defined() ? shape_string(loss.shape()) : "[]"));
  }
  for (auto& rec : records_) rec.output->grad.assign(rec.output->value.size(), 0.0);
  TensorNode& root = *loss.node();
  if (!root.requires_grad) return;
  ensure_grad(root);
  root.grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->rule();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::TapeScope(std::nullptr_t) : previous_(g_active_tape) { g_active_tape = nullptr; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 2 && b.rank() >= 2, "matmul: operands need rank >= 2, got " + shape_string(a.shape()) +
                                              " and " + shape_string(b.shape()));
  const std::size_t n = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t m = b.dim(b.rank() - 1);
  require(b.dim(b.rank() - 2) == k,
          "matmul: inner extents differ in " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const bool shared = b.rank() == 2;
  std::size_t batch = a.size() / (n * k);
  if (!shared) {
    require(b.rank() == a.rank() && std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()),
            "matmul: batch extents differ in " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Shape out_shape = a.shape();
  out_shape.back() = m;
  auto out = make_node(out_shape);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = out->value.data();
  if (shared) {
    kernels::gemm_nn(batch * n, m, k, pa, pb, pc, false);
  } else {
    for (std::size_t t = 0; t < batch; ++t) kernels::gemm_nn(n, m, k, pa + t * n * k, pb + t * k * m, pc + t * n * m, false);
  }

  Tape* tape = recording({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an, bn}, [an, bn, o, shared, batch, n, k, m] {
    const double* dc = o->grad.data();
    if (an->requires_grad) {
      ensure_grad(*an);
      if (shared) {
        kernels::gemm_nt(batch * n, k, m, dc, bn->value.data(), an->grad.data(), true);
      } else {
        for (std::size_t t = 0; t < batch; ++t) {
          kernels::gemm_nt(n, k, m, dc + t * n * m, bn->value.data() + t * k * m, an->grad.data() + t * n * k, true);
        }
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      if (shared) {
        kernels::gemm_tn(k, m, batch * n, an->value.data(), dc, bn->grad.data(), true);
      } else {
        for (std::size_t t = 0; t < batch; ++t) {
          kernels::gemm_tn(k, m, n, an->value.data() + t * n * k, dc + t * n * m, bn->grad.data() + t * k * m, true);
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a, const std::vector<std::size_t>& perm) {
  const std::size_t rank = a.rank();
  require(perm.size() == rank, "transpose: permutation rank differs from tensor rank");
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    require(p < rank && !seen[p], "transpose: invalid permutation");
    seen[p] = true;
  }
  const auto src_strides = strides_of(a.shape());
  Shape out_shape(rank);
  std::vector<std::size_t> permuted(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = a.dim(perm[i]);
    permuted[i] = src_strides[perm[i]];
  }
  auto out = make_node(out_shape);
  const double* src = a.values().data();
  double* dst = out->value.data();
  for_each_permuted(out_shape, permuted, [&](std::size_t o, std::size_t s) { dst[o] = src[s]; });

  Tape* tape = recording({&a});
  auto an = a.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an}, [an, o, permuted] {
    if (!an->requires_grad) return;
    ensure_grad(*an);
    double* ga = an->grad.data();
    const double* go = o->grad.data();
    for_each_permuted(o->shape, permuted, [&](std::size_t oi, std::size_t s) { ga[s] += go[oi]; });
  });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() >= 2, "transpose: needs rank >= 2");
  std::vector<std::size_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
  return transpose(a, perm);
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_size(shape) == a.size(),
          "reshape: " + shape_string(a.shape()) + " cannot become " + shape_string(shape));
  auto out = make_node(std::move(shape));
  out->value = a.values();
  Tape* tape = recording({&a});
  auto an = a.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an}, [an, o] {
    if (!an->requires_grad) return;
    ensure_grad(*an);
    for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  require(axis < first.size(), "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    require(p.rank() == first.size(), "concat: rank mismatch");
    for (std::size_t ax = 0; ax < first.size(); ++ax) {
      if (ax != axis) require(p.dim(ax) == first[ax], "concat: extent mismatch on axis " + std::to_string(ax));
    }
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= first[ax];
  std::size_t inner = 1;
  for (std::size_t ax = axis + 1; ax < first.size(); ++ax) inner *= first[ax];
  const std::size_t out_row = out_shape[axis] * inner;

  auto out = make_node(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t row = p.dim(axis) * inner;
    const double* src = p.values().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * row, row, out->value.data() + o * out_row + off);
    off += row;
  }

  Tape* tape = Tape::active();
  bool any = false;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    any = any || p.requires_grad();
    inputs.push_back(p.node());
  }
  if (!any) tape = nullptr;
  TensorNode* o = out.get();
  return finish(std::move(out), tape, inputs, [inputs, o, offsets, outer, inner, out_row, axis] {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      TensorNode& in = *inputs[i];
      if (!in.requires_grad) continue;
      ensure_grad(in);
      const std::size_t row = in.shape[axis] * inner;
      for (std::size_t r = 0; r < outer; ++r) {
        const double* g = o->grad.data() + r * out_row + offsets[i];
        double* dst = in.grad.data() + r * row;
        for (std::size_t j = 0; j < row; ++j) dst[j] += g[j];
      }
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t lo, std::size_t hi) {
  require(axis < a.rank(), "slice: axis out of range");
  require(lo < hi && hi <= a.dim(axis), "slice: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                                             ") invalid for extent " + std::to_string(a.dim(axis)));
  std::size_t outer = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= a.dim(ax);
  std::size_t inner = 1;
  for (std::size_t ax = axis + 1; ax < a.rank(); ++ax) inner *= a.dim(ax);
  Shape out_shape = a.shape();
  out_shape[axis] = hi - lo;
  const std::size_t in_row = a.dim(axis) * inner;
  const std::size_t out_row = (hi - lo) * inner;
  auto out = make_node(out_shape);
  const double* src = a.values().data();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * in_row + lo * inner, out_row, out->value.data() + o * out_row);

  Tape* tape = recording({&a});
  auto an = a.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an}, [an, o, outer, in_row, out_row, lo, inner] {
    if (!an->requires_grad) return;
    ensure_grad(*an);
    for (std::size_t r = 0; r < outer; ++r) {
      const double* g = o->grad.data() + r * out_row;
      double* dst = an->grad.data() + r * in_row + lo * inner;
      for (std::size_t j = 0; j < out_row; ++j) dst[j] += g[j];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast bc = check_broadcast(a, b, "add");
  auto out = make_node(a.shape());
  const auto& x = a.values();
  const auto& y = b.values();
  for (std::size_t o = 0; o < bc.outer; ++o) {
    for (std::size_t i = 0; i < bc.inner; ++i) out->value[o * bc.inner + i] = x[o * bc.inner + i] + y[i];
  }
  Tape* tape = recording({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an, bn}, [an, bn, o, bc] {
    if (an->requires_grad) {
      ensure_grad(*an);
      for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      for (std::size_t r = 0; r < bc.outer; ++r) {
        for (std::size_t i = 0; i < bc.inner; ++i) bn->grad[i] += o->grad[r * bc.inner + i];
      }
    }
  });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  const Broadcast bc = check_broadcast(a, b, "multiply");
  auto out = make_node(a.shape());
  const auto& x = a.values();
  const auto& y = b.values();
  for (std::size_t o = 0; o < bc.outer; ++o) {
    for (std::size_t i = 0; i < bc.inner; ++i) out->value[o * bc.inner + i] = x[o * bc.inner + i] * y[i];
  }
  Tape* tape = recording({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an, bn}, [an, bn, o, bc] {
    if (an->requires_grad) {
      ensure_grad(*an);
      for (std::size_t r = 0; r < bc.outer; ++r) {
        for (std::size_t i = 0; i < bc.inner; ++i) an->grad[r * bc.inner + i] += o->grad[r * bc.inner + i] * bn->value[i];
      }
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      for (std::size_t r = 0; r < bc.outer; ++r) {
        for (std::size_t i = 0; i < bc.inner; ++i) bn->grad[i] += o->grad[r * bc.inner + i] * an->value[r * bc.inner + i];
      }
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), "mean: axis out of range");
  std::size_t outer = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= a.dim(ax);
  std::size_t inner = 1;
  for (std::size_t ax = axis + 1; ax < a.rank(); ++ax) inner *= a.dim(ax);
  const std::size_t len = a.dim(axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  auto out = make_node(out_shape);
  const double* x = a.values().data();
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = out->value.data() + o * inner;
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = x + (o * len + l) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < inner; ++i) dst[i] *= inv;
  }
  Tape* tape = recording({&a});
  auto an = a.node();
  TensorNode* op = out.get();
  return finish(std::move(out), tape, {an}, [an, op, outer, inner, len, inv] {
    if (!an->requires_grad) return;
    ensure_grad(*an);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* g = op->grad.data() + o * inner;
      for (std::size_t l = 0; l < len; ++l) {
        double* dst = an->grad.data() + (o * len + l) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i] * inv;
      }
    }
  });
}

Tensor rowsoftmax(const Tensor& a) {
  require(a.rank() >= 1, "rowsoftmax: needs rank >= 1");
  const std::size_t cols = a.dim(a.rank() - 1);
  const std::size_t rows = a.size() / cols;
  auto out = make_node(a.shape());
  kernels::softmax_rows(rows, cols, a.values().data(), out->value.data());
  Tape* tape = recording({&a});
  auto an = a.node();
  TensorNode* o = out.get();
  return finish(std::move(out), tape, {an}, [an, o, rows, cols] {
    if (!an->requires_grad) return;
    ensure_grad(*an);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o->value.data() + r * cols;
      const double* gy = o->grad.data() + r * cols;
      double dotp = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dotp += gy[j] * y[j];
      double* gx = an->grad.data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dotp);
    }
  });
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

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor pow(const Tensor& a, double e) {
  return unary(a, [e](double x) { return std::pow(x, e); }, [e](double x, double) { return e * std::pow(x, e - 1.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---- composites -----------------------------------------------------------

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mean_all(const Tensor& a) { return mean(reshape(a, {a.size()}), 0); }

Tensor sum_all(const Tensor& a) { return scale(mean_all(a), static_cast<double>(a.size())); }

}  // namespace prefiner
