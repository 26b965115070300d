#include "lift3d/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "kernels.hpp"
#include "lift3d/errors.hpp"
#include "lift3d/linalg.hpp"

namespace lift3d {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

namespace detail {

namespace {
std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match value count");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad && g_grad_enabled;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::g_grad_enabled) {
  detail::g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = previous_; }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
}

namespace {

using detail::Node;

#ifndef NDEBUG
void debug_check_finite(const Node& node, const char* op) {
  for (double v : node.values)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
}
#define LIFT3D_DEBUG_FINITE(node, op) debug_check_finite(node, op)
#else
#define LIFT3D_DEBUG_FINITE(node, op) (void)0
#endif

Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Per-output-dim element strides into an input, 0 on broadcast dims.
std::vector<std::size_t> broadcast_strides(const Shape& out, const Shape& in) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t d = in.size() - 1 - i;
    const std::size_t od = out.size() - 1 - i;
    strides[od] = (in[d] == 1 && out[od] != 1) ? 0 : stride;
    stride *= in[d];
  }
  return strides;
}

// Walk all elements of `out`, calling f(linear, offa, offb).
template <class F>
void broadcast_walk(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t nd = out.size();
  const std::size_t total = shape_size(out);
  std::vector<std::size_t> idx(nd, 0);
  std::size_t offa = 0, offb = 0;
  for (std::size_t linear = 0; linear < total; ++linear) {
    f(linear, offa, offb);
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      offa += sa[d];
      offb += sb[d];
      if (idx[d] < out[d]) break;
      offa -= sa[d] * out[d];
      offb -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryLayout { kSame, kRowVector, kGeneric };

template <class FwdF, class BwdF>
Tensor make_binary(const Tensor& a, const Tensor& b, const char* name, FwdF fwd, BwdF bwd) {
  if (!a.defined() || !b.defined()) throw InvalidInputError(std::string(name) + ": undefined tensor");
  auto an = a.node();
  auto bn = b.node();

  BinaryLayout layout = BinaryLayout::kGeneric;
  if (an->shape == bn->shape) {
    layout = BinaryLayout::kSame;
  } else if (bn->shape.size() == 1 && an->shape.size() >= 2 &&
             bn->shape[0] == an->shape.back()) {
    layout = BinaryLayout::kRowVector;  // b broadcast over the last axis (bias add)
  }

  Shape out_shape = layout == BinaryLayout::kSame ? an->shape
                                                  : broadcast_shape(an->shape, bn->shape);
  std::vector<double> out(shape_size(out_shape));
  const double* av = an->values.data();
  const double* bv = bn->values.data();

  std::vector<std::size_t> sa, sb;
  switch (layout) {
    case BinaryLayout::kSame: {
      const std::size_t n = out.size();
#pragma omp parallel for schedule(static) if (n >= 1u << 15)
      for (long long i = 0; i < static_cast<long long>(n); ++i)
        out[static_cast<std::size_t>(i)] = fwd(av[i], bv[i]);
      break;
    }
    case BinaryLayout::kRowVector: {
      const std::size_t features = bn->shape[0];
      const std::size_t rows = out.size() / features;
#pragma omp parallel for schedule(static) if (out.size() >= 1u << 15)
      for (long long ii = 0; ii < static_cast<long long>(rows); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const double* arow = av + i * features;
        double* orow = out.data() + i * features;
        for (std::size_t f = 0; f < features; ++f) orow[f] = fwd(arow[f], bv[f]);
      }
      break;
    }
    case BinaryLayout::kGeneric: {
      sa = broadcast_strides(out_shape, an->shape);
      sb = broadcast_strides(out_shape, bn->shape);
      broadcast_walk(out_shape, sa, sb,
                     [&](std::size_t i, std::size_t oa, std::size_t ob) { out[i] = fwd(av[oa], bv[ob]); });
      break;
    }
  }

  auto node = detail::make_node(std::move(out_shape), std::move(out),
                                an->requires_grad || bn->requires_grad);
  LIFT3D_DEBUG_FINITE(*node, name);
  if (node->requires_grad) {
    node->parents = {an, bn};
    Node* araw = an.get();
    Node* braw = bn.get();
    node->backprop = [araw, braw, layout, sa, sb, bwd](Node& self) {
      const double* av = araw->values.data();
      const double* bv = braw->values.data();
      const double* go = self.grad.data();
      double* da = nullptr;
      double* db = nullptr;
      if (araw->requires_grad) {
        araw->ensure_grad();
        da = araw->grad.data();
      }
      if (braw->requires_grad) {
        braw->ensure_grad();
        db = braw->grad.data();
      }
      double scratch = 0.0;
      switch (layout) {
        case BinaryLayout::kSame:
          for (std::size_t i = 0; i < self.values.size(); ++i) {
            scratch = 0.0;
            bwd(go[i], av[i], bv[i], da ? da[i] : scratch, db ? db[i] : scratch);
          }
          break;
        case BinaryLayout::kRowVector: {
          const std::size_t features = braw->values.size();
          const std::size_t rows = self.values.size() / features;
          for (std::size_t i = 0; i < rows; ++i) {
            const double* grow = go + i * features;
            const double* arow = av + i * features;
            double* drow = da ? da + i * features : nullptr;
            for (std::size_t f = 0; f < features; ++f) {
              scratch = 0.0;
              bwd(grow[f], arow[f], bv[f], drow ? drow[f] : scratch, db ? db[f] : scratch);
            }
          }
          break;
        }
        case BinaryLayout::kGeneric:
          broadcast_walk(self.shape, sa, sb, [&](std::size_t i, std::size_t oa, std::size_t ob) {
            scratch = 0.0;
            bwd(go[i], av[oa], bv[ob], da ? da[oa] : scratch, db ? db[ob] : scratch);
          });
          break;
      }
    };
  }
  return wrap(node);
}

template <class FwdF, class BwdF>
Tensor make_unary(const Tensor& x, const char* name, FwdF fwd, BwdF bwd) {
  if (!x.defined()) throw InvalidInputError(std::string(name) + ": undefined tensor");
  auto xn = x.node();
  std::vector<double> out(xn->values.size());
  const double* xv = xn->values.data();
  const std::size_t n = out.size();
#pragma omp parallel for schedule(static) if (n >= 1u << 15)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    out[static_cast<std::size_t>(i)] = fwd(xv[i]);

  auto node = detail::make_node(xn->shape, std::move(out), xn->requires_grad);
  LIFT3D_DEBUG_FINITE(*node, name);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    node->backprop = [xraw, bwd](Node& self) {
      xraw->ensure_grad();
      const double* xv = xraw->values.data();
      const double* yv = self.values.data();
      const double* go = self.grad.data();
      double* dx = xraw->grad.data();
      for (std::size_t i = 0; i < self.values.size(); ++i) dx[i] += bwd(go[i], xv[i], yv[i]);
    };
  }
  return wrap(node);
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return wrap(detail::make_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  return wrap(detail::make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(shape_size(shape), 0.0);
  return constant(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(shape_size(shape), value);
  return constant(std::move(shape), std::move(v));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor is not scalar");
  return node_->values[0];
}

Tensor add(const Tensor& a, const Tensor& b) {
  return make_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double go, double, double, double& da, double& db) {
        da += go;
        db += go;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return make_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double go, double, double, double& da, double& db) {
        da += go;
        db -= go;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return make_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double go, double x, double y, double& da, double& db) {
        da += go * y;
        db += go * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values())
    if (y == 0.0) throw DomainError("div: division by zero");
  return make_binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double go, double x, double y, double& da, double& db) {
        da += go / y;
        db -= go * x / (y * y);
      });
}

Tensor neg(const Tensor& x) {
  return make_unary(
      x, "neg", [](double v) { return -v; },
      [](double go, double, double) { return -go; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values())
    if (v <= 0.0) throw DomainError("log: input must be positive");
  return make_unary(
      x, "log", [](double v) { return std::log(v); },
      [](double go, double xv, double) { return go / xv; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw DomainError("sqrt: input must be non-negative");
  return make_unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double go, double, double yv) { return go * 0.5 / yv; });
}

Tensor relu(const Tensor& x) {
  return make_unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double go, double xv, double) { return xv > 0.0 ? go : 0.0; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return make_unary(
      x, "clamp_min", [floor](double v) { return v > floor ? v : floor; },
      [floor](double go, double xv, double) { return xv > floor ? go : 0.0; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return make_unary(
      x, "add_scalar", [s](double v) { return v + s; },
      [](double go, double, double) { return go; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return make_unary(
      x, "mul_scalar", [s](double v) { return v * s; },
      [s](double go, double, double) { return go * s; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto an = a.node();
  auto bn = b.node();
  const Shape& sa = an->shape;
  const Shape& sb = bn->shape;
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  bool b_shared = false;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0];
    k = sa[1];
    n = sb[1];
    if (sb[0] != k) throw ShapeError("matmul: inner dimensions differ");
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0];
    m = sa[1];
    k = sa[2];
    n = sb[2];
    if (sb[0] != batch || sb[1] != k) throw ShapeError("matmul: batched shapes incompatible");
    out_shape = {batch, m, n};
  } else if (sa.size() == 3 && sb.size() == 2) {
    batch = sa[0];
    m = sa[1];
    k = sa[2];
    n = sb[1];
    b_shared = true;
    if (sb[0] != k) throw ShapeError("matmul: inner dimensions differ");
    out_shape = {batch, m, n};
  } else {
    throw ShapeError("matmul: unsupported ranks " + shape_str(sa) + " @ " + shape_str(sb));
  }

  // A shared right matrix makes the batched product one flat gemm over the
  // stacked rows; true batched products fall back to per-sample gemms.
  const std::size_t row_batches = b_shared ? 1 : batch;
  const std::size_t rows = b_shared ? batch * m : m;

  std::vector<double> out(batch * m * n);
  for (std::size_t bi = 0; bi < row_batches; ++bi) {
    const double* ap = an->values.data() + bi * rows * k;
    const double* bp = bn->values.data() + bi * k * n;
    kernels::gemm_nn(ap, bp, out.data() + bi * rows * n, rows, k, n, false);
  }

  auto node = detail::make_node(std::move(out_shape), std::move(out),
                                an->requires_grad || bn->requires_grad);
  LIFT3D_DEBUG_FINITE(*node, "matmul");
  if (node->requires_grad) {
    node->parents = {an, bn};
    Node* araw = an.get();
    Node* braw = bn.get();
    node->backprop = [araw, braw, row_batches, rows, k, n](Node& self) {
      const double* go = self.grad.data();
      if (araw->requires_grad) {
        araw->ensure_grad();
        for (std::size_t bi = 0; bi < row_batches; ++bi) {
          const double* gop = go + bi * rows * n;
          const double* bp = braw->values.data() + bi * k * n;
          kernels::gemm_nt(gop, bp, araw->grad.data() + bi * rows * k, rows, n, k, true);
        }
      }
      if (braw->requires_grad) {
        braw->ensure_grad();
        for (std::size_t bi = 0; bi < row_batches; ++bi) {
          const double* gop = go + bi * rows * n;
          const double* ap = araw->values.data() + bi * rows * k;
          kernels::gemm_tn(ap, gop, braw->grad.data() + bi * k * n, k, rows, n, true);
        }
      }
    };
  }
  return wrap(node);
}

Tensor transpose_last(const Tensor& x) {
  auto xn = x.node();
  if (xn->shape.size() < 2) throw ShapeError("transpose_last: need at least 2 dims");
  const std::size_t nd = xn->shape.size();
  const std::size_t m = xn->shape[nd - 2];
  const std::size_t n = xn->shape[nd - 1];
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < nd; ++i) batch *= xn->shape[i];

  Shape out_shape = xn->shape;
  std::swap(out_shape[nd - 2], out_shape[nd - 1]);
  std::vector<double> out(xn->values.size());
  const double* xv = xn->values.data();
#pragma omp parallel for schedule(static) if (batch * m * n >= 1u << 15)
  for (long long bb = 0; bb < static_cast<long long>(batch); ++bb) {
    const std::size_t bi = static_cast<std::size_t>(bb);
    const double* src = xv + bi * m * n;
    double* dst = out.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }

  auto node = detail::make_node(std::move(out_shape), std::move(out), xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    node->backprop = [xraw, batch, m, n](Node& self) {
      xraw->ensure_grad();
      const double* go = self.grad.data();
      double* dx = xraw->grad.data();
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* src = go + bi * m * n;
        double* dst = dx + bi * m * n;
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t i = 0; i < m; ++i) dst[i * n + j] += src[j * m + i];
      }
    };
  }
  return wrap(node);
}

Tensor reshape(const Tensor& x, Shape shape) {
  auto xn = x.node();
  if (shape_size(shape) != xn->values.size())
    throw ShapeError("reshape: size mismatch for " + shape_str(shape));
  auto node = detail::make_node(std::move(shape), xn->values, xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    node->backprop = [xraw](Node& self) {
      xraw->ensure_grad();
      const double* go = self.grad.data();
      double* dx = xraw->grad.data();
      for (std::size_t i = 0; i < self.values.size(); ++i) dx[i] += go[i];
    };
  }
  return wrap(node);
}

namespace {

// outer/inner split around `axis`.
void axis_split(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  auto an = a.node();
  auto bn = b.node();
  if (an->shape.size() != bn->shape.size()) throw ShapeError("concat: rank mismatch");
  if (axis >= an->shape.size()) throw InvalidInputError("concat: axis out of range");
  for (std::size_t i = 0; i < an->shape.size(); ++i)
    if (i != axis && an->shape[i] != bn->shape[i])
      throw ShapeError("concat: shapes differ outside axis");

  const std::size_t da = an->shape[axis];
  const std::size_t db = bn->shape[axis];
  std::size_t outer, inner;
  axis_split(an->shape, axis, outer, inner);

  Shape out_shape = an->shape;
  out_shape[axis] = da + db;
  std::vector<double> out(shape_size(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(an->values.data() + o * da * inner, da * inner,
                out.data() + o * (da + db) * inner);
    std::copy_n(bn->values.data() + o * db * inner, db * inner,
                out.data() + o * (da + db) * inner + da * inner);
  }

  auto node = detail::make_node(std::move(out_shape), std::move(out),
                                an->requires_grad || bn->requires_grad);
  if (node->requires_grad) {
    node->parents = {an, bn};
    Node* araw = an.get();
    Node* braw = bn.get();
    node->backprop = [araw, braw, outer, inner, da, db](Node& self) {
      const double* go = self.grad.data();
      if (araw->requires_grad) {
        araw->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = go + o * (da + db) * inner;
          double* dst = araw->grad.data() + o * da * inner;
          for (std::size_t i = 0; i < da * inner; ++i) dst[i] += src[i];
        }
      }
      if (braw->requires_grad) {
        braw->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = go + o * (da + db) * inner + da * inner;
          double* dst = braw->grad.data() + o * db * inner;
          for (std::size_t i = 0; i < db * inner; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return wrap(node);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  auto xn = x.node();
  if (axis >= xn->shape.size()) throw InvalidInputError("slice: axis out of range");
  const std::size_t dim = xn->shape[axis];
  if (start + len > dim) throw InvalidInputError("slice: range out of bounds");
  std::size_t outer, inner;
  axis_split(xn->shape, axis, outer, inner);

  Shape out_shape = xn->shape;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xn->values.data() + (o * dim + start) * inner, len * inner,
                out.data() + o * len * inner);

  auto node = detail::make_node(std::move(out_shape), std::move(out), xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    node->backprop = [xraw, outer, inner, dim, start, len](Node& self) {
      xraw->ensure_grad();
      const double* go = self.grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        double* dst = xraw->grad.data() + (o * dim + start) * inner;
        const double* src = go + o * len * inner;
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    };
  }
  return wrap(node);
}

namespace {

Tensor reduce_axis(const Tensor& x, std::size_t axis, bool keepdim, bool mean) {
  auto xn = x.node();
  if (axis >= xn->shape.size()) throw InvalidInputError("reduce: axis out of range");
  const std::size_t dim = xn->shape[axis];
  std::size_t outer, inner;
  axis_split(xn->shape, axis, outer, inner);

  Shape out_shape;
  for (std::size_t i = 0; i < xn->shape.size(); ++i) {
    if (i == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(xn->shape[i]);
    }
  }
  if (out_shape.empty()) out_shape = {1};

  const double scale = mean ? 1.0 / static_cast<double>(dim) : 1.0;
  std::vector<double> out(outer * inner, 0.0);
  const double* xv = xn->values.data();
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = out.data() + o * inner;
    for (std::size_t a = 0; a < dim; ++a) {
      const double* src = xv + (o * dim + a) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  if (mean)
    for (double& v : out) v *= scale;

  auto node = detail::make_node(std::move(out_shape), std::move(out), xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    node->backprop = [xraw, outer, inner, dim, scale](Node& self) {
      xraw->ensure_grad();
      const double* go = self.grad.data();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = go + o * inner;
        for (std::size_t a = 0; a < dim; ++a) {
          double* dst = xraw->grad.data() + (o * dim + a) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
        }
      }
    };
  }
  return wrap(node);
}

}  // namespace

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  return reduce_axis(x, axis, keepdim, true);
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  return reduce_axis(x, axis, keepdim, false);
}

Tensor sum_all(const Tensor& x) {
  auto xn = x.node();
  double acc = 0.0;
  for (double v : xn->values) acc += v;
  auto node = detail::make_node({1}, {acc}, xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    node->backprop = [xraw](Node& self) {
      xraw->ensure_grad();
      const double go = self.grad[0];
      for (double& g : xraw->grad) g += go;
    };
  }
  return wrap(node);
}

Tensor gather_axis(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices) {
  auto xn = x.node();
  if (axis >= xn->shape.size()) throw InvalidInputError("gather_axis: axis out of range");
  const std::size_t dim = xn->shape[axis];
  for (std::size_t idx : indices)
    if (idx >= dim) throw InvalidInputError("gather_axis: index out of range");
  std::size_t outer, inner;
  axis_split(xn->shape, axis, outer, inner);

  Shape out_shape = xn->shape;
  out_shape[axis] = indices.size();
  std::vector<double> out(outer * indices.size() * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < indices.size(); ++j)
      std::copy_n(xn->values.data() + (o * dim + indices[j]) * inner, inner,
                  out.data() + (o * indices.size() + j) * inner);

  auto node = detail::make_node(std::move(out_shape), std::move(out), xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    const std::vector<std::size_t> idx = indices;
    node->backprop = [xraw, outer, inner, dim, idx](Node& self) {
      xraw->ensure_grad();
      const double* go = self.grad.data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < idx.size(); ++j) {
          double* dst = xraw->grad.data() + (o * dim + idx[j]) * inner;
          const double* src = go + (o * idx.size() + j) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    };
  }
  return wrap(node);
}

Tensor detach(const Tensor& x) {
  return Tensor::constant(x.shape(), x.values());
}

Tensor singular_values(const Tensor& x) {
  auto xn = x.node();
  if (xn->shape.size() != 2) throw ShapeError("singular_values: tensor must be 2D");
  const std::size_t m = xn->shape[0];
  const std::size_t n = xn->shape[1];

  SvdResult f = svd(Matrix(m, n, xn->values));
  const std::size_t r = f.sigma.size();

  auto node = detail::make_node({r}, f.sigma, xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    Node* xraw = xn.get();
    // Saved factors; valid for losses symmetric in the singular values.
    auto u = std::make_shared<Matrix>(std::move(f.u));
    auto v = std::make_shared<Matrix>(std::move(f.v));
    node->backprop = [xraw, u, v, m, n, r](Node& self) {
      xraw->ensure_grad();
      const double* gs = self.grad.data();
      // dE += (U diag(g)) V^T
      std::vector<double> ug(m * r);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < r; ++t) ug[i * r + t] = (*u)(i, t) * gs[t];
      kernels::gemm_nt(ug.data(), v->data.data(), xraw->grad.data(), m, r, n, true);
    };
  }
  return wrap(node);
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, double momentum,
                 double eps, Mode mode) {
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  if (xn->shape.size() < 2) throw ShapeError("batchnorm: input must be (..., F)");
  const std::size_t features = xn->shape.back();
  const std::size_t batch = xn->values.size() / features;
  if (gn->values.size() != features || bn->values.size() != features)
    throw ShapeError("batchnorm: scale/shift size mismatch");
  if (running_mean.size() != features || running_var.size() != features)
    throw ShapeError("batchnorm: running stat size mismatch");
  if (mode == Mode::kTrain && batch < 2)
    throw InvalidInputError("batchnorm: train mode needs batch size >= 2");

  std::vector<double> out(batch * features);
  const double* xv = xn->values.data();
  const double* gv = gn->values.data();
  const double* bv = bn->values.data();

  auto xhat = std::make_shared<std::vector<double>>(batch * features);
  auto invstd = std::make_shared<std::vector<double>>(features);

  // Reductions scan rows contiguously (serial, deterministic); only the
  // per-element passes fan out across rows.
  std::vector<double> mean(features, 0.0);
  if (mode == Mode::kTrain) {
    std::vector<double> var(features, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* row = xv + i * features;
      for (std::size_t f = 0; f < features; ++f) mean[f] += row[f];
    }
    for (std::size_t f = 0; f < features; ++f) mean[f] /= static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* row = xv + i * features;
      for (std::size_t f = 0; f < features; ++f) {
        const double d = row[f] - mean[f];
        var[f] += d * d;
      }
    }
    for (std::size_t f = 0; f < features; ++f) var[f] /= static_cast<double>(batch);
    for (std::size_t f = 0; f < features; ++f) (*invstd)[f] = 1.0 / std::sqrt(var[f] + eps);

    double* rm = running_mean.mutable_values().data();
    double* rv = running_var.mutable_values().data();
    for (std::size_t f = 0; f < features; ++f) {
      // Running stats use the unbiased variance, per common convention.
      const double unbiased =
          var[f] * static_cast<double>(batch) / static_cast<double>(batch - 1);
      rm[f] = (1.0 - momentum) * rm[f] + momentum * mean[f];
      rv[f] = (1.0 - momentum) * rv[f] + momentum * unbiased;
    }
  } else {
    const double* rm = running_mean.values().data();
    const double* rv = running_var.values().data();
    for (std::size_t f = 0; f < features; ++f) {
      mean[f] = rm[f];
      (*invstd)[f] = 1.0 / std::sqrt(rv[f] + eps);
    }
  }
  {
    const double* istd = invstd->data();
    const double* mu = mean.data();
    double* xh = xhat->data();
#pragma omp parallel for schedule(static) if (batch * features >= 1u << 14)
    for (long long ii = 0; ii < static_cast<long long>(batch); ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      const double* row = xv + i * features;
      double* hrow = xh + i * features;
      double* orow = out.data() + i * features;
      for (std::size_t f = 0; f < features; ++f) {
        const double h = (row[f] - mu[f]) * istd[f];
        hrow[f] = h;
        orow[f] = gv[f] * h + bv[f];
      }
    }
  }

  auto node = detail::make_node(xn->shape, std::move(out),
                                xn->requires_grad || gn->requires_grad || bn->requires_grad);
  LIFT3D_DEBUG_FINITE(*node, "batchnorm");
  if (node->requires_grad) {
    node->parents = {xn, gn, bn};
    Node* xraw = xn.get();
    Node* graw = gn.get();
    Node* braw = bn.get();
    const bool train = mode == Mode::kTrain;
    node->backprop = [xraw, graw, braw, xhat, invstd, batch, features, train](Node& self) {
      const double* go = self.grad.data();
      const double* gv = graw->values.data();
      const double* xh = xhat->data();
      if (graw->requires_grad) graw->ensure_grad();
      if (braw->requires_grad) braw->ensure_grad();
      if (xraw->requires_grad) xraw->ensure_grad();

      std::vector<double> sum_dy(features, 0.0), sum_dy_xhat(features, 0.0);
      for (std::size_t i = 0; i < batch; ++i) {
        const double* grow = go + i * features;
        const double* hrow = xh + i * features;
        for (std::size_t f = 0; f < features; ++f) {
          sum_dy[f] += grow[f];
          sum_dy_xhat[f] += grow[f] * hrow[f];
        }
      }
      if (graw->requires_grad)
        for (std::size_t f = 0; f < features; ++f) graw->grad[f] += sum_dy_xhat[f];
      if (braw->requires_grad)
        for (std::size_t f = 0; f < features; ++f) braw->grad[f] += sum_dy[f];
      if (xraw->requires_grad) {
        const double* istd = invstd->data();
        const double inv_b = 1.0 / static_cast<double>(batch);
#pragma omp parallel for schedule(static) if (batch * features >= 1u << 14)
        for (long long ii = 0; ii < static_cast<long long>(batch); ++ii) {
          const std::size_t i = static_cast<std::size_t>(ii);
          const double* grow = go + i * features;
          const double* hrow = xh + i * features;
          double* drow = xraw->grad.data() + i * features;
          if (train) {
            for (std::size_t f = 0; f < features; ++f)
              drow[f] += gv[f] * istd[f] *
                         (grow[f] - inv_b * sum_dy[f] - hrow[f] * inv_b * sum_dy_xhat[f]);
          } else {
            for (std::size_t f = 0; f < features; ++f) drow[f] += gv[f] * istd[f] * grow[f];
          }
        }
      }
    };
  }
  return wrap(node);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw InvalidInputError("backward: undefined tensor");
  if (loss.size() != 1) throw InvalidInputError("backward: loss must be scalar");
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Reachable requires-grad nodes, then reverse recording order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* node = stack.back();
    stack.pop_back();
    order.push_back(node);
    for (const auto& parent : node->parents) {
      if (parent->requires_grad && seen.insert(parent.get()).second)
        stack.push_back(parent.get());
    }
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (Node* node : order) {
    if (!node->backprop) continue;
    node->backprop(*node);
    // Interior buffers are dead once their node has propagated: children ran
    // earlier (reverse recording order) and parents only read their own
    // storage. Releasing here keeps the step's working set small. The root
    // keeps its value so the loss stays readable.
    if (node != root.get()) {
      std::vector<double>().swap(node->values);
    }
    std::vector<double>().swap(node->grad);
    node->backprop = nullptr;
  }
}

}  // namespace lift3d
