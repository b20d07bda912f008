#include "indcomm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "indcomm/kernels.hpp"

namespace indcomm::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

std::string shapes_of(const Tensor& a, const Tensor& b) {
  return to_string(a.shape()) + " vs " + to_string(b.shape());
}

// Splits a shape around `axis` into outer * dim * inner.
struct AxisView {
  std::size_t outer = 1;
  std::size_t dim = 0;
  std::size_t inner = 1;
};

AxisView split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    shape_error(op, "axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.dim = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : data_(std::make_shared<Storage>()) { data_->shape = {0}; }

Tensor::Tensor(std::vector<double> values, Shape shape, bool requires_grad)
    : data_(std::make_shared<Storage>()) {
  if (ad::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  data_->shape = std::move(shape);
  data_->values = std::move(values);
  data_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Tensor(std::vector<double>(n, value), std::move(shape), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  }
  return data_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  }
  return data_->values[0];
}

void Tensor::zero_grad() { std::fill(data_->grad.begin(), data_->grad.end(), 0.0); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(data_->values, data_->shape, requires_grad);
}

Tensor tensor(std::vector<double> values, Shape shape, bool requires_grad) {
  return Tensor(std::move(values), std::move(shape), requires_grad);
}

Tensor detach(const Tensor& t) { return Tensor(t.data_->values, t.data_->shape, false); }

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kMatMulBT: return "matmul_bt";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kReduceMax: return "reduce_max_with_index";
    case OpKind::kGather: return "gather";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tape bookkeeping

std::ptrdiff_t Tape::track(const Tensor& t) {
  if (!recording() || !t.tracked()) return -1;
  if (!t.is_leaf()) {
    if (t.tape_ != this) {
      throw std::logic_error("tensor is tracked on a different tape");
    }
    return t.node_;
  }
  const Storage* key = t.data_.get();
  if (auto it = leaf_nodes_.find(key); it != leaf_nodes_.end()) {
    return static_cast<std::ptrdiff_t>(it->second);
  }
  auto storage = t.data_;
  Node node{OpKind::kLeaf, {}, storage, [storage](Tape& tape, const double* g) {
              (void)tape;
              auto& grad = storage->grad;
              if (grad.empty()) grad.assign(storage->values.size(), 0.0);
              for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
            }};
  nodes_.push_back(std::move(node));
  const std::size_t idx = nodes_.size() - 1;
  leaf_nodes_.emplace(key, idx);
  return static_cast<std::ptrdiff_t>(idx);
}

double* Tape::adjoint(std::ptrdiff_t node) {
  if (node < 0) return nullptr;
  auto& buf = adjoints_[static_cast<std::size_t>(node)];
  if (buf.empty()) buf.assign(nodes_[static_cast<std::size_t>(node)].out->values.size(), 0.0);
  return buf.data();
}

Tensor Tape::emit(OpKind kind, Shape shape, std::vector<double> values,
                  std::vector<std::ptrdiff_t> parents, BackwardFn backward) {
  const bool any_tracked =
      std::any_of(parents.begin(), parents.end(), [](std::ptrdiff_t p) { return p >= 0; });
  Tensor out(std::move(values), std::move(shape), false);
  if (!recording() || !any_tracked) return out;
  out.data_->requires_grad = true;
  nodes_.push_back(Node{kind, std::move(parents), out.data_, std::move(backward)});
  out.tape_ = this;
  out.node_ = static_cast<std::ptrdiff_t>(nodes_.size() - 1);
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  if (!loss.tracked()) return;  // constant loss: every gradient is zero
  if (loss.is_leaf()) {
    // d loss / d loss for a bare parameter.
    auto& grad = loss.data_->grad;
    if (grad.empty()) grad.assign(1, 0.0);
    grad[0] += 1.0;
    return;
  }
  if (loss.tape_ != this) throw std::logic_error("backward: loss belongs to a different tape");

  adjoints_.assign(nodes_.size(), {});
  const auto root = static_cast<std::size_t>(loss.node_);
  adjoints_[root].assign(1, 1.0);
  for (std::size_t n = root + 1; n-- > 0;) {
    if (adjoints_[n].empty()) continue;
    nodes_[n].backward(*this, adjoints_[n].data());
    adjoints_[n] = {};
  }
  adjoints_.clear();
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", shapes_of(a, b));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  kernels::gemm_nn(m, n, k, a.values().data(), b.values().data(), c.data());
  const auto pa = track(a), pb = track(b);
  auto sa = a.data_, sb = b.data_;
  return emit(OpKind::kMatMul, {m, n}, std::move(c), {pa, pb},
              [=](Tape& tape, const double* g) {
                if (double* ga = tape.adjoint(pa)) {
                  kernels::gemm_nt(m, k, n, g, sb->values.data(), ga);
                }
                if (double* gb = tape.adjoint(pb)) {
                  kernels::gemm_tn(k, n, m, sa->values.data(), g, gb);
                }
              });
}

Tensor Tape::matmul_bt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    shape_error("matmul_bt", shapes_of(a, b));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> c(m * n, 0.0);
  kernels::gemm_nt(m, n, k, a.values().data(), b.values().data(), c.data());
  const auto pa = track(a), pb = track(b);
  auto sa = a.data_, sb = b.data_;
  return emit(OpKind::kMatMulBT, {m, n}, std::move(c), {pa, pb},
              [=](Tape& tape, const double* g) {
                if (double* ga = tape.adjoint(pa)) {
                  kernels::gemm_nn(m, k, n, g, sb->values.data(), ga);
                }
                if (double* gb = tape.adjoint(pb)) {
                  kernels::gemm_tn(n, k, m, g, sa->values.data(), gb);
                }
              });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const auto pa = track(a), pb = track(b);
  const std::size_t n = a.numel();
  std::vector<double> out(a.values().begin(), a.values().end());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < n; ++i) out[i] += b.values()[i];
    return emit(OpKind::kAdd, a.shape(), std::move(out), {pa, pb},
                [=](Tape& tape, const double* g) {
                  for (auto p : {pa, pb}) {
                    if (double* gp = tape.adjoint(p)) {
                      for (std::size_t i = 0; i < n; ++i) gp[i] += g[i];
                    }
                  }
                });
  }
  // Row-wise bias: b is a vector matching the last dimension of a.
  if (b.rank() != 1 || a.rank() < 2 || a.shape().back() != b.numel()) {
    shape_error("add", shapes_of(a, b));
  }
  const std::size_t width = b.numel();
  const std::size_t rows = width == 0 ? 0 : n / width;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] += b.values()[j];
  }
  return emit(OpKind::kAdd, a.shape(), std::move(out), {pa, pb},
              [=](Tape& tape, const double* g) {
                if (double* ga = tape.adjoint(pa)) {
                  for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                }
                if (double* gb = tape.adjoint(pb)) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < width; ++j) gb[j] += g[r * width + j];
                  }
                }
              });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", shapes_of(a, b));
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i] - b.values()[i];
  const auto pa = track(a), pb = track(b);
  return emit(OpKind::kSub, a.shape(), std::move(out), {pa, pb},
              [=](Tape& tape, const double* g) {
                if (double* ga = tape.adjoint(pa)) {
                  for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                }
                if (double* gb = tape.adjoint(pb)) {
                  for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
                }
              });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", shapes_of(a, b));
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i] * b.values()[i];
  const auto pa = track(a), pb = track(b);
  auto sa = a.data_, sb = b.data_;
  return emit(OpKind::kMul, a.shape(), std::move(out), {pa, pb},
              [=](Tape& tape, const double* g) {
                if (double* ga = tape.adjoint(pa)) {
                  for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * sb->values[i];
                }
                if (double* gb = tape.adjoint(pb)) {
                  for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * sa->values[i];
                }
              });
}

Tensor Tape::scale(const Tensor& a, double factor) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i] * factor;
  const auto pa = track(a);
  return emit(OpKind::kScale, a.shape(), std::move(out), {pa},
              [=](Tape& tape, const double* g) {
                double* ga = tape.adjoint(pa);
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * factor;
              });
}

Tensor Tape::relu(const Tensor& t) {
  const std::size_t n = t.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = t.values()[i] > 0.0 ? t.values()[i] : 0.0;
  const auto pt = track(t);
  auto st = t.data_;
  return emit(OpKind::kRelu, t.shape(), std::move(out), {pt},
              [=](Tape& tape, const double* g) {
                double* gt = tape.adjoint(pt);
                for (std::size_t i = 0; i < n; ++i) {
                  if (st->values[i] > 0.0) gt[i] += g[i];
                }
              });
}

Tensor Tape::tanh(const Tensor& t) {
  const std::size_t n = t.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(t.values()[i]);
  const auto pt = track(t);
  Tensor result = emit(OpKind::kTanh, t.shape(), std::move(out), {pt}, nullptr);
  if (result.tracked()) {
    auto so = result.data_;
    nodes_.back().backward = [=](Tape& tape, const double* g) {
      double* gt = tape.adjoint(pt);
      for (std::size_t i = 0; i < n; ++i) {
        const double y = so->values[i];
        gt[i] += g[i] * (1.0 - y * y);
      }
    };
  }
  return result;
}

Tensor Tape::sigmoid(const Tensor& t) {
  const std::size_t n = t.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = t.values()[i];
    // Branches keep exp() from overflowing for large |x|.
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  const auto pt = track(t);
  Tensor result = emit(OpKind::kSigmoid, t.shape(), std::move(out), {pt}, nullptr);
  if (result.tracked()) {
    auto so = result.data_;
    nodes_.back().backward = [=](Tape& tape, const double* g) {
      double* gt = tape.adjoint(pt);
      for (std::size_t i = 0; i < n; ++i) {
        const double y = so->values[i];
        gt[i] += g[i] * y * (1.0 - y);
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Structural

Tensor Tape::concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor Tape::concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const Shape& ref = parts.front().shape();
  const AxisView base = split_axis(ref, axis, "concat");
  std::vector<std::size_t> dims;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) ok = false;
    }
    if (!ok) shape_error("concat", to_string(ref) + " vs " + to_string(s) + " on axis " + std::to_string(axis));
    dims.push_back(s[axis]);
    total += s[axis];
  }
  const std::size_t outer = base.outer, inner = base.inner;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    const std::size_t chunk = dims[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * chunk, chunk, out.data() + (o * total + offset) * inner);
    }
    offset += dims[k];
  }
  std::vector<std::ptrdiff_t> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) parents.push_back(track(p));
  Shape shape = ref;
  shape[axis] = total;
  return emit(OpKind::kConcat, std::move(shape), std::move(out), parents,
              [=](Tape& tape, const double* g) {
                std::size_t off = 0;
                for (std::size_t k = 0; k < parents.size(); ++k) {
                  const std::size_t chunk = dims[k] * inner;
                  if (double* gp = tape.adjoint(parents[k])) {
                    for (std::size_t o = 0; o < outer; ++o) {
                      const double* src = g + (o * total + off) * inner;
                      for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
                    }
                  }
                  off += dims[k];
                }
              });
}

Tensor Tape::slice(const Tensor& t, std::size_t begin, std::size_t end, std::size_t axis) {
  const AxisView v = split_axis(t.shape(), axis, "slice");
  if (begin > end || end > v.dim) {
    shape_error("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") outside " + to_string(t.shape()) + " on axis " + std::to_string(axis));
  }
  const std::size_t len = end - begin;
  const std::size_t chunk = len * v.inner;
  std::vector<double> out(v.outer * chunk);
  const auto src = t.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(src.data() + (o * v.dim + begin) * v.inner, chunk, out.data() + o * chunk);
  }
  Shape shape = t.shape();
  shape[axis] = len;
  const auto pt = track(t);
  return emit(OpKind::kSlice, std::move(shape), std::move(out), {pt},
              [=](Tape& tape, const double* g) {
                double* gt = tape.adjoint(pt);
                for (std::size_t o = 0; o < v.outer; ++o) {
                  double* dst = gt + (o * v.dim + begin) * v.inner;
                  for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[o * chunk + i];
                }
              });
}

MaxResult Tape::reduce_max_with_index(const Tensor& t, std::size_t axis) {
  const AxisView v = split_axis(t.shape(), axis, "reduce_max_with_index");
  if (v.dim == 0) shape_error("reduce_max_with_index", "empty reduction axis in " + to_string(t.shape()));
  const std::size_t n_out = v.outer * v.inner;
  std::vector<double> out(n_out);
  std::vector<std::size_t> idx(n_out);
  const auto src = t.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      std::size_t best = 0;
      double best_v = src[o * v.dim * v.inner + i];
      for (std::size_t d = 1; d < v.dim; ++d) {
        const double x = src[(o * v.dim + d) * v.inner + i];
        if (x > best_v) {
          best_v = x;
          best = d;
        }
      }
      out[o * v.inner + i] = best_v;
      idx[o * v.inner + i] = best;
    }
  }
  const auto pt = track(t);
  Tensor values = emit(OpKind::kReduceMax, drop_axis(t.shape(), axis), std::move(out), {pt},
                       [=](Tape& tape, const double* g) {
                         double* gt = tape.adjoint(pt);
                         for (std::size_t o = 0; o < v.outer; ++o) {
                           for (std::size_t i = 0; i < v.inner; ++i) {
                             const std::size_t k = o * v.inner + i;
                             gt[(o * v.dim + idx[k]) * v.inner + i] += g[k];
                           }
                         }
                       });
  return {std::move(values), std::move(idx)};
}

Tensor Tape::gather(const Tensor& t, std::span<const std::size_t> indices, std::size_t axis) {
  const AxisView v = split_axis(t.shape(), axis, "gather");
  const std::size_t n_out = v.outer * v.inner;
  if (indices.size() != n_out) {
    shape_error("gather", std::to_string(indices.size()) + " indices for " + to_string(t.shape()) +
                              " on axis " + std::to_string(axis));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(n_out);
  const auto src = t.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t k = o * v.inner + i;
      if (idx[k] >= v.dim) {
        shape_error("gather", "index " + std::to_string(idx[k]) + " out of range for " + to_string(t.shape()));
      }
      out[k] = src[(o * v.dim + idx[k]) * v.inner + i];
    }
  }
  const auto pt = track(t);
  return emit(OpKind::kGather, drop_axis(t.shape(), axis), std::move(out), {pt},
              [=](Tape& tape, const double* g) {
                double* gt = tape.adjoint(pt);
                for (std::size_t o = 0; o < v.outer; ++o) {
                  for (std::size_t i = 0; i < v.inner; ++i) {
                    const std::size_t k = o * v.inner + i;
                    gt[(o * v.dim + idx[k]) * v.inner + i] += g[k];
                  }
                }
              });
}

Tensor Tape::sum(const Tensor& t) {
  const auto vals = t.values();
  const double s = std::accumulate(vals.begin(), vals.end(), 0.0);
  const std::size_t n = t.numel();
  const auto pt = track(t);
  return emit(OpKind::kSum, {1}, {s}, {pt}, [=](Tape& tape, const double* g) {
    double* gt = tape.adjoint(pt);
    for (std::size_t i = 0; i < n; ++i) gt[i] += g[0];
  });
}

Tensor Tape::mean(const Tensor& t) {
  const std::size_t n = t.numel();
  if (n == 0) shape_error("mean", "empty tensor");
  const auto vals = t.values();
  const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(n);
  const auto pt = track(t);
  return emit(OpKind::kMean, {1}, {m}, {pt}, [=](Tape& tape, const double* g) {
    double* gt = tape.adjoint(pt);
    const double share = g[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) gt[i] += share;
  });
}

// ---------------------------------------------------------------------------

double grad_check(const ScalarFn& f, std::span<Tensor> inputs, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  for (auto& x : inputs) {
    if (!x.requires_grad() || !x.is_leaf()) {
      throw std::invalid_argument("grad_check: inputs must be requires-grad leaves");
    }
    x.zero_grad();
  }
  {
    Tape tape;
    Tensor y = f(tape, inputs);
    tape.backward(y);
  }
  auto evaluate = [&]() {
    Tape tape(Tape::Mode::kInference);
    return f(tape, inputs).item();
  };
  double worst = 0.0;
  for (auto& x : inputs) {
    const std::vector<double> analytic =
        x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                     : std::vector<double>(x.numel(), 0.0);
    auto vals = x.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double up = evaluate();
      vals[i] = saved - h;
      const double down = evaluate();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace indcomm::ad
