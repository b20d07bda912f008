#pragma once

// Reverse-mode automatic differentiation over an explicit tape.
//
// A Tensor is a cheap handle onto shared row-major storage. Leaves that
// require grad (network parameters) live outside any tape and collect
// gradients in their own storage. Every operation is issued through a Tape:
// a recording tape appends one node per operation whose inputs are tracked,
// an inference tape only evaluates the forward pass. Intermediate adjoints
// exist only for the duration of Tape::backward.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace indcomm::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

struct Storage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
};

class Tensor {
 public:
  /// Empty tensor of shape [0].
  Tensor();
  Tensor(std::vector<double> values, Shape shape, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  const Shape& shape() const { return data_->shape; }
  std::size_t numel() const { return data_->values.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return data_->shape.size(); }

  std::span<const double> values() const { return data_->values; }
  /// Direct write access, used by optimizers and checkpoint loading.
  std::span<double> mutable_values() { return data_->values; }
  double at(std::size_t i) const { return data_->values.at(i); }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return data_->requires_grad; }
  bool has_grad() const { return !data_->grad.empty(); }
  /// Accumulated gradient; empty span when nothing has been accumulated yet.
  std::span<const double> grad() const { return data_->grad; }
  std::span<double> mutable_grad() { return data_->grad; }
  void zero_grad();

  /// True for tensors that carry no tape node (parameters, constants, detached values).
  bool is_leaf() const { return tape_ == nullptr; }
  /// Tracked by reverse mode: either a requires-grad leaf or a recorded op output.
  bool tracked() const { return data_->requires_grad; }
  const Tape* tape() const { return tape_; }
  std::ptrdiff_t node() const { return node_; }

  /// Deep copy into fresh storage.
  Tensor clone(bool requires_grad) const;
  bool shares_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  friend class Tape;
  friend Tensor detach(const Tensor& t);

  std::shared_ptr<Storage> data_;
  const Tape* tape_ = nullptr;
  std::ptrdiff_t node_ = -1;
};

/// Leaf constructor; throws ShapeError when product(shape) != values.size().
Tensor tensor(std::vector<double> values, Shape shape, bool requires_grad = false);

/// Copy of the values with no tape node and requires_grad = false. Gradients
/// never flow through it back to the producers of `t`.
Tensor detach(const Tensor& t);

enum class OpKind {
  kLeaf,
  kMatMul,
  kMatMulBT,
  kAdd,
  kSub,
  kMul,
  kScale,
  kConcat,
  kSlice,
  kRelu,
  kTanh,
  kSigmoid,
  kReduceMax,
  kGather,
  kSum,
  kMean,
};

const char* op_name(OpKind kind);

struct MaxResult {
  Tensor values;
  std::vector<std::size_t> indices;
};

class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape inference() { return Tape(Mode::kInference); }

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t node) const { return nodes_.at(node).kind; }
  const std::vector<std::ptrdiff_t>& parents(std::size_t node) const {
    return nodes_.at(node).parents;
  }

  /// [m x k] * [k x n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  /// [m x k] * [n x k]^T
  Tensor matmul_bt(const Tensor& a, const Tensor& b);
  /// Elementwise sum. `b` may also be a vector matching the last dimension of
  /// `a`, in which case it is added to every row.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor concat(std::span<const Tensor> parts, std::size_t axis);
  Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
  /// Half-open range [begin, end) along `axis`.
  Tensor slice(const Tensor& t, std::size_t begin, std::size_t end, std::size_t axis);
  Tensor relu(const Tensor& t);
  Tensor tanh(const Tensor& t);
  Tensor sigmoid(const Tensor& t);
  /// Max along `axis` (removed from the shape); ties resolve to the lowest
  /// index and the gradient is routed to that entry only.
  MaxResult reduce_max_with_index(const Tensor& t, std::size_t axis);
  /// Picks one entry along `axis` for every position of the remaining axes:
  /// out[o, i] = t[o, indices[o * inner + i], i]. The axis is removed.
  Tensor gather(const Tensor& t, std::span<const std::size_t> indices, std::size_t axis);
  Tensor sum(const Tensor& t);
  Tensor mean(const Tensor& t);

  /// Accumulates d loss / d leaf into every reachable requires-grad leaf.
  void backward(const Tensor& loss);

 private:
  using BackwardFn = std::function<void(Tape&, const double* out_grad)>;

  struct Node {
    OpKind kind;
    std::vector<std::ptrdiff_t> parents;
    std::shared_ptr<Storage> out;
    BackwardFn backward;
  };

  std::ptrdiff_t track(const Tensor& t);
  /// Adjoint buffer of `node`, or nullptr for constants (node < 0).
  double* adjoint(std::ptrdiff_t node);
  Tensor emit(OpKind kind, Shape shape, std::vector<double> values,
              std::vector<std::ptrdiff_t> parents, BackwardFn backward);

  Mode mode_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> adjoints_;
  std::unordered_map<const Storage*, std::size_t> leaf_nodes_;
};

using ScalarFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;

/// Maximum over all input entries of |analytic - central difference| /
/// max(1, |analytic|). Inputs must be requires-grad leaves; their gradients
/// are overwritten.
double grad_check(const ScalarFn& f, std::span<Tensor> inputs, double h = 1e-5);

}  // namespace indcomm::ad
