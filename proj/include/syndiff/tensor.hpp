#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace syndiff {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes do not conform. Carries the name of the op.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(std::string op, const std::string& detail);
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Raised when a gradient-of-gradient is requested through an op that only
/// implements a first-order backward rule.
class SecondOrderError : public std::logic_error {
 public:
  explicit SecondOrderError(std::string op);
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

template <typename T>
class BasicGraph;

namespace detail {
template <typename T>
struct TensorAccess;
}

/// Dense row-major array. Cheap to copy: copies share storage and graph
/// identity. Data of a tensor recorded on a graph must not be mutated.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape);
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor full(Shape shape, T value);
  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, {value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int i) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  /// Marks a leaf as a differentiation target (parameters, penalty inputs).
  BasicTensor& requires_grad_(bool value = true);
  bool is_leaf() const;

  /// Copy of the data with no graph history.
  BasicTensor detach() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(numel());
    auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return BasicTensor<U>(shape(), std::move(out));
  }

  /// Stable identity of the underlying storage; used as a gradient-map key.
  const void* identity() const noexcept { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::uint64_t graph_id = 0;
    std::size_t node = 0;
  };
  std::shared_ptr<Impl> impl_;

  friend struct detail::TensorAccess<T>;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Tape of executed operations. Ops record onto the graph installed by the
/// innermost GraphScope on the current thread. Backward passes replay the
/// tape in reverse; with create_graph the replay itself is recorded, so its
/// results can be differentiated again.
template <typename T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<std::vector<TensorT>(
      const TensorT& grad_out, const TensorT& output, std::span<const TensorT> inputs,
      std::span<const bool> needed)>;

  struct Node {
    std::string_view op;
    std::vector<TensorT> inputs;
    TensorT output;
    BackwardFn backward;
    bool higher_order = true;
  };

  BasicGraph();
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  std::uint64_t id() const noexcept { return id_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }

  bool owns(const TensorT& t) const;
  TensorT append(std::string_view op, TensorT output, std::vector<TensorT> inputs, BackwardFn fn,
                 bool higher_order);

 private:
  std::uint64_t id_;
  std::deque<Node> nodes_;
};

using Graph = BasicGraph<float>;
using Graph64 = BasicGraph<double>;

/// Installs a graph as the recording target for the current thread.
template <typename T>
class GraphScope {
 public:
  explicit GraphScope(BasicGraph<T>& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  BasicGraph<T>* previous_;
  bool previous_enabled_;
};

/// Suspends recording for the current thread (inference, optimizer math).
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

template <typename T>
BasicGraph<T>* active_graph();

/// Gradient map keyed by parameter identity. Parameters that were never
/// reached by the backward pass report exact zeros.
template <typename T>
class Gradients {
 public:
  BasicTensor<T> of(const BasicTensor<T>& param) const;
  bool reached(const BasicTensor<T>& param) const { return grads_.count(param.identity()) != 0; }
  std::size_t size() const { return grads_.size(); }

  void accumulate(const void* key, const BasicTensor<T>& grad);

 private:
  std::unordered_map<const void*, BasicTensor<T>> grads_;
};

/// Reverse pass from a scalar loss to every leaf that requires grad.
template <typename T>
Gradients<T> backward(BasicGraph<T>& graph, const BasicTensor<T>& loss);

/// Gradients of sum(output) with respect to `inputs` (leaves or recorded
/// intermediates). Undefined tensors are returned for inputs not on a path.
template <typename T>
std::vector<BasicTensor<T>> grad(BasicGraph<T>& graph, const BasicTensor<T>& output,
                                 const std::vector<BasicTensor<T>>& inputs, bool create_graph);

/// Per-sample squared norm of d(sum output)/d(input), recorded on the graph so
/// that it can itself be differentiated with respect to network parameters.
template <typename T>
BasicTensor<T> grad_norm_sq(BasicGraph<T>& graph, const BasicTensor<T>& d_output,
                            const BasicTensor<T>& input);

namespace detail {

template <typename T>
struct TensorAccess {
  static bool tracked_on(const BasicTensor<T>& t, std::uint64_t graph_id) {
    return t.impl_ && t.impl_->graph_id == graph_id && graph_id != 0;
  }
  static std::size_t node(const BasicTensor<T>& t) { return t.impl_->node; }
  static void attach(BasicTensor<T>& t, std::uint64_t graph_id, std::size_t node) {
    t.impl_->graph_id = graph_id;
    t.impl_->node = node;
    t.impl_->requires_grad = true;
  }
  static bool is_grad_leaf(const BasicTensor<T>& t) {
    return t.impl_ && t.impl_->graph_id == 0 && t.impl_->requires_grad;
  }
};

/// Records `output` as produced by `op` when recording is active and any
/// input participates in differentiation. Returns the (possibly attached)
/// output.
template <typename T>
BasicTensor<T> record(std::string_view op, BasicTensor<T> output, std::vector<BasicTensor<T>> inputs,
                      typename BasicGraph<T>::BackwardFn fn, bool higher_order = true);

}  // namespace detail

}  // namespace syndiff
