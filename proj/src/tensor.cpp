#include "syndiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "syndiff/ops.hpp"

namespace syndiff {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

DimensionError::DimensionError(std::string op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail), op_(std::move(op)) {}

SecondOrderError::SecondOrderError(std::string op)
    : std::logic_error("second-order differentiation is not supported by op '" + op + "'"),
      op_(std::move(op)) {}

// ---------------------------------------------------------------------------
// BasicTensor

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape) : impl_(std::make_shared<Impl>()) {
  for (int d : shape)
    if (d <= 0) throw DimensionError("tensor", "non-positive dimension in " + shape_str(shape));
  impl_->data.assign(shape_numel(shape), T(0));
  impl_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<Impl>()) {
  for (int d : shape)
    if (d <= 0) throw DimensionError("tensor", "non-positive dimension in " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw DimensionError("tensor", "shape " + shape_str(shape) + " does not hold " +
                                       std::to_string(data.size()) + " values");
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  BasicTensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->shape;
}

template <typename T>
int BasicTensor<T>::dim(int i) const {
  const auto& s = shape();
  if (i < 0) i += static_cast<int>(s.size());
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw DimensionError("dim", "axis out of range for " + shape_str(s));
  return s[static_cast<std::size_t>(i)];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  return defined() ? impl_->data.size() : 0;
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  if (impl_->graph_id != 0) throw std::logic_error("in-place mutation of a recorded tensor");
  return impl_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item", "tensor " + shape_str(shape()) + " is not a scalar");
  return impl_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::requires_grad_(bool value) {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  if (impl_->graph_id != 0) throw std::logic_error("requires_grad_ on a non-leaf tensor");
  impl_->requires_grad = value;
  return *this;
}

template <typename T>
bool BasicTensor<T>::is_leaf() const {
  return impl_ && impl_->graph_id == 0;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), impl_->data);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

// ---------------------------------------------------------------------------
// Recording state

namespace {

std::atomic<std::uint64_t> next_graph_id{1};
thread_local bool recording_enabled = true;

template <typename T>
BasicGraph<T>*& active_slot() {
  thread_local BasicGraph<T>* slot = nullptr;
  return slot;
}

}  // namespace

bool grad_enabled() { return recording_enabled; }

template <typename T>
BasicGraph<T>* active_graph() {
  return active_slot<T>();
}

NoGradGuard::NoGradGuard() : previous_(recording_enabled) { recording_enabled = false; }
NoGradGuard::~NoGradGuard() { recording_enabled = previous_; }

template <typename T>
GraphScope<T>::GraphScope(BasicGraph<T>& graph)
    : previous_(active_slot<T>()), previous_enabled_(recording_enabled) {
  active_slot<T>() = &graph;
  recording_enabled = true;
}

template <typename T>
GraphScope<T>::~GraphScope() {
  active_slot<T>() = previous_;
  recording_enabled = previous_enabled_;
}

template <typename T>
BasicGraph<T>::BasicGraph() : id_(next_graph_id.fetch_add(1)) {}

template <typename T>
bool BasicGraph<T>::owns(const TensorT& t) const {
  return detail::TensorAccess<T>::tracked_on(t, id_);
}

template <typename T>
typename BasicGraph<T>::TensorT BasicGraph<T>::append(std::string_view op, TensorT output,
                                                      std::vector<TensorT> inputs, BackwardFn fn,
                                                      bool higher_order) {
  detail::TensorAccess<T>::attach(output, id_, nodes_.size());
  nodes_.push_back(Node{op, std::move(inputs), output, std::move(fn), higher_order});
  return output;
}

template class BasicGraph<float>;
template class BasicGraph<double>;
template class GraphScope<float>;
template class GraphScope<double>;
template BasicGraph<float>* active_graph<float>();
template BasicGraph<double>* active_graph<double>();

namespace detail {

template <typename T>
BasicTensor<T> record(std::string_view op, BasicTensor<T> output, std::vector<BasicTensor<T>> inputs,
                      typename BasicGraph<T>::BackwardFn fn, bool higher_order) {
  BasicGraph<T>* graph = active_slot<T>();
  if (!graph || !recording_enabled) return output;
  bool tracked = false;
  for (const auto& in : inputs) {
    if (!in.defined()) continue;
    if (TensorAccess<T>::is_grad_leaf(in) || graph->owns(in)) {
      tracked = true;
      break;
    }
  }
  if (!tracked) return output;
  return graph->append(op, std::move(output), std::move(inputs), std::move(fn), higher_order);
}

template BasicTensor<float> record<float>(std::string_view, BasicTensor<float>,
                                          std::vector<BasicTensor<float>>,
                                          typename BasicGraph<float>::BackwardFn, bool);
template BasicTensor<double> record<double>(std::string_view, BasicTensor<double>,
                                            std::vector<BasicTensor<double>>,
                                            typename BasicGraph<double>::BackwardFn, bool);

}  // namespace detail

// ---------------------------------------------------------------------------
// Reverse pass

template <typename T>
BasicTensor<T> Gradients<T>::of(const BasicTensor<T>& param) const {
  auto it = grads_.find(param.identity());
  if (it != grads_.end()) return it->second;
  return BasicTensor<T>::zeros(param.shape());
}

template <typename T>
void Gradients<T>::accumulate(const void* key, const BasicTensor<T>& g) {
  auto [it, inserted] = grads_.try_emplace(key, g);
  if (!inserted) it->second = add(it->second, g);
}

namespace {

template <typename T>
struct ReverseResult {
  std::unordered_map<const void*, BasicTensor<T>> leaf_grads;
  std::unordered_map<std::size_t, BasicTensor<T>> node_grads;
};

// Replays the tape from `output` down to index 0. When `all_leaves` is set,
// every leaf that requires grad is a target; otherwise only the listed leaves
// and nodes are.
template <typename T>
ReverseResult<T> reverse_pass(BasicGraph<T>& graph, const BasicTensor<T>& output, bool all_leaves,
                              const std::unordered_set<const void*>& target_leaves,
                              const std::unordered_set<std::size_t>& target_nodes,
                              bool create_graph) {
  using Access = detail::TensorAccess<T>;
  ReverseResult<T> result;
  if (!graph.owns(output)) return result;

  const std::size_t top = Access::node(output);
  std::vector<char> dep(top + 1, 0);
  auto reaches = [&](const BasicTensor<T>& in) {
    if (!in.defined()) return false;
    if (Access::is_grad_leaf(in)) return all_leaves || target_leaves.count(in.identity()) != 0;
    if (graph.owns(in)) {
      const std::size_t j = Access::node(in);
      return j <= top && dep[j] != 0;
    }
    return false;
  };
  for (std::size_t i = 0; i <= top; ++i) {
    if (target_nodes.count(i)) {
      dep[i] = 1;
      continue;
    }
    for (const auto& in : graph.node(i).inputs)
      if (reaches(in)) {
        dep[i] = 1;
        break;
      }
  }

  std::vector<BasicTensor<T>> pending(top + 1);
  {
    NoGradGuard no_grad;
    pending[top] = BasicTensor<T>::full(output.shape(), T(1));
  }

  std::unique_ptr<GraphScope<T>> scope;
  std::unique_ptr<NoGradGuard> no_grad;
  if (create_graph)
    scope = std::make_unique<GraphScope<T>>(graph);
  else
    no_grad = std::make_unique<NoGradGuard>();

  auto accumulate = [](BasicTensor<T>& slot, const BasicTensor<T>& g) {
    slot = slot.defined() ? add(slot, g) : g;
  };

  for (std::size_t idx = top + 1; idx-- > 0;) {
    if (!dep[idx] || !pending[idx].defined()) continue;
    BasicTensor<T> g_out = std::move(pending[idx]);
    pending[idx] = BasicTensor<T>();
    if (target_nodes.count(idx)) result.node_grads[idx] = g_out;

    // Copy: appending nodes during a recorded replay must not alias.
    const auto node = graph.node(idx);
    std::vector<bool> needed_vec(node.inputs.size());
    bool any = false;
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      needed_vec[j] = reaches(node.inputs[j]);
      any = any || needed_vec[j];
    }
    if (!any) continue;
    if (create_graph && !node.higher_order) throw SecondOrderError(std::string(node.op));

    std::unique_ptr<bool[]> needed(new bool[needed_vec.size()]);
    for (std::size_t j = 0; j < needed_vec.size(); ++j) needed[j] = needed_vec[j];
    auto in_grads = node.backward(g_out, node.output, node.inputs,
                                  std::span<const bool>(needed.get(), needed_vec.size()));

    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      if (!needed_vec[j]) continue;
      const auto& in = node.inputs[j];
      const auto& g = in_grads.at(j);
      if (!g.defined()) continue;
      if (g.shape() != in.shape())
        throw DimensionError(std::string(node.op), "backward produced " + shape_str(g.shape()) +
                                                       " for input " + shape_str(in.shape()));
      if (Access::is_grad_leaf(in))
        accumulate(result.leaf_grads[in.identity()], g);
      else
        accumulate(pending[Access::node(in)], g);
    }
  }
  return result;
}

}  // namespace

template <typename T>
Gradients<T> backward(BasicGraph<T>& graph, const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw DimensionError("backward", "loss must be a scalar, got " +
                                         (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  auto res = reverse_pass(graph, loss, true, {}, {}, false);
  Gradients<T> grads;
  for (auto& [key, g] : res.leaf_grads) grads.accumulate(key, g);
  return grads;
}

template <typename T>
std::vector<BasicTensor<T>> grad(BasicGraph<T>& graph, const BasicTensor<T>& output,
                                 const std::vector<BasicTensor<T>>& inputs, bool create_graph) {
  using Access = detail::TensorAccess<T>;
  std::unordered_set<const void*> leaves;
  std::unordered_set<std::size_t> nodes;
  for (const auto& in : inputs) {
    if (Access::is_grad_leaf(in))
      leaves.insert(in.identity());
    else if (graph.owns(in))
      nodes.insert(Access::node(in));
  }
  auto res = reverse_pass(graph, output, false, leaves, nodes, create_graph);
  std::vector<BasicTensor<T>> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (Access::is_grad_leaf(in)) {
      auto it = res.leaf_grads.find(in.identity());
      out.push_back(it != res.leaf_grads.end() ? it->second : BasicTensor<T>());
    } else if (graph.owns(in)) {
      auto it = res.node_grads.find(Access::node(in));
      out.push_back(it != res.node_grads.end() ? it->second : BasicTensor<T>());
    } else {
      out.emplace_back();
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> grad_norm_sq(BasicGraph<T>& graph, const BasicTensor<T>& d_output,
                            const BasicTensor<T>& input) {
  if (!d_output.defined() || d_output.rank() != 1)
    throw DimensionError("grad_norm_sq", "discriminator output must be [N], got " +
                                             (d_output.defined() ? shape_str(d_output.shape())
                                                                 : "undefined"));
  if (input.dim(0) != d_output.dim(0))
    throw DimensionError("grad_norm_sq", "batch mismatch between " + shape_str(d_output.shape()) +
                                             " and " + shape_str(input.shape()));
  auto g = grad(graph, d_output, {input}, true).front();
  GraphScope<T> scope(graph);
  if (!g.defined()) return BasicTensor<T>::zeros({input.dim(0)});
  return sum_per_sample(square(g));
}

template class Gradients<float>;
template class Gradients<double>;
template Gradients<float> backward<float>(BasicGraph<float>&, const BasicTensor<float>&);
template Gradients<double> backward<double>(BasicGraph<double>&, const BasicTensor<double>&);
template std::vector<BasicTensor<float>> grad<float>(BasicGraph<float>&, const BasicTensor<float>&,
                                                     const std::vector<BasicTensor<float>>&, bool);
template std::vector<BasicTensor<double>> grad<double>(BasicGraph<double>&,
                                                       const BasicTensor<double>&,
                                                       const std::vector<BasicTensor<double>>&,
                                                       bool);
template BasicTensor<float> grad_norm_sq<float>(BasicGraph<float>&, const BasicTensor<float>&,
                                                const BasicTensor<float>&);
template BasicTensor<double> grad_norm_sq<double>(BasicGraph<double>&, const BasicTensor<double>&,
                                                  const BasicTensor<double>&);

}  // namespace syndiff
