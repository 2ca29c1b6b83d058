#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsep/tensor.hpp"

namespace fsep {

/// Fixed operation catalog. conv2d is 3x3/stride 1/pad 1 and maxpool2x2 is
/// 2x2/stride 2 (floor on odd sizes): exactly what the four-block embedding
/// needs, nothing more general.
enum class OpKind {
  input,
  param,
  matmul,
  add,
  conv2d,
  batchnorm2d,
  relu,
  maxpool2x2,
  flatten,
  mean,
  log_softmax,
  negate,
  scalar_mul,
  gather_rows,
  sq_euclidean_pairwise,
  cosine_similarity_pairwise,
};

const char* op_kind_name(OpKind op);

struct NodeId {
  int32_t index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(NodeId a, NodeId b) { return a.index == b.index; }
};

/// Insertion-time attributes. Shape rules per op:
///   mean:        axis = -1 reduces everything to [1]; otherwise drops `axis`.
///   scalar_mul:  multiplies by `scalar`.
///   gather_rows: picks `rows` along axis 0 (scatter-add on backward).
///   flatten:     [d0,...] -> [d0, prod(rest)], or [prod(all), 1] when
///                `to_column` is set.
struct OpAttrs {
  int axis = -1;
  double scalar = 0.0;
  std::vector<int64_t> rows;
  bool to_column = false;
};

/// Gradients for the parameter leaves of one backward pass, aligned with
/// Graph::params().
template <typename T>
struct GradMap {
  std::vector<NodeId> params;
  std::vector<Tensor<T>> grads;

  const Tensor<T>& at(NodeId p) const {
    for (size_t i = 0; i < params.size(); ++i) {
      if (params[i] == p) return grads[i];
    }
    raise(ErrorCode::InvalidArgument, "no gradient for node " + std::to_string(p.index));
  }
};

/// Define-by-run computation graph over a fixed op catalog. Values are
/// computed eagerly on insertion; leaves may later be rewritten and the
/// graph re-evaluated in place (finite differencing, Hessian-vector
/// products). Append-only, acyclic by construction.
template <typename T>
class Graph {
 public:
  /// Leaf without gradient. Rejects non-finite values.
  NodeId input(Tensor<T> v);
  /// Leaf that receives a gradient from backward().
  NodeId param(Tensor<T> v);

  /// Generic entry point; the named helpers below are thin wrappers.
  NodeId apply(OpKind op, std::span<const NodeId> inputs, OpAttrs attrs = {});

  NodeId matmul(NodeId a, NodeId b) { return apply2(OpKind::matmul, a, b); }
  NodeId add(NodeId a, NodeId b) { return apply2(OpKind::add, a, b); }
  NodeId conv2d(NodeId x, NodeId w, NodeId bias);
  NodeId batchnorm2d(NodeId x, NodeId gamma, NodeId beta);
  NodeId relu(NodeId x) { return apply1(OpKind::relu, x); }
  NodeId maxpool2x2(NodeId x) { return apply1(OpKind::maxpool2x2, x); }
  NodeId flatten(NodeId x) { return apply1(OpKind::flatten, x); }
  NodeId flatten_column(NodeId x);
  NodeId mean_all(NodeId x) { return apply1(OpKind::mean, x); }
  NodeId mean_axis(NodeId x, int axis);
  NodeId log_softmax(NodeId x) { return apply1(OpKind::log_softmax, x); }
  NodeId negate(NodeId x) { return apply1(OpKind::negate, x); }
  NodeId scalar_mul(NodeId x, double c);
  NodeId gather_rows(NodeId x, std::vector<int64_t> rows);
  NodeId sq_euclidean_pairwise(NodeId x, NodeId y) {
    return apply2(OpKind::sq_euclidean_pairwise, x, y);
  }
  NodeId cosine_similarity_pairwise(NodeId x, NodeId y) {
    return apply2(OpKind::cosine_similarity_pairwise, x, y);
  }

  const Tensor<T>& value(NodeId id) const { return nodes_[check(id)].value; }
  OpKind op_kind(NodeId id) const { return nodes_[check(id)].op; }
  std::vector<NodeId> inputs_of(NodeId id) const {
    std::vector<NodeId> out;
    for (int32_t i : nodes_[check(id)].inputs) out.push_back(NodeId{i});
    return out;
  }
  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }
  const std::vector<NodeId>& params() const { return params_; }

  /// Rewrites a leaf in place (shape must match). Downstream values are
  /// stale until refresh().
  void set_leaf(NodeId leaf, const Tensor<T>& v);
  T* leaf_data(NodeId leaf);

  /// Recomputes every non-leaf value in insertion order. The optional mask
  /// restricts recomputation to the flagged nodes.
  void refresh();
  void refresh(const std::vector<char>& mask);

  /// Nodes influenced by `leaf`, as a node-indexed mask (for sparse
  /// refresh).
  std::vector<char> descendants(NodeId leaf) const;

  /// Reverse-mode gradients of a scalar loss for every param leaf.
  GradMap<T> backward(NodeId loss) const;

 private:
  struct Node {
    OpKind op;
    std::vector<int32_t> inputs;
    OpAttrs attrs;
    Tensor<T> value;
    // Saved forward byproducts consumed by backward.
    Tensor<T> aux;               // batchnorm: xhat; cosine: row norms of x
    Tensor<T> aux2;              // batchnorm: per-channel inv_std; cosine: row norms of y
    std::vector<int64_t> iaux;   // maxpool: flat argmax per output element
  };

  NodeId apply1(OpKind op, NodeId a) { return apply(op, std::array{a}); }
  NodeId apply2(OpKind op, NodeId a, NodeId b) { return apply(op, std::array{a, b}); }
  NodeId apply(OpKind op, std::span<const NodeId> inputs) { return apply(op, inputs, OpAttrs{}); }
  template <size_t N>
  NodeId apply(OpKind op, const std::array<NodeId, N>& in, OpAttrs attrs = {}) {
    return apply(op, std::span<const NodeId>(in.data(), in.size()), std::move(attrs));
  }

  int32_t check(NodeId id) const {
    if (!id.valid() || id.index >= static_cast<int32_t>(nodes_.size())) {
      raise(ErrorCode::InvalidArgument, "bad node id " + std::to_string(id.index));
    }
    return id.index;
  }

  void compute(Node& n) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
};

/// Max over parameter coordinates of
/// |analytic - central difference| / max(1, |analytic|), with the loss
/// re-evaluated at +-h per coordinate. Intended for f64 graphs; f32 works
/// at proportionally looser tolerances.
template <typename T>
double check_gradients(Graph<T>& g, NodeId loss, double h);

extern template class Graph<float>;
extern template class Graph<double>;
extern template double check_gradients(Graph<float>&, NodeId, double);
extern template double check_gradients(Graph<double>&, NodeId, double);

}  // namespace fsep
