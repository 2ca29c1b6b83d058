#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsep/graph.hpp"
#include "fsep/rng.hpp"
#include "fsep/tensor.hpp"

namespace fsep {

/// Embedding architecture description. convnet4 is four blocks of
/// 3x3 conv -> batchnorm -> relu -> 2x2 maxpool over [c,n,n] inputs; mlp is
/// linear layers with relu between (none after the last) over [dim] inputs.
struct EmbedderSpec {
  enum class Kind { convnet4, mlp };

  Kind kind = Kind::convnet4;
  Shape input_shape;
  int width = 64;                // convnet4 channel count
  std::vector<int> hidden;       // mlp hidden layer sizes
  int output_dim = 0;            // M; for convnet4 derived from width and input size

  void validate() const;
  /// M for a valid spec (convnet4: width * spatial^2 after four floor-halved
  /// pools; mlp: output_dim).
  int64_t embedding_dim() const;
  int64_t param_count() const;
};

std::string embedder_kind_name(EmbedderSpec::Kind kind);
EmbedderSpec::Kind embedder_kind_from_name(const std::string& name);

/// Named parameter tensors in a fixed, spec-derived order.
template <typename T>
struct ParamSetT {
  std::vector<std::pair<std::string, Tensor<T>>> entries;

  int64_t total_size() const;
  const Tensor<T>& at(const std::string& name) const;

  template <typename U>
  ParamSetT<U> cast() const {
    ParamSetT<U> out;
    out.entries.reserve(entries.size());
    for (const auto& [name, tensor] : entries) out.entries.emplace_back(name, tensor.template cast<U>());
    return out;
  }
};

using ParamSet = ParamSetT<float>;

/// Glorot-uniform weights, zero biases, batchnorm scale 1 / shift 0.
/// Deterministic in the rng stream.
template <typename T>
ParamSetT<T> init_params(const EmbedderSpec& spec, Rng& rng);

/// Param leaves of one graph, in ParamSet order.
template <typename T>
struct ParamNodes {
  std::vector<std::pair<std::string, NodeId>> entries;
  NodeId at(const std::string& name) const;
};

/// Inserts every parameter tensor as a param leaf.
template <typename T>
ParamNodes<T> insert_params(Graph<T>& g, const ParamSetT<T>& params);

/// Builds the embedding network on the graph: batch [B, ...input_shape] ->
/// [B, M]. convnet4 requires B >= 2 (batch statistics).
template <typename T>
NodeId embed(const EmbedderSpec& spec, const ParamNodes<T>& params, Graph<T>& g, NodeId batch);

/// Concatenates every entry in the ParamSet's fixed order (a pure function
/// of the spec); round-trips bit-exactly.
template <typename T>
std::vector<T> flatten_params(const ParamSetT<T>& params);
template <typename T>
ParamSetT<T> unflatten_params(const ParamSetT<T>& reference, std::span<const T> flat);

extern template struct ParamSetT<float>;
extern template struct ParamSetT<double>;
extern template ParamSetT<float> init_params<float>(const EmbedderSpec&, Rng&);
extern template ParamSetT<double> init_params<double>(const EmbedderSpec&, Rng&);
extern template struct ParamNodes<float>;
extern template struct ParamNodes<double>;
extern template ParamNodes<float> insert_params<float>(Graph<float>&, const ParamSetT<float>&);
extern template ParamNodes<double> insert_params<double>(Graph<double>&, const ParamSetT<double>&);
extern template NodeId embed<float>(const EmbedderSpec&, const ParamNodes<float>&, Graph<float>&, NodeId);
extern template NodeId embed<double>(const EmbedderSpec&, const ParamNodes<double>&, Graph<double>&, NodeId);
extern template std::vector<float> flatten_params<float>(const ParamSetT<float>&);
extern template std::vector<double> flatten_params<double>(const ParamSetT<double>&);
extern template ParamSetT<float> unflatten_params<float>(const ParamSetT<float>&, std::span<const float>);
extern template ParamSetT<double> unflatten_params<double>(const ParamSetT<double>&, std::span<const double>);

}  // namespace fsep
