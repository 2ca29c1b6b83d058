#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsep/embed.hpp"
#include "fsep/episodes.hpp"
#include "fsep/graph.hpp"

namespace fsep {

/// "Euclidean" is the squared form, matching the reference implementation;
/// cosine distance is 1 - similarity, range [0,2].
enum class DistanceKind { sq_euclidean, cosine };

std::string distance_kind_name(DistanceKind d);          // "euclid" / "cosine"
DistanceKind distance_kind_from_name(const std::string& name);

template <typename T>
struct PrototypesT {
  Tensor<T> matrix;                 // [K, M], row k is the class mean
  std::vector<int64_t> class_ids;   // V aligned row-wise
};
using Prototypes = PrototypesT<float>;

/// Per-class mean of embedded support examples: [K,S,M] -> [K,M].
template <typename T>
PrototypesT<T> prototypes(const Tensor<T>& support_embeddings, std::vector<int64_t> class_ids);

/// d(a_i, b_k) for all pairs: [N,M] x [K,M] -> [N,K].
template <typename T>
Tensor<T> pairwise_distance(const Tensor<T>& a, const Tensor<T>& b, DistanceKind d);

/// Row i = log softmax over classes of -d(query_i, proto_k). Each row
/// exponentiates and sums to 1.
template <typename T>
Tensor<T> class_log_probs(const Tensor<T>& query_embeddings, const PrototypesT<T>& protos,
                          DistanceKind d);

/// Most probable class per query (minimal distance); ties break to the
/// lowest prototype row. Returns class ids.
template <typename T>
std::vector<int64_t> predict(const Tensor<T>& query_embeddings, const PrototypesT<T>& protos,
                             DistanceKind d);

/// Differentiable episode loss: embeds the episode's support and query
/// examples in one batch (shared batchnorm statistics), forms prototypes,
/// and returns the mean query NLL as a scalar node.
template <typename T>
NodeId episode_loss(Graph<T>& g, const EmbedderSpec& spec, const ParamNodes<T>& params,
                    const Dataset& data, const Episode& e, DistanceKind d);

/// episode_loss plus the [K(S+Q), M] embedding node, for callers that also
/// need predictions.
struct EpisodeNodes {
  NodeId loss;
  NodeId embeddings;
};
template <typename T>
EpisodeNodes episode_loss_nodes(Graph<T>& g, const EmbedderSpec& spec, const ParamNodes<T>& params,
                                const Dataset& data, const Episode& e, DistanceKind d);

/// Forward-only loss and accuracy of one episode under fixed parameters.
struct EpisodeScore {
  double loss = 0;
  double accuracy = 0;
};
template <typename T>
EpisodeScore score_episode(const EmbedderSpec& spec, const ParamSetT<T>& params, const Dataset& data,
                           const Episode& e, DistanceKind d);

extern template struct PrototypesT<float>;
extern template struct PrototypesT<double>;
extern template PrototypesT<float> prototypes<float>(const Tensor<float>&, std::vector<int64_t>);
extern template PrototypesT<double> prototypes<double>(const Tensor<double>&, std::vector<int64_t>);
extern template Tensor<float> pairwise_distance<float>(const Tensor<float>&, const Tensor<float>&, DistanceKind);
extern template Tensor<double> pairwise_distance<double>(const Tensor<double>&, const Tensor<double>&, DistanceKind);
extern template Tensor<float> class_log_probs<float>(const Tensor<float>&, const PrototypesT<float>&, DistanceKind);
extern template Tensor<double> class_log_probs<double>(const Tensor<double>&, const PrototypesT<double>&, DistanceKind);
extern template std::vector<int64_t> predict<float>(const Tensor<float>&, const PrototypesT<float>&, DistanceKind);
extern template std::vector<int64_t> predict<double>(const Tensor<double>&, const PrototypesT<double>&, DistanceKind);
extern template NodeId episode_loss<float>(Graph<float>&, const EmbedderSpec&, const ParamNodes<float>&,
                                           const Dataset&, const Episode&, DistanceKind);
extern template NodeId episode_loss<double>(Graph<double>&, const EmbedderSpec&, const ParamNodes<double>&,
                                            const Dataset&, const Episode&, DistanceKind);
extern template EpisodeNodes episode_loss_nodes<float>(Graph<float>&, const EmbedderSpec&,
                                                       const ParamNodes<float>&, const Dataset&,
                                                       const Episode&, DistanceKind);
extern template EpisodeNodes episode_loss_nodes<double>(Graph<double>&, const EmbedderSpec&,
                                                        const ParamNodes<double>&, const Dataset&,
                                                        const Episode&, DistanceKind);
extern template EpisodeScore score_episode<float>(const EmbedderSpec&, const ParamSetT<float>&,
                                                  const Dataset&, const Episode&, DistanceKind);
extern template EpisodeScore score_episode<double>(const EmbedderSpec&, const ParamSetT<double>&,
                                                   const Dataset&, const Episode&, DistanceKind);

}  // namespace fsep
