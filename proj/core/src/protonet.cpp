#include "fsep/protonet.hpp"

#include <cmath>
#include <numeric>

#include "fsep/error.hpp"

namespace fsep {

std::string distance_kind_name(DistanceKind d) {
  return d == DistanceKind::sq_euclidean ? "euclid" : "cosine";
}

DistanceKind distance_kind_from_name(const std::string& name) {
  if (name == "euclid") return DistanceKind::sq_euclidean;
  if (name == "cosine") return DistanceKind::cosine;
  raise(ErrorCode::InvalidValue, "distance must be euclid or cosine, got '" + name + "'");
}

template <typename T>
PrototypesT<T> prototypes(const Tensor<T>& support_embeddings, std::vector<int64_t> class_ids) {
  if (support_embeddings.rank() != 3) {
    raise(ErrorCode::ShapeMismatch,
          "prototypes expects [K,S,M], got " + shape_to_string(support_embeddings.shape()));
  }
  const int64_t K = support_embeddings.dim(0), S = support_embeddings.dim(1), M = support_embeddings.dim(2);
  if (S < 1) raise(ErrorCode::EmptySupport, "S must be >= 1");
  if (static_cast<int64_t>(class_ids.size()) != K) {
    raise(ErrorCode::ShapeMismatch, "class id count != K");
  }
  PrototypesT<T> p;
  p.matrix = Tensor<T>({K, M});
  p.class_ids = std::move(class_ids);
  for (int64_t k = 0; k < K; ++k) {
    T* row = p.matrix.data() + k * M;
    for (int64_t s = 0; s < S; ++s) {
      const T* e = support_embeddings.data() + (k * S + s) * M;
      for (int64_t m = 0; m < M; ++m) row[m] += e[m];
    }
    for (int64_t m = 0; m < M; ++m) row[m] /= static_cast<T>(S);
  }
  return p;
}

template <typename T>
Tensor<T> pairwise_distance(const Tensor<T>& a, const Tensor<T>& b, DistanceKind d) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    raise(ErrorCode::ShapeMismatch,
          "pairwise_distance: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  const int64_t N = a.dim(0), K = b.dim(0), M = a.dim(1);
  Tensor<T> out({N, K});
  if (d == DistanceKind::sq_euclidean) {
    for (int64_t i = 0; i < N; ++i) {
      const T* ap = a.data() + i * M;
      for (int64_t k = 0; k < K; ++k) {
        const T* bp = b.data() + k * M;
        T acc = 0;
        for (int64_t m = 0; m < M; ++m) {
          const T diff = ap[m] - bp[m];
          acc += diff * diff;
        }
        out[i * K + k] = acc;
      }
    }
    return out;
  }
  auto norm = [M](const T* p) {
    T acc = 0;
    for (int64_t m = 0; m < M; ++m) acc += p[m] * p[m];
    return std::sqrt(acc);
  };
  for (int64_t i = 0; i < N; ++i) {
    const T* ap = a.data() + i * M;
    const T na = norm(ap);
    if (na == T(0)) raise(ErrorCode::ZeroVectorCosine, "zero query vector");
    for (int64_t k = 0; k < K; ++k) {
      const T* bp = b.data() + k * M;
      const T nb = norm(bp);
      if (nb == T(0)) raise(ErrorCode::ZeroVectorCosine, "zero prototype vector");
      T dot = 0;
      for (int64_t m = 0; m < M; ++m) dot += ap[m] * bp[m];
      out[i * K + k] = T(1) - dot / (na * nb);
    }
  }
  return out;
}

template <typename T>
Tensor<T> class_log_probs(const Tensor<T>& query_embeddings, const PrototypesT<T>& protos,
                          DistanceKind d) {
  Tensor<T> dist = pairwise_distance(query_embeddings, protos.matrix, d);
  const int64_t N = dist.dim(0), K = dist.dim(1);
  Tensor<T> out({N, K});
  for (int64_t i = 0; i < N; ++i) {
    const T* dp = dist.data() + i * K;
    T* op = out.data() + i * K;
    // log softmax of -d, stabilized by the min distance
    T mn = dp[0];
    for (int64_t k = 1; k < K; ++k) mn = std::min(mn, dp[k]);
    T se = 0;
    for (int64_t k = 0; k < K; ++k) se += std::exp(mn - dp[k]);
    const T lse = std::log(se);
    for (int64_t k = 0; k < K; ++k) op[k] = mn - dp[k] - lse;
  }
  return out;
}

template <typename T>
std::vector<int64_t> predict(const Tensor<T>& query_embeddings, const PrototypesT<T>& protos,
                             DistanceKind d) {
  Tensor<T> dist = pairwise_distance(query_embeddings, protos.matrix, d);
  const int64_t N = dist.dim(0), K = dist.dim(1);
  std::vector<int64_t> out(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    const T* dp = dist.data() + i * K;
    int64_t best = 0;
    for (int64_t k = 1; k < K; ++k) {
      if (dp[k] < dp[best]) best = k;
    }
    out[static_cast<size_t>(i)] = protos.class_ids[static_cast<size_t>(best)];
  }
  return out;
}

template <typename T>
EpisodeNodes episode_loss_nodes(Graph<T>& g, const EmbedderSpec& spec, const ParamNodes<T>& params,
                                const Dataset& data, const Episode& e, DistanceKind d) {
  const int64_t K = e.way, S = e.shot, Q = e.query;
  NodeId batch = g.input(episode_batch<T>(data, e));
  NodeId emb = embed(spec, params, g, batch);

  std::vector<int64_t> support_rows(static_cast<size_t>(K * S));
  std::iota(support_rows.begin(), support_rows.end(), int64_t{0});
  NodeId support = g.gather_rows(emb, std::move(support_rows));

  // Per-class average as a fixed [K, K*S] matrix so the gradient flows
  // through a single matmul.
  Tensor<T> avg({K, K * S});
  for (int64_t k = 0; k < K; ++k) {
    for (int64_t s = 0; s < S; ++s) avg[k * (K * S) + k * S + s] = T(1) / static_cast<T>(S);
  }
  NodeId protos = g.matmul(g.input(std::move(avg)), support);

  std::vector<int64_t> query_rows(static_cast<size_t>(K * Q));
  std::iota(query_rows.begin(), query_rows.end(), K * S);
  NodeId queries = g.gather_rows(emb, std::move(query_rows));

  NodeId dist;
  if (d == DistanceKind::sq_euclidean) {
    dist = g.sq_euclidean_pairwise(queries, protos);
  } else {
    NodeId sims = g.cosine_similarity_pairwise(queries, protos);
    dist = g.add(g.negate(sims), g.input(Tensor<T>::full({K}, T(1))));
  }
  NodeId logp = g.log_softmax(g.negate(dist));

  // Query rows are class-major: row i belongs to class position i / Q.
  std::vector<int64_t> picks(static_cast<size_t>(K * Q));
  for (int64_t i = 0; i < K * Q; ++i) picks[static_cast<size_t>(i)] = i * K + i / Q;
  NodeId picked = g.gather_rows(g.flatten_column(logp), std::move(picks));
  return EpisodeNodes{g.mean_all(g.negate(picked)), emb};
}

template <typename T>
NodeId episode_loss(Graph<T>& g, const EmbedderSpec& spec, const ParamNodes<T>& params,
                    const Dataset& data, const Episode& e, DistanceKind d) {
  return episode_loss_nodes(g, spec, params, data, e, d).loss;
}

template <typename T>
EpisodeScore score_episode(const EmbedderSpec& spec, const ParamSetT<T>& params, const Dataset& data,
                           const Episode& e, DistanceKind d) {
  Graph<T> g;
  ParamNodes<T> nodes = insert_params(g, params);
  EpisodeNodes built = episode_loss_nodes(g, spec, nodes, data, e, d);

  const int64_t K = e.way, S = e.shot, Q = e.query;
  const Tensor<T>& all = g.value(built.embeddings);
  const int64_t M = all.dim(1);
  Tensor<T> sup({K, S, M});
  std::copy(all.data(), all.data() + K * S * M, sup.data());
  Tensor<T> qry({K * Q, M});
  std::copy(all.data() + K * S * M, all.data() + K * (S + Q) * M, qry.data());

  PrototypesT<T> protos = prototypes(sup, e.class_subset);
  std::vector<int64_t> pred = predict(qry, protos, d);
  int64_t correct = 0;
  for (int64_t i = 0; i < K * Q; ++i) {
    const int64_t true_class = e.class_subset[static_cast<size_t>(i / Q)];
    if (pred[static_cast<size_t>(i)] == true_class) ++correct;
  }

  EpisodeScore score;
  score.loss = static_cast<double>(g.value(built.loss)[0]);
  score.accuracy = static_cast<double>(correct) / static_cast<double>(K * Q);
  return score;
}

template struct PrototypesT<float>;
template struct PrototypesT<double>;
template PrototypesT<float> prototypes<float>(const Tensor<float>&, std::vector<int64_t>);
template PrototypesT<double> prototypes<double>(const Tensor<double>&, std::vector<int64_t>);
template Tensor<float> pairwise_distance<float>(const Tensor<float>&, const Tensor<float>&, DistanceKind);
template Tensor<double> pairwise_distance<double>(const Tensor<double>&, const Tensor<double>&, DistanceKind);
template Tensor<float> class_log_probs<float>(const Tensor<float>&, const PrototypesT<float>&, DistanceKind);
template Tensor<double> class_log_probs<double>(const Tensor<double>&, const PrototypesT<double>&, DistanceKind);
template std::vector<int64_t> predict<float>(const Tensor<float>&, const PrototypesT<float>&, DistanceKind);
template std::vector<int64_t> predict<double>(const Tensor<double>&, const PrototypesT<double>&, DistanceKind);
template NodeId episode_loss<float>(Graph<float>&, const EmbedderSpec&, const ParamNodes<float>&,
                                    const Dataset&, const Episode&, DistanceKind);
template NodeId episode_loss<double>(Graph<double>&, const EmbedderSpec&, const ParamNodes<double>&,
                                     const Dataset&, const Episode&, DistanceKind);
template EpisodeNodes episode_loss_nodes<float>(Graph<float>&, const EmbedderSpec&, const ParamNodes<float>&,
                                                const Dataset&, const Episode&, DistanceKind);
template EpisodeNodes episode_loss_nodes<double>(Graph<double>&, const EmbedderSpec&,
                                                 const ParamNodes<double>&, const Dataset&, const Episode&,
                                                 DistanceKind);
template EpisodeScore score_episode<float>(const EmbedderSpec&, const ParamSetT<float>&, const Dataset&,
                                           const Episode&, DistanceKind);
template EpisodeScore score_episode<double>(const EmbedderSpec&, const ParamSetT<double>&, const Dataset&,
                                            const Episode&, DistanceKind);

}  // namespace fsep
