#include <doctest.h>

#include "fsep/embed.hpp"
#include "test_util.hpp"

using namespace fsep;
using testutil::random_tensor;

namespace {

EmbedderSpec convnet_spec(int width = 64, int64_t side = 28) {
  EmbedderSpec spec;
  spec.kind = EmbedderSpec::Kind::convnet4;
  spec.input_shape = {1, side, side};
  spec.width = width;
  return spec;
}

EmbedderSpec mlp_spec(int64_t in, std::vector<int> hidden, int out) {
  EmbedderSpec spec;
  spec.kind = EmbedderSpec::Kind::mlp;
  spec.input_shape = {in};
  spec.hidden = std::move(hidden);
  spec.output_dim = out;
  return spec;
}

}  // namespace

TEST_CASE("convnet4 on 28x28 has a 64-dimensional embedding") {
  EmbedderSpec spec = convnet_spec();
  spec.validate();
  // spatial sizes 28 -> 14 -> 7 -> 3 -> 1 under floor-halved pooling
  CHECK(spec.embedding_dim() == 64);
  CHECK(convnet_spec(32).embedding_dim() == 32);
}

TEST_CASE("convnet4 rejects inputs too small to pool four times") {
  EmbedderSpec spec = convnet_spec(64, 15);
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("initialization zeroes shifts and biases and ones the scales") {
  Rng rng(4);
  ParamSet params = init_params<float>(convnet_spec(8, 16), rng);
  for (const auto& [name, tensor] : params.entries) {
    if (name.ends_with(".bn.shift") || name.ends_with(".conv.bias")) {
      for (int64_t i = 0; i < tensor.size(); ++i) CHECK(tensor[i] == 0.0f);
    }
    if (name.ends_with(".bn.scale")) {
      for (int64_t i = 0; i < tensor.size(); ++i) CHECK(tensor[i] == 1.0f);
    }
  }
}

TEST_CASE("initialization is deterministic in the seed") {
  Rng a(12), b(12);
  ParamSet pa = init_params<float>(convnet_spec(8, 16), a);
  ParamSet pb = init_params<float>(convnet_spec(8, 16), b);
  REQUIRE(pa.entries.size() == pb.entries.size());
  for (size_t i = 0; i < pa.entries.size(); ++i) {
    CHECK(pa.entries[i].first == pb.entries[i].first);
    const TensorF& x = pa.entries[i].second;
    const TensorF& y = pb.entries[i].second;
    for (int64_t j = 0; j < x.size(); ++j) CHECK(x[j] == y[j]);
  }
}

TEST_CASE("convnet4 embeds a batch to [B, M]") {
  Rng rng(8);
  EmbedderSpec spec = convnet_spec(8, 16);
  ParamSet params = init_params<float>(spec, rng);
  Graph<float> g;
  ParamNodes<float> nodes = insert_params(g, params);
  NodeId batch = g.input(random_tensor<float>({10, 1, 16, 16}, rng, 0, 1));
  NodeId out = embed(spec, nodes, g, batch);
  CHECK(g.value(out).shape() == Shape{10, 8});
}

TEST_CASE("convnet4 refuses a single-example batch") {
  Rng rng(8);
  EmbedderSpec spec = convnet_spec(4, 16);
  ParamSet params = init_params<float>(spec, rng);
  Graph<float> g;
  ParamNodes<float> nodes = insert_params(g, params);
  NodeId batch = g.input(random_tensor<float>({1, 1, 16, 16}, rng, 0, 1));
  CHECK_THROWS_AS(embed(spec, nodes, g, batch), Error);
}

TEST_CASE("an identity mlp embeds to its input") {
  EmbedderSpec spec = mlp_spec(3, {}, 3);
  ParamSetT<double> params;
  Tensor<double> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1;
  params.entries.emplace_back("layer1.weight", eye);
  params.entries.emplace_back("layer1.bias", Tensor<double>({3}));

  Rng rng(2);
  Tensor<double> batch = random_tensor<double>({4, 3}, rng);
  Graph<double> g;
  ParamNodes<double> nodes = insert_params(g, params);
  NodeId out = embed(spec, nodes, g, g.input(batch));
  for (int64_t i = 0; i < batch.size(); ++i) CHECK(g.value(out)[i] == batch[i]);
}

TEST_CASE("embedding is batch-permutation equivariant bit for bit") {
  Rng rng(21);
  EmbedderSpec spec = convnet_spec(4, 16);
  ParamSet params = init_params<float>(spec, rng);
  Tensor<float> batch = random_tensor<float>({6, 1, 16, 16}, rng, 0, 1);

  // reversal permutation
  Tensor<float> permuted(batch.shape());
  const int64_t stride = 16 * 16;
  for (int64_t b = 0; b < 6; ++b) {
    std::copy(batch.data() + b * stride, batch.data() + (b + 1) * stride,
              permuted.data() + (5 - b) * stride);
  }

  Graph<float> g1, g2;
  NodeId out1 = embed(spec, insert_params(g1, params), g1, g1.input(batch));
  NodeId out2 = embed(spec, insert_params(g2, params), g2, g2.input(permuted));
  const Tensor<float>& e1 = g1.value(out1);
  const Tensor<float>& e2 = g2.value(out2);
  const int64_t m = e1.dim(1);
  for (int64_t b = 0; b < 6; ++b) {
    for (int64_t j = 0; j < m; ++j) CHECK(e1[b * m + j] == e2[(5 - b) * m + j]);
  }
}

TEST_CASE("parameter flattening round-trips bit-exactly") {
  Rng rng(31);
  ParamSet params = init_params<float>(convnet_spec(6, 16), rng);
  std::vector<float> flat = flatten_params(params);
  CHECK(static_cast<int64_t>(flat.size()) == params.total_size());
  ParamSet back = unflatten_params(params, std::span<const float>(flat));
  REQUIRE(back.entries.size() == params.entries.size());
  for (size_t i = 0; i < params.entries.size(); ++i) {
    CHECK(back.entries[i].first == params.entries[i].first);
    const TensorF& x = params.entries[i].second;
    const TensorF& y = back.entries[i].second;
    for (int64_t j = 0; j < x.size(); ++j) CHECK(x[j] == y[j]);
  }
}

TEST_CASE("mlp parameter count matches the hand sum") {
  // 16->32->8: 16*32 + 32 + 32*8 + 8 = 808
  EmbedderSpec spec = mlp_spec(16, {32}, 8);
  CHECK(spec.param_count() == 808);
  Rng rng(1);
  ParamSetT<double> params = init_params<double>(spec, rng);
  CHECK(static_cast<int64_t>(flatten_params(params).size()) == 808);
}

TEST_CASE("unflattening the wrong length fails") {
  Rng rng(1);
  ParamSet params = init_params<float>(mlp_spec(4, {}, 2), rng);
  std::vector<float> flat = flatten_params(params);
  flat.pop_back();
  CHECK_THROWS_AS(unflatten_params(params, std::span<const float>(flat)), Error);
}
