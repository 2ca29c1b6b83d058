#include <doctest.h>

#include <cmath>
#include <cstring>

#include "fsep/evalreport.hpp"
#include "test_util.hpp"

using namespace fsep;

namespace {

// Checkpoint wrapper around explicit parameters, no training involved.
Checkpoint fixed_checkpoint(EmbedderSpec spec, ParamSet params, int way, int shot,
                            DistanceKind d = DistanceKind::sq_euclidean) {
  Checkpoint ckpt;
  ckpt.spec = std::move(spec);
  ckpt.params = std::move(params);
  ckpt.opt = AdamState::init_like(ckpt.params);
  ckpt.config.way = way;
  ckpt.config.shot = shot;
  ckpt.config.distance = d;
  ckpt.config.seed = 0;
  ckpt.sampling_rng_state = Rng::for_stream(0, Stream::sampling).state_string();
  ckpt.validation_rng_state = Rng::for_stream(0, Stream::validation).state_string();
  return ckpt;
}

}  // namespace

TEST_CASE("the summary statistics match the hand computation") {
  const auto [mean, ci] = summarize_accuracies({0.8, 1.0, 0.9, 0.9});
  CHECK(mean == doctest::Approx(0.9).epsilon(1e-12));
  // sample stddev 0.081650, 1.96 * 0.081650 / 2 = 0.080017
  CHECK(ci == doctest::Approx(0.0800).epsilon(1e-3));
  const auto [m1, c1] = summarize_accuracies({0.7});
  CHECK(m1 == 0.7);
  CHECK(c1 == 0.0);
  const auto [m2, c2] = summarize_accuracies({0.5, 0.5, 0.5});
  CHECK(c2 == 0.0);
}

TEST_CASE("a perfectly separable embedding scores accuracy one with zero width") {
  // classes sit at distinct one-hot points with no noise; identity embedding
  Dataset d;
  d.feature_shape = {4};
  for (int j = 0; j < 4; ++j) {
    ClassRecord rec;
    rec.label = "p" + std::to_string(j);
    for (int i = 0; i < 6; ++i) {
      std::vector<float> v(4, 0.0f);
      v[static_cast<size_t>(j)] = 1.0f;
      rec.examples.emplace_back(d.feature_shape, v);
    }
    d.classes.push_back(std::move(rec));
  }

  EmbedderSpec spec;
  spec.kind = EmbedderSpec::Kind::mlp;
  spec.input_shape = {4};
  spec.output_dim = 4;
  ParamSet params;
  TensorF eye({4, 4});
  for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0f;
  params.entries.emplace_back("layer1.weight", eye);
  params.entries.emplace_back("layer1.bias", TensorF({4}));

  EvalReport r = evaluate(fixed_checkpoint(spec, params, 3, 1), d, 50, 2, 123);
  CHECK(r.mean == 1.0);
  CHECK(r.ci95_halfwidth == 0.0);
  CHECK(r.n_episodes == 50);
}

TEST_CASE("evaluation is deterministic in its seed") {
  Rng rng(91);
  Dataset d = testutil::random_image_dataset(4, 8, 16, rng);
  EmbedderSpec spec;
  spec.kind = EmbedderSpec::Kind::convnet4;
  spec.input_shape = {1, 16, 16};
  spec.width = 4;
  Rng init(7);
  ParamSet params = init_params<float>(spec, init);
  Checkpoint ckpt = fixed_checkpoint(spec, params, 2, 1);

  EvalReport a = evaluate(ckpt, d, 20, 2, 77);
  EvalReport b = evaluate(ckpt, d, 20, 2, 77);
  CHECK(std::memcmp(&a.mean, &b.mean, sizeof(double)) == 0);
  CHECK(a.per_episode_accuracy == b.per_episode_accuracy);

  EvalReport c = evaluate(ckpt, d, 20, 2, 78);
  CHECK(a.per_episode_accuracy != c.per_episode_accuracy);
}

TEST_CASE("an uninformative embedding scores chance accuracy") {
  // all classes share one distribution, so no embedding can beat 1/K
  Rng rng(17);
  Dataset d;
  d.feature_shape = {6};
  for (int j = 0; j < 4; ++j) {
    ClassRecord rec;
    rec.label = "n" + std::to_string(j);
    for (int i = 0; i < 10; ++i) {
      std::vector<float> v(6);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      rec.examples.emplace_back(d.feature_shape, v);
    }
    d.classes.push_back(std::move(rec));
  }
  EmbedderSpec spec;
  spec.kind = EmbedderSpec::Kind::mlp;
  spec.input_shape = {6};
  spec.hidden = {8};
  spec.output_dim = 4;
  Rng init(3);
  ParamSet params = init_params<float>(spec, init);

  EvalReport r = evaluate(fixed_checkpoint(spec, params, 4, 1), d, 300, 5, 2024);
  CHECK(std::abs(r.mean - 0.25) <= 3.0 * r.ci95_halfwidth);
}

TEST_CASE("the report serializes to the documented csv") {
  EvalReport r;
  r.n_episodes = 2;
  r.per_episode_accuracy = {0.8, 1.0};
  const auto [mean, ci] = summarize_accuracies(r.per_episode_accuracy);
  r.mean = mean;
  r.ci95_halfwidth = ci;

  const std::string csv = report_to_csv(r);
  // header, two rows, summary
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.starts_with("episode,accuracy\n"));
  CHECK(csv.find("0,0.800000\n") != std::string::npos);
  CHECK(csv.find("1,1.000000\n") != std::string::npos);

  // the summary round-trips to full precision
  const size_t pos = csv.find("mean,");
  REQUIRE(pos != std::string::npos);
  double parsed_mean = 0, parsed_ci = 0;
  CHECK(std::sscanf(csv.c_str() + pos, "mean,%lf,ci95,%lf", &parsed_mean, &parsed_ci) == 2);
  CHECK(std::abs(parsed_mean - r.mean) < 1e-12);
  CHECK(std::abs(parsed_ci - r.ci95_halfwidth) < 1e-12);
}
