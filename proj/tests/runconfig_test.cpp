#include <doctest.h>

#include <filesystem>

#include "fsep/runconfig.hpp"

using namespace fsep;
namespace fs = std::filesystem;

namespace {

const char* kMinimalSynth = R"json({
  "synth": {"classes": 10, "examples_per_class": 20, "dim": 16, "separation": 5, "noise": 1, "seed": 3},
  "embedder": {"kind": "mlp", "input_shape": [16], "hidden": [32], "output_dim": 16},
  "way": 5, "shot": 1
})json";

}  // namespace

TEST_CASE("a minimal synth config fills the standard defaults") {
  RunConfig c = parse_config_text(kMinimalSynth);
  CHECK(c.train.way == 5);
  CHECK(c.train.shot == 1);
  CHECK(c.train.query == 15);
  CHECK(c.train.episodes_per_iter == 1);
  CHECK(c.train.lr0 == 1e-3);
  CHECK(c.train.schedule_multiplier == 1);
  CHECK(c.train.max_iters == 450000);
  CHECK(c.train.val_every == 100);
  CHECK(c.train.val_episodes == 100);
  CHECK(c.train.patience == 20);
  CHECK(c.train.distance == DistanceKind::sq_euclidean);
}

TEST_CASE("iteration budgets default to the per-E settings") {
  std::string base(kMinimalSynth);
  auto with = [&](const std::string& extra) {
    std::string text = base;
    text.insert(text.rfind('}'), extra);
    return parse_config_text(text);
  };
  CHECK(with(", \"episodes_per_iter\": 3").train.max_iters == 150000);
  CHECK(with(", \"episodes_per_iter\": 5").train.max_iters == 90000);
  CHECK(with(", \"episodes_per_iter\": 5, \"max_iters\": 777").train.max_iters == 777);
  CHECK_THROWS_AS(with(", \"episodes_per_iter\": 2"), Error);  // no default budget
  CHECK(with(", \"episodes_per_iter\": 2, \"max_iters\": 1000").train.max_iters == 1000);
}

TEST_CASE("unknown keys are rejected by name") {
  std::string text(kMinimalSynth);
  text.insert(text.rfind('}'), ", \"warmup\": 10");
  CHECK_THROWS_WITH_AS(parse_config_text(text), doctest::Contains("warmup"), Error);
}

TEST_CASE("exactly one dataset source is required") {
  CHECK_THROWS_AS(parse_config_text(R"({"embedder": {"kind": "mlp", "input_shape": [4], "output_dim": 2}})"),
                  Error);
  std::string both(kMinimalSynth);
  both.insert(both.rfind('}'), ", \"data\": \"/tmp/x\"");
  CHECK_THROWS_AS(parse_config_text(both), Error);
}

TEST_CASE("the pretrain block must dominate the target way") {
  std::string text(kMinimalSynth);
  text.insert(text.rfind('}'), ", \"pretrain\": {\"way\": 5}");
  CHECK_THROWS_AS(parse_config_text(text), Error);

  std::string ok(kMinimalSynth);
  ok.insert(ok.rfind('}'), ", \"pretrain\": {\"way\": 10, \"query\": 5, \"max_iters\": 500}");
  RunConfig c = parse_config_text(ok);
  REQUIRE(c.pretrain.has_value());
  CHECK(c.pretrain->way == 10);
  CHECK(c.pretrain->query == 5);
  CHECK(c.pretrain->max_iters == 500);
  CHECK(c.pretrain->finetune);
}

TEST_CASE("bad enum values name the constraint") {
  std::string text(kMinimalSynth);
  text.insert(text.rfind('}'), ", \"distance\": \"manhattan\"");
  CHECK_THROWS_AS(parse_config_text(text), Error);
  std::string sched(kMinimalSynth);
  sched.insert(sched.rfind('}'), ", \"schedule\": 4");
  CHECK_THROWS_AS(parse_config_text(sched), Error);
}

TEST_CASE("synth configs materialize deterministic datasets") {
  RunConfig c = parse_config_text(kMinimalSynth);
  Dataset a = load_dataset(c);
  Dataset b = load_dataset(c);
  CHECK(a.num_classes() == 10);
  CHECK(a.feature_shape == Shape{16});
  CHECK(a.classes[0].label == "c000");
  for (int64_t i = 0; i < a.classes[0].examples[0].size(); ++i) {
    CHECK(a.classes[0].examples[0][i] == b.classes[0].examples[0][i]);
  }
}

TEST_CASE("splits apply the configured label lists") {
  std::string text(kMinimalSynth);
  text.insert(text.rfind('}'),
              ", \"train_labels\": [\"c000\", \"c001\"], \"val_labels\": [\"c002\"], "
              "\"test_labels\": [\"c003\"]");
  RunConfig c = parse_config_text(text);
  auto [tr, va, te] = apply_splits(c, load_dataset(c));
  CHECK(tr.num_classes() == 2);
  CHECK(va.num_classes() == 1);
  CHECK(te.num_classes() == 1);
}

TEST_CASE("synth description files round-trip") {
  const fs::path path = fs::temp_directory_path() / "fsep_synth_desc_test.json";
  SynthParams p;
  p.classes = 7;
  p.examples_per_class = 9;
  p.dim = 4;
  p.separation = 2.5;
  p.noise = 0.5;
  p.seed = 99;
  write_synth_description(path, p);
  SynthParams q = read_synth_description(path);
  CHECK(q.classes == 7);
  CHECK(q.examples_per_class == 9);
  CHECK(q.dim == 4);
  CHECK(q.separation == 2.5);
  CHECK(q.noise == 0.5);
  CHECK(q.seed == 99);

  RunConfig c;
  c.data_path = path.string();
  c.embedder.kind = EmbedderSpec::Kind::mlp;
  c.embedder.input_shape = {4};
  c.embedder.output_dim = 2;
  Dataset d = load_dataset(c);
  CHECK(d.num_classes() == 7);
  fs::remove(path);
}
