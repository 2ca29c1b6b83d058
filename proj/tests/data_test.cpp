#include <doctest.h>

#include <filesystem>
#include <unistd.h>
#include <set>

#include "fsep/data.hpp"
#include "fsep/image_io.hpp"
#include "test_util.hpp"

using namespace fsep;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fsep_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

GrayImage constant_image(int64_t side, uint8_t value) {
  GrayImage img;
  img.width = img.height = side;
  img.pixels.assign(static_cast<size_t>(side * side), value);
  return img;
}

}  // namespace

TEST_CASE("image folders load with lexicographic class order") {
  TempDir dir("folder");
  for (const char* cls : {"beta", "alpha"}) {
    fs::create_directories(dir.path / cls);
    for (int i = 0; i < 3; ++i) {
      write_png_gray(dir.path / cls / ("img" + std::to_string(i) + ".png"), constant_image(28, 128));
    }
  }
  Dataset d = load_image_folder(dir.path);
  CHECK(d.num_classes() == 2);
  CHECK(d.classes[0].label == "alpha");
  CHECK(d.classes[1].label == "beta");
  CHECK(d.feature_shape == Shape{1, 28, 28});
  CHECK(d.examples_in(0) == 3);
  for (const ClassRecord& c : d.classes) {
    for (const TensorF& t : c.examples) {
      for (int64_t i = 0; i < t.size(); ++i) {
        CHECK(t[i] >= 0.0f);
        CHECK(t[i] <= 1.0f);
      }
    }
  }
}

TEST_CASE("a constant white image stays all ones through the box resize") {
  TempDir dir("white");
  fs::create_directories(dir.path / "c");
  write_png_gray(dir.path / "c" / "w.png", constant_image(56, 255));
  Dataset d = load_image_folder(dir.path);
  const TensorF& t = d.classes[0].examples[0];
  for (int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == 1.0f);
}

TEST_CASE("a constant image survives the bilinear path too") {
  // 105 -> 28 is a non-integral ratio, the Omniglot case
  TempDir dir("bilinear");
  fs::create_directories(dir.path / "c");
  write_png_gray(dir.path / "c" / "g.png", constant_image(105, 51));
  Dataset d = load_image_folder(dir.path);
  const TensorF& t = d.classes[0].examples[0];
  for (int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(0.2f).epsilon(1e-6));
}

TEST_CASE("a half-black half-white image box-averages per block") {
  GrayImage img = constant_image(56, 0);
  for (int64_t y = 0; y < 56; ++y) {
    for (int64_t x = 28; x < 56; ++x) img.pixels[static_cast<size_t>(y * 56 + x)] = 255;
  }
  std::vector<float> out = resize_gray_to_unit(img, 28, 28);
  CHECK(out[0] == 0.0f);
  CHECK(out[27] == 1.0f);
  CHECK(out[14 * 28 + 13] == 0.0f);
  CHECK(out[14 * 28 + 14] == 1.0f);
}

TEST_CASE("an empty class directory is reported by name") {
  TempDir dir("empty");
  fs::create_directories(dir.path / "full");
  write_png_gray(dir.path / "full" / "a.png", constant_image(28, 10));
  fs::create_directories(dir.path / "vacant");
  CHECK_THROWS_WITH_AS(load_image_folder(dir.path), doctest::Contains("vacant"), Error);
}

TEST_CASE("a directory with no classes is rejected") {
  TempDir dir("none");
  CHECK_THROWS_AS(load_image_folder(dir.path), Error);
}

TEST_CASE("rotation augmentation quadruples classes in block order") {
  Rng rng(11);
  Dataset d;
  d.feature_shape = {1, 4, 4};
  for (int j = 0; j < 3; ++j) {
    ClassRecord rec;
    rec.label = "c" + std::to_string(j);
    rec.examples.push_back(testutil::random_tensor<float>(d.feature_shape, rng, 0, 1));
    rec.examples.push_back(testutil::random_tensor<float>(d.feature_shape, rng, 0, 1));
    d.classes.push_back(std::move(rec));
  }

  Dataset aug = augment_rotations(d);
  REQUIRE(aug.num_classes() == 12);
  CHECK(aug.classes[0].label == "c0_rot0");
  CHECK(aug.classes[2].label == "c2_rot0");
  CHECK(aug.classes[3].label == "c0_rot90");
  CHECK(aug.classes[11].label == "c2_rot270");
  for (int64_t j = 0; j < 12; ++j) CHECK(aug.examples_in(j) == 2);

  SUBCASE("the zero-rotation block is bit-identical to the input") {
    for (int j = 0; j < 3; ++j) {
      for (int i = 0; i < 2; ++i) {
        const TensorF& a = d.classes[j].examples[i];
        const TensorF& b = aug.classes[j].examples[i];
        for (int64_t p = 0; p < a.size(); ++p) CHECK(a[p] == b[p]);
      }
    }
  }

  SUBCASE("quarter turns compose to the identity bit-exactly") {
    // Augmenting twice gives composed rotations: rot90 then rot270 (and
    // rot180 twice) must reproduce the original image exactly.
    Dataset twice = augment_rotations(aug);
    const TensorF& original = d.classes[1].examples[0];
    for (const char* label : {"c1_rot90_rot270", "c1_rot180_rot180", "c1_rot270_rot90"}) {
      int64_t found = -1;
      for (int64_t j = 0; j < twice.num_classes(); ++j) {
        if (twice.classes[static_cast<size_t>(j)].label == label) found = j;
      }
      REQUIRE(found >= 0);
      const TensorF& back = twice.classes[static_cast<size_t>(found)].examples[0];
      for (int64_t p = 0; p < original.size(); ++p) CHECK(original[p] == back[p]);
    }
  }
}

TEST_CASE("rotation requires square images") {
  Dataset d;
  d.feature_shape = {3};
  d.classes.push_back({"v", {TensorF({3}, {1, 2, 3})}});
  CHECK_THROWS_AS(augment_rotations(d), Error);
}

TEST_CASE("synthetic gaussians have the requested structure") {
  Dataset d = synth_gaussians(5, 20, 16, 5, 1, 7);
  CHECK(d.num_classes() == 5);
  CHECK(d.feature_shape == Shape{16});
  for (int64_t j = 0; j < 5; ++j) CHECK(d.examples_in(j) == 20);
}

TEST_CASE("synthetic gaussians are deterministic in the seed") {
  Dataset a = synth_gaussians(3, 4, 8, 2, 0.5, 99);
  Dataset b = synth_gaussians(3, 4, 8, 2, 0.5, 99);
  for (int64_t j = 0; j < 3; ++j) {
    for (int64_t i = 0; i < 4; ++i) {
      const TensorF& x = a.classes[j].examples[i];
      const TensorF& y = b.classes[j].examples[i];
      for (int64_t p = 0; p < x.size(); ++p) CHECK(x[p] == y[p]);
    }
  }
}

TEST_CASE("synthetic gaussians validate their arguments") {
  CHECK_THROWS_AS(synth_gaussians(1, 20, 16, 5, 1, 0), Error);
  CHECK_THROWS_AS(synth_gaussians(5, 1, 16, 5, 1, 0), Error);
  CHECK_THROWS_AS(synth_gaussians(5, 20, 1, 5, 1, 0), Error);
  CHECK_THROWS_AS(synth_gaussians(5, 20, 16, 0, 1, 0), Error);
  CHECK_THROWS_AS(synth_gaussians(5, 20, 16, 5, 0, 0), Error);
}

TEST_CASE("well-separated gaussians are nearest-centroid classifiable") {
  // Monte-Carlo oracle: centroids from the first 20 examples per class,
  // 10000 held-out draws from the same generator stream.
  const int64_t train_h = 20, test_h = 2000;
  Dataset d = synth_gaussians(5, train_h + test_h, 16, 5, 1, 7);
  std::vector<std::vector<double>> centroids(5, std::vector<double>(16, 0.0));
  for (int64_t j = 0; j < 5; ++j) {
    for (int64_t i = 0; i < train_h; ++i) {
      const TensorF& x = d.classes[j].examples[i];
      for (int64_t p = 0; p < 16; ++p) centroids[j][p] += x[p];
    }
    for (double& c : centroids[j]) c /= static_cast<double>(train_h);
  }
  int64_t correct = 0, total = 0;
  for (int64_t j = 0; j < 5; ++j) {
    for (int64_t i = train_h; i < train_h + test_h; ++i) {
      const TensorF& x = d.classes[j].examples[i];
      double best = 1e300;
      int64_t arg = -1;
      for (int64_t k = 0; k < 5; ++k) {
        double dist = 0;
        for (int64_t p = 0; p < 16; ++p) {
          const double diff = x[p] - centroids[k][p];
          dist += diff * diff;
        }
        if (dist < best) {
          best = dist;
          arg = k;
        }
      }
      correct += (arg == j);
      ++total;
    }
  }
  CHECK(total == 10000);
  CHECK(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("splits partition by explicit labels") {
  Dataset d = synth_gaussians(4, 3, 4, 1, 0.1, 3);
  auto [train, val, test] = split(d, {"c000", "c002"}, {"c001"}, {"c003"});
  CHECK(train.num_classes() == 2);
  CHECK(val.num_classes() == 1);
  CHECK(test.num_classes() == 1);
  CHECK(train.classes[0].label == "c000");
  CHECK(train.classes[1].label == "c002");

  std::set<std::string> all;
  for (const Dataset* s : {&train, &val, &test}) {
    for (const ClassRecord& c : s->classes) CHECK(all.insert(c.label).second);
  }
  CHECK(all == std::set<std::string>{"c000", "c001", "c002", "c003"});
}

TEST_CASE("overlapping split lists are rejected") {
  Dataset d = synth_gaussians(3, 3, 4, 1, 0.1, 3);
  CHECK_THROWS_AS(split(d, {"c000", "c001"}, {"c001"}, {}), Error);
}

TEST_CASE("unknown split labels are rejected") {
  Dataset d = synth_gaussians(3, 3, 4, 1, 0.1, 3);
  CHECK_THROWS_AS(split(d, {"c009"}, {}, {}), Error);
}
