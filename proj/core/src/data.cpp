#include "fsep/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "fsep/error.hpp"
#include "fsep/image_io.hpp"

namespace fsep {

namespace {

constexpr int64_t kImageSide = 28;

// Quarter-turn counter-clockwise: out[i][j] = in[j][n-1-i].
TensorF rotate90(const TensorF& img) {
  const Shape& s = img.shape();
  const int64_t c = s[0], n = s[1];
  TensorF out(s);
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* src = img.data() + ch * n * n;
    float* dst = out.data() + ch * n * n;
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        dst[i * n + j] = src[j * n + (n - 1 - i)];
      }
    }
  }
  return out;
}

}  // namespace

int64_t Dataset::uniform_examples_per_class() const {
  if (classes.empty()) raise(ErrorCode::InvalidArgument, "empty dataset");
  const int64_t h = examples_in(0);
  for (int64_t j = 1; j < num_classes(); ++j) {
    if (examples_in(j) != h) {
      raise(ErrorCode::InvalidArgument, "per-class example counts differ (class " +
                                            classes[static_cast<size_t>(j)].label + ")");
    }
  }
  return h;
}

void Dataset::validate() const {
  for (const ClassRecord& c : classes) {
    if (c.examples.empty()) raise(ErrorCode::InvalidArgument, "class " + c.label + " has no examples");
    for (const TensorF& t : c.examples) {
      if (t.shape() != feature_shape) {
        raise(ErrorCode::ShapeMismatch, "example in class " + c.label + " has shape " +
                                            shape_to_string(t.shape()) + ", expected " +
                                            shape_to_string(feature_shape));
      }
    }
  }
}

Dataset load_image_folder(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) raise(ErrorCode::EmptyDirectory, root.string() + " is not a directory");

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) raise(ErrorCode::EmptyDirectory, root.string() + " has no class directories");

  Dataset d;
  d.feature_shape = {1, kImageSide, kImageSide};
  for (const fs::path& dir : class_dirs) {
    ClassRecord rec;
    rec.label = dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) raise(ErrorCode::EmptyDirectory, dir.string());
    for (const fs::path& f : files) {
      GrayImage img = read_png_gray(f);
      rec.examples.emplace_back(d.feature_shape, resize_gray_to_unit(img, kImageSide, kImageSide));
    }
    d.classes.push_back(std::move(rec));
  }
  d.validate();
  return d;
}

Dataset augment_rotations(const Dataset& d) {
  if (d.feature_shape.size() != 3 || d.feature_shape[1] != d.feature_shape[2]) {
    raise(ErrorCode::NonSquareImage,
          "rotation augmentation needs [c,n,n] features, got " + shape_to_string(d.feature_shape));
  }
  Dataset out;
  out.feature_shape = d.feature_shape;
  const int rotations[4] = {0, 90, 180, 270};
  for (int r = 0; r < 4; ++r) {
    for (const ClassRecord& c : d.classes) {
      ClassRecord rec;
      rec.label = c.label + "_rot" + std::to_string(rotations[r]);
      for (const TensorF& img : c.examples) {
        TensorF rotated = img;
        for (int q = 0; q < r; ++q) rotated = rotate90(rotated);
        rec.examples.push_back(std::move(rotated));
      }
      out.classes.push_back(std::move(rec));
    }
  }
  return out;
}

Dataset synth_gaussians(int64_t L, int64_t H, int64_t dim, double separation, double noise,
                        uint64_t seed) {
  if (L < 2 || H < 2 || dim < 2 || separation <= 0 || noise <= 0) {
    raise(ErrorCode::InvalidArgument,
          "synth_gaussians needs L >= 2, H >= 2, dim >= 2, separation > 0, noise > 0");
  }
  Rng rng(seed);
  Dataset d;
  d.feature_shape = {dim};
  for (int64_t j = 0; j < L; ++j) {
    std::vector<double> mean(static_cast<size_t>(dim));
    double norm = 0;
    do {
      norm = 0;
      for (auto& m : mean) {
        m = rng.normal();
        norm += m * m;
      }
      norm = std::sqrt(norm);
    } while (norm == 0);
    for (auto& m : mean) m *= separation / norm;

    ClassRecord rec;
    char label[16];
    std::snprintf(label, sizeof label, "c%03d", static_cast<int>(j));
    rec.label = label;
    for (int64_t i = 0; i < H; ++i) {
      std::vector<float> v(static_cast<size_t>(dim));
      for (int64_t k = 0; k < dim; ++k) {
        v[static_cast<size_t>(k)] =
            static_cast<float>(mean[static_cast<size_t>(k)] + noise * rng.normal());
      }
      rec.examples.emplace_back(d.feature_shape, std::move(v));
    }
    d.classes.push_back(std::move(rec));
  }
  return d;
}

std::array<Dataset, 3> split(const Dataset& d, const std::vector<std::string>& train_labels,
                             const std::vector<std::string>& val_labels,
                             const std::vector<std::string>& test_labels) {
  std::map<std::string, int64_t> index;
  for (int64_t j = 0; j < d.num_classes(); ++j) index[d.classes[static_cast<size_t>(j)].label] = j;

  std::set<std::string> seen;
  const std::vector<std::string>* lists[3] = {&train_labels, &val_labels, &test_labels};
  for (const auto* list : lists) {
    for (const std::string& label : *list) {
      if (!index.count(label)) raise(ErrorCode::UnknownLabel, label);
      if (!seen.insert(label).second) {
        raise(ErrorCode::OverlappingSplits, label + " appears in more than one split");
      }
    }
  }

  std::array<Dataset, 3> out;
  for (int s = 0; s < 3; ++s) {
    out[s].feature_shape = d.feature_shape;
    // preserve dataset order, not list order
    std::set<std::string> wanted(lists[s]->begin(), lists[s]->end());
    for (const ClassRecord& c : d.classes) {
      if (wanted.count(c.label)) out[s].classes.push_back(c);
    }
  }
  return out;
}

}  // namespace fsep
