#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsep/rng.hpp"
#include "fsep/tensor.hpp"

namespace fsep {

struct ClassRecord {
  std::string label;
  std::vector<TensorF> examples;
};

/// Immutable after construction; class ids are positions in `classes`.
struct Dataset {
  std::vector<ClassRecord> classes;
  Shape feature_shape;

  int64_t num_classes() const { return static_cast<int64_t>(classes.size()); }
  int64_t examples_in(int64_t class_id) const {
    return static_cast<int64_t>(classes[static_cast<size_t>(class_id)].examples.size());
  }
  /// Uniform per-class example count; error if classes differ.
  int64_t uniform_examples_per_class() const;

  void validate() const;
};

/// Loads `root/<class>/<image>.png` (8-bit grayscale PNG), resizing each
/// image to 28x28 and scaling to [0,1]. Classes are ordered by
/// lexicographic subdirectory name.
Dataset load_image_folder(const std::filesystem::path& root);

/// Quadruples the class count with 0/90/180/270 degree rotations. Output
/// order: all rot0 classes, then rot90, rot180, rot270, each block in input
/// order; labels get a "_rot{0,90,180,270}" suffix.
Dataset augment_rotations(const Dataset& d);

/// L Gaussian classes in R^dim: means uniform on the sphere of radius
/// `separation`, examples mean + noise * standard normal. Deterministic in
/// `seed`.
Dataset synth_gaussians(int64_t L, int64_t H, int64_t dim, double separation, double noise,
                        uint64_t seed);

/// Class-disjoint restriction of `d` to three explicit label lists,
/// preserving dataset order within each output.
std::array<Dataset, 3> split(const Dataset& d, const std::vector<std::string>& train_labels,
                             const std::vector<std::string>& val_labels,
                             const std::vector<std::string>& test_labels);

}  // namespace fsep
