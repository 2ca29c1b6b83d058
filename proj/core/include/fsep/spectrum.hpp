#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fsep/data.hpp"
#include "fsep/train.hpp"

namespace fsep {

/// Loss over a flat f64 parameter vector; fills *grad (same length) when
/// non-null.
using LossGradFn = std::function<double(std::span<const double> w, std::vector<double>* grad)>;

/// Top-k Hessian eigenvalues by power iteration on Hessian-vector products,
/// with rank-one deflation. Entries are ordered by descending |lambda|;
/// signs are preserved.
struct SpectrumReport {
  std::vector<double> eigenvalues;
  std::vector<double> residuals;   // relative change at termination
  std::vector<int64_t> iterations;
  std::vector<bool> converged;
  std::vector<std::vector<double>> eigenvectors;  // orthonormal, aligned with eigenvalues
  std::string description;
  uint64_t episode_seed = 0;
};

/// Central-difference step 1e-4 * (1 + ||w||) / ||v||.
double default_hvp_step(std::span<const double> w, std::span<const double> v);

/// (grad(w + h*v_hat) - grad(w - h*v_hat)) / (2h) * ||v||.
std::vector<double> hvp(const LossGradFn& loss_fn, std::span<const double> w,
                        std::span<const double> v, double h);

SpectrumReport top_eigenvalues(const LossGradFn& loss_fn, std::span<const double> w, int k = 10,
                               double tol = 1e-4, int64_t max_power_iters = 5000, uint64_t seed = 0);

/// Hessian spectrum of the mean episode loss at a checkpoint's parameters.
/// The episode sample is frozen up front from `seed` so the analyzed
/// function is deterministic; batchnorm uses batch statistics, as in
/// training.
SpectrumReport spectrum_of_checkpoint(const Checkpoint& ckpt, const Dataset& data, int n_episodes,
                                      int k = 10, double tol = 1e-4, int64_t max_power_iters = 5000,
                                      uint64_t seed = 0);

/// Header `rank,eigenvalue,residual,iterations,converged`.
std::string spectrum_to_csv(const SpectrumReport& report);

}  // namespace fsep
