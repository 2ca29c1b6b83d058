#include "fsep/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fsep/error.hpp"

namespace fsep {

namespace {

double norm2(std::span<const double> v) {
  double acc = 0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

double default_hvp_step(std::span<const double> w, std::span<const double> v) {
  return 1e-4 * (1.0 + norm2(w)) / norm2(v);
}

std::vector<double> hvp(const LossGradFn& loss_fn, std::span<const double> w,
                        std::span<const double> v, double h) {
  const double vnorm = norm2(v);
  if (vnorm == 0) raise(ErrorCode::InvalidArgument, "hvp probe vector must be nonzero");
  if (h <= 0) raise(ErrorCode::InvalidArgument, "hvp step must be positive");
  const size_t n = w.size();

  std::vector<double> point(n);
  std::vector<double> grad_plus(n), grad_minus(n);
  for (size_t i = 0; i < n; ++i) point[i] = w[i] + h * v[i] / vnorm;
  loss_fn(point, &grad_plus);
  for (size_t i = 0; i < n; ++i) point[i] = w[i] - h * v[i] / vnorm;
  loss_fn(point, &grad_minus);

  std::vector<double> out(n);
  const double scale = vnorm / (2.0 * h);
  for (size_t i = 0; i < n; ++i) {
    out[i] = (grad_plus[i] - grad_minus[i]) * scale;
    if (!std::isfinite(out[i])) raise(ErrorCode::NonFiniteGradient, "non-finite Hessian-vector product");
  }
  return out;
}

SpectrumReport top_eigenvalues(const LossGradFn& loss_fn, std::span<const double> w, int k, double tol,
                               int64_t max_power_iters, uint64_t seed) {
  if (k < 1) raise(ErrorCode::InvalidArgument, "k must be >= 1");
  if (tol <= 0) raise(ErrorCode::InvalidArgument, "tol must be > 0");
  const size_t n = w.size();
  if (static_cast<size_t>(k) > n) {
    raise(ErrorCode::InvalidArgument, "k exceeds the parameter dimension");
  }

  Rng rng = Rng::for_stream(seed, Stream::spectrum);
  const double h = 1e-4 * (1.0 + norm2(w));  // probes are unit vectors

  std::vector<std::vector<double>> vectors;
  std::vector<double> values;
  SpectrumReport report;

  auto orthogonalize = [&](std::vector<double>& u) {
    for (const auto& prev : vectors) {
      const double c = dot(u, prev);
      for (size_t i = 0; i < n; ++i) u[i] -= c * prev[i];
    }
  };

  for (int j = 0; j < k; ++j) {
    std::vector<double> u(n);
    for (auto& x : u) x = rng.normal();
    orthogonalize(u);
    double unorm = norm2(u);
    // A random start can only be near-degenerate with the found subspace by
    // accident; redraw until it is not.
    while (unorm < 1e-12) {
      for (auto& x : u) x = rng.normal();
      orthogonalize(u);
      unorm = norm2(u);
    }
    for (auto& x : u) x /= unorm;

    double lambda = 0;
    double residual = std::numeric_limits<double>::infinity();
    double lambda_prev = std::numeric_limits<double>::infinity();
    int64_t iters = 0;
    bool converged = false;
    int quiet = 0;
    // The successive-change test underestimates the true error when
    // adjacent eigenvalues are close (small steps while still far from the
    // limit), so the stop needs the change to stay below tol/10 for several
    // iterations in a row.
    const double inner_tol = tol / 10.0;
    constexpr int kQuietIters = 3;
    while (iters < max_power_iters) {
      ++iters;
      std::vector<double> z = hvp(loss_fn, w, u, h);
      // Deflate found directions, then re-orthogonalize for numerical hygiene.
      for (size_t p = 0; p < vectors.size(); ++p) {
        const double c = dot(u, vectors[p]);
        for (size_t i = 0; i < n; ++i) z[i] -= values[p] * c * vectors[p][i];
      }
      for (const auto& prev : vectors) {
        const double c = dot(z, prev);
        for (size_t i = 0; i < n; ++i) z[i] -= c * prev[i];
      }
      lambda = dot(u, z);  // Rayleigh quotient of the deflated operator
      const double znorm = norm2(z);
      if (znorm < 1e-14) {
        // u is (numerically) in the kernel of the deflated operator.
        lambda = 0;
        residual = 0;
        converged = true;
        break;
      }
      for (size_t i = 0; i < n; ++i) u[i] = z[i] / znorm;
      residual = std::abs(lambda - lambda_prev) / std::max(std::abs(lambda), 1e-12);
      quiet = residual < inner_tol ? quiet + 1 : 0;
      if (quiet >= kQuietIters) {
        converged = true;
        break;
      }
      lambda_prev = lambda;
    }
    if (!converged && residual < tol) converged = true;

    vectors.push_back(u);
    values.push_back(lambda);
    report.eigenvalues.push_back(lambda);
    report.residuals.push_back(residual);
    report.iterations.push_back(iters);
    report.converged.push_back(converged);
    report.eigenvectors.push_back(std::move(u));
  }

  // Report in non-increasing |lambda| order.
  std::vector<size_t> order(report.eigenvalues.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::abs(report.eigenvalues[a]) > std::abs(report.eigenvalues[b]);
  });
  SpectrumReport sorted;
  sorted.description = report.description;
  sorted.episode_seed = report.episode_seed;
  for (size_t idx : order) {
    sorted.eigenvalues.push_back(report.eigenvalues[idx]);
    sorted.residuals.push_back(report.residuals[idx]);
    sorted.iterations.push_back(report.iterations[idx]);
    sorted.converged.push_back(report.converged[idx]);
    sorted.eigenvectors.push_back(std::move(report.eigenvectors[idx]));
  }
  return sorted;
}

SpectrumReport spectrum_of_checkpoint(const Checkpoint& ckpt, const Dataset& data, int n_episodes,
                                      int k, double tol, int64_t max_power_iters, uint64_t seed) {
  if (n_episodes < 1) raise(ErrorCode::InvalidArgument, "need at least one episode");

  // Freeze the episode sample defining the analyzed loss.
  Rng episode_rng = Rng::for_stream(seed, Stream::spectrum);
  std::vector<Episode> episodes;
  episodes.reserve(static_cast<size_t>(n_episodes));
  for (int e = 0; e < n_episodes; ++e) {
    episodes.push_back(
        sample_episode(data, ckpt.config.way, ckpt.config.shot, ckpt.config.query, episode_rng));
  }

  const ParamSetT<double> reference = ckpt.eval_params().cast<double>();
  const std::vector<double> w = flatten_params(reference);
  const EmbedderSpec spec = ckpt.spec;
  const DistanceKind distance = ckpt.config.distance;

  LossGradFn loss_fn = [&, episodes](std::span<const double> point,
                                     std::vector<double>* grad) -> double {
    const ParamSetT<double> params = unflatten_params(reference, point);
    double total = 0;
    if (grad) {
      grad->assign(point.size(), 0.0);
    }
    for (const Episode& e : episodes) {
      Graph<double> g;
      ParamNodes<double> nodes = insert_params(g, params);
      NodeId loss = episode_loss(g, spec, nodes, data, e, distance);
      total += g.value(loss)[0];
      if (grad) {
        GradMap<double> gm = g.backward(loss);
        size_t offset = 0;
        for (const Tensor<double>& gt : gm.grads) {
          for (int64_t i = 0; i < gt.size(); ++i) (*grad)[offset + static_cast<size_t>(i)] += gt[i];
          offset += static_cast<size_t>(gt.size());
        }
      }
    }
    const double inv = 1.0 / static_cast<double>(episodes.size());
    if (grad) {
      for (double& gv : *grad) gv *= inv;
    }
    return total * inv;
  };

  SpectrumReport report = top_eigenvalues(loss_fn, w, k, tol, max_power_iters, seed);
  report.episode_seed = seed;
  report.description = "mean episode loss over " + std::to_string(n_episodes) + " episodes (way " +
                       std::to_string(ckpt.config.way) + ", shot " + std::to_string(ckpt.config.shot) +
                       ", query " + std::to_string(ckpt.config.query) + ", distance " +
                       distance_kind_name(distance) + "); batchnorm uses batch statistics";
  return report;
}

std::string spectrum_to_csv(const SpectrumReport& report) {
  std::string out = "rank,eigenvalue,residual,iterations,converged\n";
  for (size_t i = 0; i < report.eigenvalues.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_double(report.eigenvalues[i]) + "," +
           format_double(report.residuals[i]) + "," + std::to_string(report.iterations[i]) + "," +
           (report.converged[i] ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace fsep
