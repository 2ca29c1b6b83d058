#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "fsep/spectrum.hpp"
#include "test_util.hpp"

using namespace fsep;

namespace {

LossGradFn quadratic(std::vector<double> diag) {
  return [diag](std::span<const double> w, std::vector<double>* grad) {
    double loss = 0;
    if (grad) grad->assign(w.size(), 0.0);
    for (size_t i = 0; i < w.size(); ++i) {
      loss += 0.5 * diag[i] * w[i] * w[i];
      if (grad) (*grad)[i] = diag[i] * w[i];
    }
    return loss;
  };
}

// protonet loss over fixed episodes and a flat parameter vector
struct MlpLoss {
  EmbedderSpec spec;
  ParamSetT<double> reference;
  Dataset data;
  std::vector<Episode> episodes;

  LossGradFn fn() const {
    return [this](std::span<const double> w, std::vector<double>* grad) {
      const ParamSetT<double> params = unflatten_params(reference, w);
      double total = 0;
      if (grad) grad->assign(w.size(), 0.0);
      for (const Episode& e : episodes) {
        Graph<double> g;
        ParamNodes<double> nodes = insert_params(g, params);
        NodeId loss = episode_loss(g, spec, nodes, data, e, DistanceKind::sq_euclidean);
        total += g.value(loss)[0];
        if (grad) {
          GradMap<double> gm = g.backward(loss);
          size_t off = 0;
          for (const Tensor<double>& t : gm.grads) {
            for (int64_t i = 0; i < t.size(); ++i) (*grad)[off + static_cast<size_t>(i)] += t[i];
            off += static_cast<size_t>(t.size());
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(episodes.size());
      if (grad) {
        for (double& gv : *grad) gv *= inv;
      }
      return total * inv;
    };
  }
};

MlpLoss make_mlp_loss() {
  MlpLoss ml;
  ml.spec.kind = EmbedderSpec::Kind::mlp;
  ml.spec.input_shape = {5};
  ml.spec.output_dim = 5;  // 5*5 + 5 = 30 parameters
  Rng init(3);
  ml.reference = init_params<double>(ml.spec, init);
  ml.data = synth_gaussians(4, 8, 5, 3, 1, 17);
  Rng ep(5);
  ml.episodes.push_back(sample_episode(ml.data, 2, 1, 2, ep));
  ml.episodes.push_back(sample_episode(ml.data, 3, 1, 2, ep));
  return ml;
}

}  // namespace

TEST_CASE("the hvp of an isotropic quadratic is the probe itself") {
  LossGradFn f = quadratic({1, 1, 1, 1});
  std::vector<double> w{0.3, -0.7, 2.0, 0.1};
  std::vector<double> v{1.5, -2.0, 0.25, 3.0};
  std::vector<double> out = hvp(f, w, v, default_hvp_step(w, v));
  for (size_t i = 0; i < v.size(); ++i) CHECK(out[i] == doctest::Approx(v[i]).epsilon(1e-9));
}

TEST_CASE("the hvp of a diagonal quadratic scales per coordinate") {
  LossGradFn f = quadratic({1, 4});
  std::vector<double> w{0.5, 0.5};
  std::vector<double> v{1, 1};
  std::vector<double> out = hvp(f, w, v, default_hvp_step(w, v));
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(out[1] == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("the hvp is linear in the probe on quadratics") {
  LossGradFn f = quadratic({2, 5, 0.5, 1});
  std::vector<double> w{1, -1, 0.2, 0.7};
  std::vector<double> v1{1, 0.5, -2, 0.1};
  std::vector<double> v2{-0.3, 2, 1, 1};
  const double a = 1.7, b = -0.4;
  std::vector<double> combo(4);
  for (int i = 0; i < 4; ++i) combo[i] = a * v1[i] + b * v2[i];

  std::vector<double> h1 = hvp(f, w, v1, default_hvp_step(w, v1));
  std::vector<double> h2 = hvp(f, w, v2, default_hvp_step(w, v2));
  std::vector<double> hc = hvp(f, w, combo, default_hvp_step(w, combo));
  for (int i = 0; i < 4; ++i) {
    CHECK(hc[i] == doctest::Approx(a * h1[i] + b * h2[i]).epsilon(1e-6));
  }
}

TEST_CASE("hvp rejects a zero probe") {
  LossGradFn f = quadratic({1, 1});
  std::vector<double> w{1, 1};
  std::vector<double> zero{0, 0};
  CHECK_THROWS_AS(hvp(f, w, zero, 1e-4), Error);
}

TEST_CASE("power iteration recovers a known diagonal spectrum") {
  LossGradFn f = quadratic({5, 3, 1});
  std::vector<double> w{0.1, 0.2, 0.3};
  SpectrumReport r = top_eigenvalues(f, w, 3, 1e-4, 5000, 1);
  REQUIRE(r.eigenvalues.size() == 3);
  CHECK(r.eigenvalues[0] == doctest::Approx(5.0).epsilon(1e-4));
  CHECK(r.eigenvalues[1] == doctest::Approx(3.0).epsilon(1e-4));
  CHECK(r.eigenvalues[2] == doctest::Approx(1.0).epsilon(1e-4));
  for (bool c : r.converged) CHECK(c);
}

TEST_CASE("a degenerate isotropic spectrum reports equal eigenvalues") {
  LossGradFn f = quadratic({1, 1, 1, 1, 1});
  std::vector<double> w(5, 0.2);
  SpectrumReport r = top_eigenvalues(f, w, 3, 1e-4, 5000, 2);
  for (int i = 0; i < 3; ++i) CHECK(r.eigenvalues[static_cast<size_t>(i)] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("negative eigenvalues keep their sign and rank by magnitude") {
  LossGradFn f = quadratic({-7, 5, 1});
  std::vector<double> w{0.1, 0.1, 0.1};
  SpectrumReport r = top_eigenvalues(f, w, 3, 1e-6, 20000, 3);
  CHECK(r.eigenvalues[0] == doctest::Approx(-7.0).epsilon(1e-3));
  CHECK(r.eigenvalues[1] == doctest::Approx(5.0).epsilon(1e-3));
  CHECK(r.eigenvalues[2] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("estimated eigenvectors stay pairwise orthogonal") {
  LossGradFn f = quadratic({9, 7, 5, 3, 1});
  std::vector<double> w(5, 0.1);
  SpectrumReport r = top_eigenvalues(f, w, 4, 1e-5, 10000, 4);
  for (size_t i = 0; i < r.eigenvectors.size(); ++i) {
    for (size_t j = i + 1; j < r.eigenvectors.size(); ++j) {
      double dot = 0;
      for (size_t p = 0; p < r.eigenvectors[i].size(); ++p) {
        dot += r.eigenvectors[i][p] * r.eigenvectors[j][p];
      }
      CHECK(std::abs(dot) < 1e-6);
    }
  }
}

TEST_CASE("the dominant eigenvalue bounds random Rayleigh quotients") {
  LossGradFn f = quadratic({4, 2, 1, 0.5});
  std::vector<double> w{0.1, 0.1, 0.1, 0.1};
  SpectrumReport r = top_eigenvalues(f, w, 1, 1e-5, 10000, 5);
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(4);
    double norm = 0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    std::vector<double> hv = hvp(f, w, v, default_hvp_step(w, v));
    double rq = 0;
    for (int i = 0; i < 4; ++i) rq += v[static_cast<size_t>(i)] * hv[static_cast<size_t>(i)];
    rq /= norm;
    CHECK(r.eigenvalues[0] >= rq - 1e-4);
  }
}

TEST_CASE("quadratic spectra match within ten times the tolerance") {
  // randomized diagonal quadratics up to 50 dims
  Rng rng(8);
  for (int trial = 0; trial < 3; ++trial) {
    const int n = 10 + trial * 20;
    std::vector<double> diag(static_cast<size_t>(n));
    for (auto& d : diag) d = rng.uniform(0.1, 10.0);
    std::vector<double> sorted = diag;
    std::sort(sorted.begin(), sorted.end(), [](double a, double b) { return a > b; });

    std::vector<double> w(static_cast<size_t>(n), 0.1);
    const double tol = 1e-4;
    SpectrumReport r = top_eigenvalues(quadratic(diag), w, 5, tol, 20000, 100 + trial);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(r.eigenvalues[static_cast<size_t>(i)] - sorted[static_cast<size_t>(i)]) <=
            10 * tol * sorted[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("the mlp protonet spectrum matches a dense eigensolve oracle") {
  MlpLoss ml = make_mlp_loss();
  LossGradFn f = ml.fn();
  std::vector<double> w = flatten_params(ml.reference);
  const int n = static_cast<int>(w.size());
  REQUIRE(n == 30);

  // dense Hessian by central differences of the gradient
  const double h = 1e-5 * (1.0 + std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0)));
  Eigen::MatrixXd H(n, n);
  std::vector<double> point = w, gp(w.size()), gm(w.size());
  for (int i = 0; i < n; ++i) {
    point[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] + h;
    f(point, &gp);
    point[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] - h;
    f(point, &gm);
    point[static_cast<size_t>(i)] = w[static_cast<size_t>(i)];
    for (int j = 0; j < n; ++j) {
      H(i, j) = (gp[static_cast<size_t>(j)] - gm[static_cast<size_t>(j)]) / (2 * h);
    }
  }
  const Eigen::MatrixXd sym = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  std::vector<double> dense(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  std::sort(dense.begin(), dense.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });

  SpectrumReport r = top_eigenvalues(f, w, 10, 1e-4, 20000, 7);
  for (int i = 0; i < 10; ++i) {
    const double expected = dense[static_cast<size_t>(i)];
    CAPTURE(i);
    CHECK(std::abs(r.eigenvalues[static_cast<size_t>(i)] - expected) <=
          1e-3 * std::max(std::abs(expected), 1e-6));
  }
}

TEST_CASE("scaling the loss scales every eigenvalue") {
  MlpLoss ml = make_mlp_loss();
  LossGradFn f = ml.fn();
  const double c = 3.5;
  LossGradFn scaled = [&f, c](std::span<const double> w, std::vector<double>* grad) {
    const double loss = f(w, grad);
    if (grad) {
      for (double& g : *grad) g *= c;
    }
    return c * loss;
  };
  std::vector<double> w = flatten_params(ml.reference);
  SpectrumReport a = top_eigenvalues(f, w, 3, 1e-5, 20000, 9);
  SpectrumReport b = top_eigenvalues(scaled, w, 3, 1e-5, 20000, 9);
  for (int i = 0; i < 3; ++i) {
    CHECK(b.eigenvalues[static_cast<size_t>(i)] ==
          doctest::Approx(c * a.eigenvalues[static_cast<size_t>(i)]).epsilon(1e-3));
  }
}

TEST_CASE("checkpoint spectra are deterministic and ordered") {
  MlpLoss ml = make_mlp_loss();
  Checkpoint ckpt;
  ckpt.spec = ml.spec;
  ckpt.params = ml.reference.cast<float>();
  ckpt.opt = AdamState::init_like(ckpt.params);
  ckpt.config.way = 2;
  ckpt.config.shot = 1;
  ckpt.config.query = 2;
  ckpt.sampling_rng_state = Rng::for_stream(0, Stream::sampling).state_string();
  ckpt.validation_rng_state = Rng::for_stream(0, Stream::validation).state_string();

  SpectrumReport a = spectrum_of_checkpoint(ckpt, ml.data, 3, 5, 1e-4, 5000, 31);
  SpectrumReport b = spectrum_of_checkpoint(ckpt, ml.data, 3, 5, 1e-4, 5000, 31);
  REQUIRE(a.eigenvalues.size() == b.eigenvalues.size());
  for (size_t i = 0; i < a.eigenvalues.size(); ++i) {
    CHECK(std::memcmp(&a.eigenvalues[i], &b.eigenvalues[i], sizeof(double)) == 0);
  }
  for (size_t i = 1; i < a.eigenvalues.size(); ++i) {
    CHECK(std::abs(a.eigenvalues[i - 1]) >= std::abs(a.eigenvalues[i]));
  }
  CHECK(a.episode_seed == 31);
  CHECK(a.description.find("batchnorm") != std::string::npos);

  const std::string csv = spectrum_to_csv(a);
  CHECK(csv.starts_with("rank,eigenvalue,residual,iterations,converged\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
