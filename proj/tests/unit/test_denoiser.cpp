#include <doctest.h>

#include <cmath>

#include "exface/denoiser.hpp"
#include "exface/kernels.hpp"

using namespace exface;

namespace {

ModelConfig tiny(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.dof = 3;
  cfg.blendshape_dim = 5;
  cfg.window = 4;
  cfg.d_model = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 12;
  cfg.mlp_hidden = 6;
  return cfg;
}

struct ExampleData {
  std::vector<double> noisy, cond, target;
  int frames = 4;
  int level = 3;

  Example<double> view() const {
    return Example<double>{noisy.empty() ? nullptr : noisy.data(), cond.data(), target.data(), frames, level};
  }
};

ExampleData random_example(const ModelConfig& cfg, Rng& rng) {
  ExampleData d;
  d.frames = cfg.window;
  d.cond.resize(static_cast<std::size_t>(d.frames) * cfg.blendshape_dim);
  d.target.resize(static_cast<std::size_t>(d.frames) * cfg.dof);
  for (double& v : d.cond) v = rng.uniform();
  for (double& v : d.target) v = rng.uniform();
  if (cfg.kind == ModelKind::kDiffusionTransformer) {
    d.noisy.resize(d.target.size());
    for (double& v : d.noisy) v = rng.normal();
  }
  return d;
}

// Norm-relative error of the analytic gradient against central differences,
// reported per tensor.
void check_gradients(const ModelConfig& cfg) {
  Rng rng(1234);
  auto params = init_params<double>(cfg, rng);
  // Move biases and norms off their init values so every path is exercised.
  for (auto& t : params.tensors()) {
    for (double& v : t.data) v += 0.05 * rng.normal();
  }
  const ExampleData ex = random_example(cfg, rng);
  auto grads = params.zeros_like();
  loss_and_grad<double>(cfg, params, ex.view(), &grads, 1.0);

  const double h = 1e-6;
  for (std::size_t ti = 0; ti < params.tensors().size(); ++ti) {
    auto& t = params.tensors()[ti];
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + h;
      const double up = loss_and_grad<double>(cfg, params, ex.view(), nullptr, 1.0);
      t.data[i] = saved - h;
      const double down = loss_and_grad<double>(cfg, params, ex.view(), nullptr, 1.0);
      t.data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads.tensors()[ti].data[i];
      diff2 += (numeric - analytic) * (numeric - analytic);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double scale = std::max(std::sqrt(std::max(a2, n2)), 1e-9);
    CAPTURE(t.name);
    CHECK(std::sqrt(diff2) / scale < 1e-3);
  }
}

}  // namespace

TEST_CASE("diffusion transformer gradients match finite differences") {
  check_gradients(tiny(ModelKind::kDiffusionTransformer));
}

TEST_CASE("diffusion transformer with x_n in the tokens: gradients match finite differences") {
  ModelConfig cfg = tiny(ModelKind::kDiffusionTransformer);
  cfg.noise_input = NoiseInput::kToken;
  check_gradients(cfg);
}

TEST_CASE("transformer baseline gradients match finite differences") {
  check_gradients(tiny(ModelKind::kTransformer));
}

TEST_CASE("mlp baseline gradients match finite differences") { check_gradients(tiny(ModelKind::kMlp)); }

TEST_CASE("gradients are correct through the reference kernels too") {
  kernels::ScopedBackend guard(kernels::Backend::kReference);
  check_gradients(tiny(ModelKind::kDiffusionTransformer));
}

TEST_CASE("zero parameters give zero diffusion output and 0.5 baseline output") {
  Rng rng(2);
  for (ModelKind kind : {ModelKind::kDiffusionTransformer, ModelKind::kTransformer, ModelKind::kMlp}) {
    const ModelConfig cfg = tiny(kind);
    auto params = init_params<double>(cfg, rng);
    params.fill(0.0);
    const ExampleData ex = random_example(cfg, rng);
    std::vector<double> out(ex.target.size());
    forward<double>(cfg, params, ex.noisy.empty() ? nullptr : ex.noisy.data(), ex.cond.data(), ex.frames,
                    ex.level, out.data());
    const double expect = kind == ModelKind::kDiffusionTransformer ? 0.0 : 0.5;
    for (double v : out) CHECK(v == doctest::Approx(expect));
  }
}

TEST_CASE("sequence models are sensitive to frame order") {
  Rng rng(8);
  const ModelConfig cfg = tiny(ModelKind::kDiffusionTransformer);
  const auto params = init_params<double>(cfg, rng);
  ExampleData ex = random_example(cfg, rng);
  std::vector<double> a(ex.target.size()), b(ex.target.size());
  forward<double>(cfg, params, ex.noisy.data(), ex.cond.data(), ex.frames, ex.level, a.data());
  // Swap the first two frames of both inputs, then swap the outputs back.
  auto swap_rows = [](std::vector<double>& v, int width) {
    std::swap_ranges(v.begin(), v.begin() + width, v.begin() + width);
  };
  swap_rows(ex.noisy, cfg.dof);
  swap_rows(ex.cond, cfg.blendshape_dim);
  forward<double>(cfg, params, ex.noisy.data(), ex.cond.data(), ex.frames, ex.level, b.data());
  swap_rows(b, cfg.dof);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("output depends on the noise level") {
  Rng rng(9);
  const ModelConfig cfg = tiny(ModelKind::kDiffusionTransformer);
  const auto params = init_params<double>(cfg, rng);
  const ExampleData ex = random_example(cfg, rng);
  std::vector<double> a(ex.target.size()), b(ex.target.size());
  forward<double>(cfg, params, ex.noisy.data(), ex.cond.data(), ex.frames, 1, a.data());
  forward<double>(cfg, params, ex.noisy.data(), ex.cond.data(), ex.frames, 20, b.data());
  CHECK(a != b);
}

TEST_CASE("parallel and reference kernels agree on a full forward pass") {
  ModelConfig cfg;
  cfg.dof = 33;
  cfg.window = 120;
  cfg.d_model = 64;
  cfg.n_layers = 2;
  cfg.d_ff = 128;
  Rng rng(10);
  const auto params = init_params<float>(cfg, rng);
  std::vector<float> noisy(120 * 33), cond(120 * 55), a(120 * 33), b(120 * 33);
  for (float& v : noisy) v = static_cast<float>(rng.normal());
  for (float& v : cond) v = static_cast<float>(rng.uniform());
  forward<float>(cfg, params, noisy.data(), cond.data(), 120, 5, a.data());
  {
    kernels::ScopedBackend guard(kernels::Backend::kReference);
    forward<float>(cfg, params, noisy.data(), cond.data(), 120, 5, b.data());
  }
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-3));
}

TEST_CASE("prediction entry points validate shapes and parameters") {
  ModelConfig cfg = tiny(ModelKind::kDiffusionTransformer);
  Rng rng(12);
  auto params = init_params<float>(cfg, rng);
  MotorSequence xn;
  xn.frames = FrameBlock(4, 3);
  xn.space = MotorSpace::kDiffusion;
  BlendshapeSequence c{FrameBlock(4, 5, 0.2f), 60.0};
  CHECK_NOTHROW(denoise_predict(cfg, params, xn, 2, c));
  BlendshapeSequence wrong{FrameBlock(4, 6, 0.2f), 60.0};
  CHECK_THROWS_AS(denoise_predict(cfg, params, xn, 2, wrong), InputError);
  BlendshapeSequence too_long{FrameBlock(5, 5, 0.2f), 60.0};
  MotorSequence xn5;
  xn5.frames = FrameBlock(5, 3);
  CHECK_THROWS(denoise_predict(cfg, params, xn5, 2, too_long));
  params.tensors()[0].data[0] = std::nanf("");
  CHECK_THROWS_AS(denoise_predict(cfg, params, xn, 2, c), ModelError);
}
