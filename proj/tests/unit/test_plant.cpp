#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "exface/plant.hpp"

using namespace exface;

namespace {

MotorFrame uniform_motor(int dof, Rng& rng) {
  MotorFrame m{std::vector<float>(dof)};
  for (float& v : m.values) v = static_cast<float>(rng.uniform());
  return m;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(static_cast<double>(a[i]) - b[i]));
  return d;
}

}  // namespace

TEST_CASE("zero motors give the neutral face") {
  for (const int dof : {33, 32}) {
    PlantSpec spec;
    spec.dof = dof;
    const PlantModel plant(spec);
    const auto b = plant.observe(MotorFrame{std::vector<float>(dof, 0.0f)});
    for (float v : b.values) CHECK(v == 0.0f);
  }
}

TEST_CASE("analytic Jacobian at zero matches finite differences") {
  const PlantModel plant(PlantSpec{});
  const auto jac = plant.jacobian_at_zero();
  const int D = plant.dof();
  const int B = plant.blendshape_dim();
  // g is odd-symmetric before the clamp and tanh''(0) = 0, so a one-sided
  // difference from zero is second-order accurate.
  const double h = 1e-2;
  for (int j = 0; j < D; ++j) {
    MotorFrame m{std::vector<float>(D, 0.0f)};
    m.values[j] = static_cast<float>(h);
    const auto b = plant.observe(m);
    for (int r = 0; r < B; ++r) {
      const double fd = b.values[r] / h;
      CHECK(std::abs(fd - jac[static_cast<std::size_t>(r) * D + j]) < 1e-3);
    }
  }
}

TEST_CASE("plant is monotone in every motor and bounded by its Lipschitz constant") {
  const PlantModel plant(PlantSpec{});
  const double L = plant.lipschitz_bound();
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const MotorFrame a = uniform_motor(plant.dof(), rng);
    MotorFrame b = a;
    const int j = rng.uniform_int(0, plant.dof() - 1);
    b.values[j] = std::min(1.0f, b.values[j] + static_cast<float>(rng.uniform(0.0, 0.3)));
    const auto ga = plant.observe(a);
    const auto gb = plant.observe(b);
    for (int r = 0; r < plant.blendshape_dim(); ++r) CHECK(gb.values[r] >= ga.values[r] - 1e-7f);

    const MotorFrame c = uniform_motor(plant.dof(), rng);
    const auto gc = plant.observe(c);
    CHECK(max_abs_diff(ga.values, gc.values) <= L * max_abs_diff(a.values, c.values) + 1e-6);
  }
}

TEST_CASE("plant structure is a pure function of the spec") {
  PlantSpec spec;
  spec.seed = 42;
  const PlantModel a(spec);
  const PlantModel b(PlantSpec::from_json(spec.to_json()));
  CHECK(a.w1() == b.w1());
  CHECK(a.w2() == b.w2());
  spec.seed = 43;
  const PlantModel c(spec);
  CHECK(a.w1() != c.w1());
}

TEST_CASE("capture noise is truncated and stays in range") {
  const PlantModel plant(PlantSpec{});
  const double bound = 3.0 * plant.spec().capture_noise_sigma + 1e-6;
  Rng rng(5);
  Rng noise(6);
  for (int trial = 0; trial < 200; ++trial) {
    const MotorFrame m = uniform_motor(plant.dof(), rng);
    const auto clean = plant.observe(m);
    const auto noisy = plant.observe(m, &noise);
    for (int r = 0; r < plant.blendshape_dim(); ++r) {
      CHECK(noisy.values[r] >= 0.0f);
      CHECK(noisy.values[r] <= 1.0f);
      CHECK(std::abs(noisy.values[r] - clean.values[r]) <= bound);
    }
  }
}

TEST_CASE("plant rejects wrong motor dimension") {
  const PlantModel plant(PlantSpec{});
  const MotorFrame short_frame{std::vector<float>(32, 0.0f)};
  CHECK_THROWS_AS(plant.observe(short_frame), InputError);
}

TEST_CASE("human episodes are reachable, in range, smooth and reproducible") {
  const PlantModel plant(PlantSpec{});
  Rng r1(9);
  Rng r2(9);
  const Episode a = gen_human_episode(plant, 600, r1);
  const Episode b = gen_human_episode(plant, 600, r2);
  CHECK(a.motor.frames == b.motor.frames);
  CHECK(a.blendshape.frames == b.blendshape.frames);
  CHECK_NOTHROW(a.motor.validate(plant.dof()));
  CHECK_NOTHROW(a.blendshape.validate(plant.blendshape_dim()));

  // Targets are exactly the noise-free response to the ground-truth motors.
  const auto replay = plant.observe(a.motor);
  CHECK(replay.frames == a.blendshape.frames);

  // Cosine keyframes at spacing >= 10 frames: per-frame motor steps are at
  // most (pi/2) / 10 of the full range.
  const KeyframeOptions opts;
  const double max_step = 3.14159265358979323846 / (2.0 * opts.min_spacing) + 1e-6;
  for (int t = 1; t < a.motor.length(); ++t) {
    const auto prev = a.motor.frame(t - 1).values;
    const auto cur = a.motor.frame(t).values;
    CHECK(max_abs_diff(prev, cur) <= max_step);
  }
}

TEST_CASE("human drive uses sparse muscle groups over a tonic background") {
  const PlantModel plant(PlantSpec{});
  Rng rng(21);
  const Episode ep = gen_human_episode(plant, 2000, rng);
  // Mean activation sits well below the uniform-random 0.5 (sparse groups)
  // but above zero (tonic level).
  double mean = 0.0;
  for (float v : ep.motor.frames.flat()) mean += v;
  mean /= static_cast<double>(ep.motor.frames.flat().size());
  CHECK(mean > 0.1);
  CHECK(mean < 0.45);
}

TEST_CASE("free-mode sequences stay in range") {
  const PlantModel plant(PlantSpec{});
  Rng rng(3);
  const auto seq = gen_human_sequence(plant, 240, SequenceMode::kFree, rng);
  CHECK(seq.length() == 240);
  CHECK_NOTHROW(seq.validate(plant.blendshape_dim()));
}

TEST_CASE("interpolation episodes use dense random keyframes") {
  const PlantModel plant(PlantSpec{});
  Rng rng(4);
  const Episode ep = gen_interpolation_episode(plant, 240, rng);
  CHECK_NOTHROW(ep.motor.validate(plant.dof()));
  double mean = 0.0;
  for (float v : ep.motor.frames.flat()) mean += v;
  mean /= static_cast<double>(ep.motor.frames.flat().size());
  CHECK(mean == doctest::Approx(0.5).epsilon(0.2));
}
