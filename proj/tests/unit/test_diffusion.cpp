#include <doctest.h>

#include <cmath>

#include "exface/diffusion.hpp"

using namespace exface;

namespace {

MotorSequence scalar_seq(float v, MotorSpace space = MotorSpace::kDiffusion) {
  MotorSequence s;
  s.frames = FrameBlock(1, 1, v);
  s.space = space;
  return s;
}

class OracleDenoiser final : public X0Predictor {
 public:
  explicit OracleDenoiser(MotorSequence x0) : x0_(std::move(x0)) {}
  MotorSequence predict_x0(const MotorSequence&, int, const BlendshapeSequence&) const override { return x0_; }
  int dof() const override { return x0_.dof(); }

 private:
  MotorSequence x0_;
};

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

template <typename Draw>
Moments moments(int draws, Draw&& draw) {
  double sum = 0.0;
  double sum2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = draw();
    sum += x;
    sum2 += x * x;
  }
  Moments m;
  m.mean = sum / draws;
  m.var = (sum2 - draws * m.mean * m.mean) / (draws - 1);
  return m;
}

}  // namespace

TEST_CASE("linear schedule matches hand cumulative products") {
  const auto s = DiffusionSchedule::linear(4, 0.1, 0.4);
  const double expected[] = {0.9, 0.72, 0.504, 0.3024};
  for (int n = 1; n <= 4; ++n) CHECK(s.alpha_bar(n) == doctest::Approx(expected[n - 1]).epsilon(1e-12));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.sigma2(1) == 0.0);
}

TEST_CASE("single-step schedule") {
  const auto s = DiffusionSchedule::linear(1, 0.5, 0.5);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.5));
  CHECK(s.sigma2(1) == 0.0);
}

TEST_CASE("schedule invariants hold for random valid configurations") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int N = rng.uniform_int(1, 64);
    const double lo = rng.uniform(1e-5, 0.5);
    const double hi = rng.uniform(lo, 0.999);
    const auto s = DiffusionSchedule::linear(N, lo, hi);
    REQUIRE(s.steps() == N);
    CHECK(s.sigma2(1) == 0.0);
    for (int n = 1; n <= N; ++n) {
      CHECK(s.beta(n) > 0.0);
      CHECK(s.beta(n) < 1.0);
      CHECK(s.alpha_bar(n) > 0.0);
      CHECK(s.alpha_bar(n) < s.alpha_bar(n - 1));
      const double expect = (1.0 - s.alpha_bar(n - 1)) / (1.0 - s.alpha_bar(n)) * s.beta(n);
      CHECK(s.sigma2(n) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("schedule rejects invalid ranges") {
  CHECK_THROWS_AS(DiffusionSchedule::linear(0, 0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(DiffusionSchedule::linear(4, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(DiffusionSchedule::linear(4, 0.3, 0.2), ConfigError);
  CHECK_THROWS_AS(DiffusionSchedule::linear(4, 0.1, 1.0), ConfigError);
}

TEST_CASE("add_noise zero-noise and zero-signal cases") {
  const auto s = DiffusionSchedule::linear(4, 0.1, 0.4);
  const float zero[] = {0.0f};
  const auto a = add_noise(scalar_seq(0.8f), 3, zero, s);
  CHECK(a.frames.flat()[0] == doctest::Approx(std::sqrt(0.504) * 0.8));
  CHECK(a.noise_level == 3);
  const float e[] = {1.7f};
  const auto b = add_noise(scalar_seq(0.0f), 3, e, s);
  CHECK(b.frames.flat()[0] == doctest::Approx(std::sqrt(1.0 - 0.504) * 1.7));
  CHECK_THROWS(add_noise(scalar_seq(0.0f), 5, zero, s));
  CHECK_THROWS(add_noise(scalar_seq(0.0f), 0, zero, s));
}

TEST_CASE("posterior mean matches the hand-evaluated example") {
  const auto s = DiffusionSchedule::linear(4, 0.1, 0.4);
  const auto mu = posterior_mean(scalar_seq(1.0f), scalar_seq(0.5f), 2, s);
  const double expect = (std::sqrt(0.8) * 0.1 * 1.0 + std::sqrt(0.9) * 0.2 * 0.5) / 0.28;
  CHECK(expect == doctest::Approx(0.6582).epsilon(1e-4));
  CHECK(std::abs(mu.frames.flat()[0] - 0.6582) < 1e-4);
}

TEST_CASE("posterior mean collapses to x0_hat at n = 1") {
  const auto s = DiffusionSchedule::linear(32, 1e-4, 0.25);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    MotorSequence xn, x0;
    xn.frames = FrameBlock(4, 6);
    x0.frames = FrameBlock(4, 6);
    xn.space = x0.space = MotorSpace::kDiffusion;
    for (float& v : xn.frames.flat()) v = static_cast<float>(rng.normal() * 3.0);
    for (float& v : x0.frames.flat()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const auto mu = posterior_mean(xn, x0, 1, s);
    for (std::size_t i = 0; i < mu.frames.flat().size(); ++i) {
      CHECK(std::abs(mu.frames.flat()[i] - x0.frames.flat()[i]) <= 1e-6);
    }
  }
}

TEST_CASE("posterior mean is linear in its inputs") {
  const auto s = DiffusionSchedule::linear(8, 0.01, 0.3);
  const auto m_x = posterior_mean(scalar_seq(1.0f), scalar_seq(0.0f), 5, s).frames.flat()[0];
  const auto m_y = posterior_mean(scalar_seq(0.0f), scalar_seq(1.0f), 5, s).frames.flat()[0];
  const auto mu = posterior_mean(scalar_seq(0.3f), scalar_seq(-0.7f), 5, s).frames.flat()[0];
  CHECK(mu == doctest::Approx(0.3 * m_x - 0.7 * m_y).epsilon(1e-5));
}

TEST_CASE("strided posterior reduces to the single-step form") {
  const auto s = DiffusionSchedule::linear(16, 1e-3, 0.2);
  for (int n = 2; n <= 16; ++n) {
    const auto a = posterior_mean(scalar_seq(0.4f), scalar_seq(-0.2f), n, s);
    const auto b = posterior_mean(scalar_seq(0.4f), scalar_seq(-0.2f), n, n - 1, s);
    CHECK(a.frames.flat()[0] == doctest::Approx(b.frames.flat()[0]).epsilon(1e-6));
    CHECK(posterior_variance(n, n - 1, s) == doctest::Approx(s.sigma2(n)).epsilon(1e-9));
  }
}

TEST_CASE("stepwise forward chain matches the closed form in distribution") {
  const auto s = DiffusionSchedule::linear(32, 1e-4, 0.25);
  const int draws = 20000;
  const float x0 = 0.6f;
  for (int n : {1, 16, 32}) {
    Rng chain_rng(100 + n);
    Rng closed_rng(200 + n);
    const Moments chain = moments(draws, [&] {
      return static_cast<double>(forward_chain(scalar_seq(x0), n, chain_rng, s).frames.flat()[0]);
    });
    const Moments closed = moments(draws, [&] {
      const float e[] = {static_cast<float>(closed_rng.normal())};
      return static_cast<double>(add_noise(scalar_seq(x0), n, e, s).frames.flat()[0]);
    });
    const double var = 1.0 - s.alpha_bar(n);
    const double mean = std::sqrt(s.alpha_bar(n)) * x0;
    const double se_mean = std::sqrt(2.0 * var / draws);
    const double se_var = var * std::sqrt(2.0 / (draws - 1)) * std::sqrt(2.0);
    CAPTURE(n);
    CHECK(std::abs(chain.mean - closed.mean) <= 4.0 * se_mean);
    CHECK(std::abs(chain.var - closed.var) <= 4.0 * se_var);
    CHECK(std::abs(closed.mean - mean) <= 4.0 * std::sqrt(var / draws));
    CHECK(std::abs(closed.var - var) <= 4.0 * var * std::sqrt(2.0 / (draws - 1)));
  }
}

TEST_CASE("forward chain is reproducible for a fixed seed") {
  const auto s = DiffusionSchedule::linear(32, 1e-4, 0.25);
  MotorSequence x0;
  x0.frames = FrameBlock(8, 3, 0.2f);
  x0.space = MotorSpace::kDiffusion;
  Rng a(9), b(9);
  CHECK(forward_chain(x0, 20, a, s).frames == forward_chain(x0, 20, b, s).frames);
}

TEST_CASE("oracle sampler returns x0 exactly for full and strided sampling") {
  const auto s = DiffusionSchedule::linear(32, 1e-4, 0.25);
  Rng rng(21);
  MotorSequence truth;
  truth.frames = FrameBlock(12, 5);
  for (float& v : truth.frames.flat()) v = static_cast<float>(rng.uniform());
  const OracleDenoiser oracle(to_diffusion_space(truth));
  BlendshapeSequence c{FrameBlock(12, 7, 0.1f), 60.0};
  for (int stride : {1, 3, 4, 8, 32}) {
    for (bool stochastic : {false, true}) {
      Rng sr(stride);
      const auto out = sample(oracle, c, s, sr, SamplerOptions{stochastic, stride, true});
      CAPTURE(stride);
      CHECK(out.space == MotorSpace::kCommand);
      for (std::size_t i = 0; i < out.frames.flat().size(); ++i) {
        CHECK(std::abs(out.frames.flat()[i] - truth.frames.flat()[i]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("sampling steps descend from N and cover stride remainders") {
  CHECK(sampling_steps(32, 4) == std::vector<int>{32, 28, 24, 20, 16, 12, 8, 4});
  CHECK(sampling_steps(5, 2) == std::vector<int>{5, 3, 1});
  CHECK(sampling_steps(4, 1) == std::vector<int>{4, 3, 2, 1});
  CHECK_THROWS(sampling_steps(4, 0));
}

TEST_CASE("deterministic sampling is reproducible") {
  const auto s = DiffusionSchedule::linear(8, 1e-3, 0.3);
  class Shrink final : public X0Predictor {
   public:
    MotorSequence predict_x0(const MotorSequence& xn, int, const BlendshapeSequence&) const override {
      MotorSequence out = xn;
      for (float& v : out.frames.flat()) v *= 0.5f;
      return out;
    }
    int dof() const override { return 3; }
  } shrink;
  BlendshapeSequence c{FrameBlock(6, 2, 0.0f), 60.0};
  Rng a(4), b(4);
  CHECK(sample(shrink, c, s, a, {}).frames == sample(shrink, c, s, b, {}).frames);
}

TEST_CASE("sampler aborts on a dimension mismatch") {
  const auto s = DiffusionSchedule::linear(8, 1e-3, 0.3);
  class Wrong final : public X0Predictor {
   public:
    MotorSequence predict_x0(const MotorSequence& xn, int, const BlendshapeSequence&) const override {
      MotorSequence out;
      out.frames = FrameBlock(xn.length(), 2);
      return out;
    }
    int dof() const override { return 3; }
  } wrong;
  BlendshapeSequence c{FrameBlock(6, 2, 0.0f), 60.0};
  Rng r(1);
  CHECK_THROWS_AS(sample(wrong, c, s, r, {}), ModelError);
}
