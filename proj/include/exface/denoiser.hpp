#pragma once

// Conditional sequence networks: the diffusion transformer that predicts clean
// motor sequences from noised ones, plus the two direct-regression baselines.
//
// All three share one parameter container and are differentiated by hand
// (forward pass records a cache, backward pass accumulates into a gradient
// ParamSet). The math is templated on the scalar type so gradient checks can
// run in double precision against the same code that trains in float.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "exface/core.hpp"
#include "exface/diffusion.hpp"
#include "exface/params.hpp"
#include "exface/rng.hpp"

namespace exface {

enum class ModelKind : std::uint8_t {
  kDiffusionTransformer,  // x0-predictor conditioned on (x_n, n, c)
  kTransformer,           // sequence regression baseline, c -> motors
  kMlp,                   // per-frame regression baseline
};

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

/// Where the diffusion model reads the noisy motors x_n.
enum class NoiseInput : std::uint8_t {
  /// Concatenated with the condition in every attention token.
  kToken,
  /// Kept out of attention and fused per frame in an MLP head that reads
  /// [attention context, condition frame, x_n frame]. Attention then cannot
  /// average x_n over the window, which is what a model trained on constant
  /// windows otherwise learns (and which flattens its output on moving input).
  kHead,
};

struct ModelConfig {
  ModelKind kind = ModelKind::kDiffusionTransformer;
  int dof = 33;
  int blendshape_dim = kDefaultBlendshapeDim;
  int window = kDefaultWindow;  // rows of the learned positional table
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 256;
  int mlp_hidden = 256;
  NoiseInput noise_input = NoiseInput::kHead;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

template <typename T>
ParamSet<T> init_params(const ModelConfig& cfg, Rng& rng);

/// Throws ModelError when any parameter is NaN or infinite.
template <typename T>
void require_finite(const ParamSet<T>& params);

/// One training example. `noisy` is the diffusion-space x_n (diffusion model
/// only, nullptr otherwise); `target` is x0 in diffusion space for the
/// diffusion model and command-space motors for the baselines.
template <typename T>
struct Example {
  const T* noisy = nullptr;
  const T* cond = nullptr;
  const T* target = nullptr;
  int frames = 0;
  int level = 0;
};

/// Mean squared error of one example. When `grads` is non-null, adds
/// grad_scale * dLoss/dTheta into it.
template <typename T>
T loss_and_grad(const ModelConfig& cfg, const ParamSet<T>& params, const Example<T>& ex,
                ParamSet<T>* grads, T grad_scale = T(1));

/// Raw network evaluation into `out` (frames x dof).
template <typename T>
void forward(const ModelConfig& cfg, const ParamSet<T>& params, const T* noisy, const T* cond,
             int frames, int level, T* out);

/// Diffusion transformer prediction of x0 (diffusion space) from x_n.
MotorSequence denoise_predict(const ModelConfig& cfg, const ParamSet<float>& params,
                              const MotorSequence& xn, int n, const BlendshapeSequence& c);

/// Per-frame baseline; output bounded to [0,1].
MotorFrame mlp_predict(const ModelConfig& cfg, const ParamSet<float>& params,
                       const BlendshapeFrame& c_frame);

/// Sequence baseline; output bounded to [0,1]. Also accepts an MLP config, in
/// which case frames are mapped independently.
MotorSequence transformer_predict(const ModelConfig& cfg, const ParamSet<float>& params,
                                  const BlendshapeSequence& c);

/// Binds a diffusion-transformer parameter set to the sampler interface.
class Denoiser final : public X0Predictor {
 public:
  Denoiser(ModelConfig cfg, ParamSet<float> params);

  MotorSequence predict_x0(const MotorSequence& xn, int n,
                           const BlendshapeSequence& c) const override;
  int dof() const override { return cfg_.dof; }

  const ModelConfig& config() const { return cfg_; }
  const ParamSet<float>& params() const { return params_; }
  ParamSet<float>& params() { return params_; }

 private:
  ModelConfig cfg_;
  ParamSet<float> params_;
};

}  // namespace exface
