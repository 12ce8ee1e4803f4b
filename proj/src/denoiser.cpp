#include "exface/denoiser.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "exface/kernels.hpp"

namespace exface {

namespace {

using kernels::cmat;
using kernels::ConstMatRef;
using kernels::mat;
using kernels::MatRef;
using kernels::Op;

constexpr double kLayerNormEps = 1e-5;

std::string blk(int layer, const char* suffix) {
  return "blk" + std::to_string(layer) + "." + suffix;
}

template <typename T>
T sigmoid(T u) {
  return T(1) / (T(1) + std::exp(-u));
}

template <typename T>
T silu(T u) {
  return u * sigmoid(u);
}

template <typename T>
T silu_grad(T u) {
  const T s = sigmoid(u);
  return s * (T(1) + u * (T(1) - s));
}

// y = x * w + b, with w stored (in x out).
template <typename T>
void linear(const T* x, int rows, int in, const T* w, const T* b, int out, T* y) {
  kernels::gemm<T>(Op::kNone, Op::kNone, T(1), cmat(x, rows, in), cmat(w, in, out), T(0),
                   mat(y, rows, out));
  if (b != nullptr) {
    for (int r = 0; r < rows; ++r) {
      T* yr = y + static_cast<std::ptrdiff_t>(r) * out;
      for (int j = 0; j < out; ++j) yr[j] += b[j];
    }
  }
}

// Accumulates dw += x^T dy, db += colsum(dy); writes (or adds, when
// accumulate_dx) dx = dy w^T.
template <typename T>
void linear_backward(const T* x, int rows, int in, const T* w, int out, const T* dy, T* dx,
                     bool accumulate_dx, T* dw, T* db) {
  kernels::gemm<T>(Op::kTranspose, Op::kNone, T(1), cmat(x, rows, in), cmat(dy, rows, out), T(1),
                   mat(dw, in, out));
  if (db != nullptr) {
    for (int r = 0; r < rows; ++r) {
      const T* dyr = dy + static_cast<std::ptrdiff_t>(r) * out;
      for (int j = 0; j < out; ++j) db[j] += dyr[j];
    }
  }
  if (dx != nullptr) {
    kernels::gemm<T>(Op::kNone, Op::kTranspose, T(1), cmat(dy, rows, out), cmat(w, in, out),
                     accumulate_dx ? T(1) : T(0), mat(dx, rows, in));
  }
}

template <typename T>
void layer_norm(const T* x, int rows, int d, const T* g, const T* b, T* y, T* xhat, T* rstd) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<std::ptrdiff_t>(r) * d;
    T mean = T(0);
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var = T(0);
    for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + T(kLayerNormEps));
    T* yr = y + static_cast<std::ptrdiff_t>(r) * d;
    T* hr = xhat + static_cast<std::ptrdiff_t>(r) * d;
    for (int j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * rs;
      yr[j] = g[j] * hr[j] + b[j];
    }
    rstd[r] = rs;
  }
}

// Adds the input gradient into dx.
template <typename T>
void layer_norm_backward(const T* dy, const T* xhat, const T* rstd, int rows, int d, const T* g,
                         T* dg, T* db, T* dx) {
  std::vector<T> dxh(d);
  for (int r = 0; r < rows; ++r) {
    const T* dyr = dy + static_cast<std::ptrdiff_t>(r) * d;
    const T* hr = xhat + static_cast<std::ptrdiff_t>(r) * d;
    T m1 = T(0);
    T m2 = T(0);
    for (int j = 0; j < d; ++j) {
      dxh[j] = dyr[j] * g[j];
      m1 += dxh[j];
      m2 += dxh[j] * hr[j];
      dg[j] += dyr[j] * hr[j];
      db[j] += dyr[j];
    }
    m1 /= T(d);
    m2 /= T(d);
    T* dxr = dx + static_cast<std::ptrdiff_t>(r) * d;
    for (int j = 0; j < d; ++j) dxr[j] += rstd[r] * (dxh[j] - m1 - hr[j] * m2);
  }
}

template <typename T>
void softmax_rows(T* s, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    T* row = s + static_cast<std::ptrdiff_t>(r) * cols;
    T mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) row[j] *= inv;
  }
}

template <typename T>
void timestep_sinusoid(int level, int d, T* out) {
  const int half = d / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    out[k] = static_cast<T>(std::sin(level * freq));
    out[half + k] = static_cast<T>(std::cos(level * freq));
  }
}

template <typename T>
const T* ptr(const ParamSet<T>& p, const std::string& name) {
  return p.at(name).data.data();
}

template <typename T>
T* ptr(ParamSet<T>& p, const std::string& name) {
  return p.at(name).data.data();
}

template <typename T>
struct LayerCache {
  std::vector<T> h_in, ln1_out, ln1_xhat, ln1_rstd, qkv, probs, attn, h_mid;
  std::vector<T> ln2_out, ln2_xhat, ln2_rstd, ff_u, ff_z;
};

template <typename T>
struct SeqCache {
  int frames = 0;
  int level = 0;
  std::vector<T> input;
  std::vector<T> t_sin, t_u, t_a, t_emb;
  std::vector<LayerCache<T>> layers;
  std::vector<T> h_final, lnf_out, lnf_xhat, lnf_rstd;
  std::vector<T> fuse_in, fuse_u, fuse_z;  // per-frame head reading x_n
  std::vector<T> out;  // after the output activation
};

bool is_diffusion(const ModelConfig& cfg) { return cfg.kind == ModelKind::kDiffusionTransformer; }

bool noise_in_tokens(const ModelConfig& cfg) {
  return is_diffusion(cfg) && cfg.noise_input == NoiseInput::kToken;
}

bool noise_in_head(const ModelConfig& cfg) {
  return is_diffusion(cfg) && cfg.noise_input == NoiseInput::kHead;
}

// Per-frame head input: [context_t, c_t, x_n,t]. The raw condition frame gives
// the head a direct per-frame path next to the attention context.
int fuse_width(const ModelConfig& cfg) { return cfg.d_model + cfg.blendshape_dim + cfg.dof; }

int input_width(const ModelConfig& cfg) {
  return (noise_in_tokens(cfg) ? cfg.dof : 0) + cfg.blendshape_dim;
}

template <typename T>
void seq_forward(const ModelConfig& cfg, const ParamSet<T>& p, const T* noisy, const T* cond,
                 int frames, int level, SeqCache<T>& c) {
  const int D = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = D / H;
  const int FF = cfg.d_ff;
  const int F = frames;
  const int in_w = input_width(cfg);
  const auto FD = static_cast<std::size_t>(F) * D;
  c.frames = F;
  c.level = level;

  c.input.assign(static_cast<std::size_t>(F) * in_w, T(0));
  for (int t = 0; t < F; ++t) {
    T* row = c.input.data() + static_cast<std::ptrdiff_t>(t) * in_w;
    int off = 0;
    if (noise_in_tokens(cfg)) {
      std::copy_n(noisy + static_cast<std::ptrdiff_t>(t) * cfg.dof, cfg.dof, row);
      off = cfg.dof;
    }
    std::copy_n(cond + static_cast<std::ptrdiff_t>(t) * cfg.blendshape_dim, cfg.blendshape_dim,
                row + off);
  }

  std::vector<T> h(FD);
  linear(c.input.data(), F, in_w, ptr(p, "in.w"), ptr(p, "in.b"), D, h.data());
  const T* pos = ptr(p, "pos");
  for (std::size_t i = 0; i < FD; ++i) h[i] += pos[i];

  if (is_diffusion(cfg)) {
    c.t_sin.assign(D, T(0));
    c.t_u.assign(D, T(0));
    c.t_a.assign(D, T(0));
    c.t_emb.assign(D, T(0));
    timestep_sinusoid(level, D, c.t_sin.data());
    linear(c.t_sin.data(), 1, D, ptr(p, "time.w1"), ptr(p, "time.b1"), D, c.t_u.data());
    for (int j = 0; j < D; ++j) c.t_a[j] = silu(c.t_u[j]);
    linear(c.t_a.data(), 1, D, ptr(p, "time.w2"), ptr(p, "time.b2"), D, c.t_emb.data());
    for (int t = 0; t < F; ++t) {
      T* row = h.data() + static_cast<std::ptrdiff_t>(t) * D;
      for (int j = 0; j < D; ++j) row[j] += c.t_emb[j];
    }
  }

  const T scale = T(1) / std::sqrt(T(dh));
  c.layers.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& L = c.layers[l];
    L.h_in = h;
    L.ln1_out.resize(FD);
    L.ln1_xhat.resize(FD);
    L.ln1_rstd.resize(F);
    layer_norm(h.data(), F, D, ptr(p, blk(l, "ln1.g")), ptr(p, blk(l, "ln1.b")), L.ln1_out.data(),
               L.ln1_xhat.data(), L.ln1_rstd.data());
    L.qkv.resize(FD * 3);
    linear(L.ln1_out.data(), F, D, ptr(p, blk(l, "attn.wqkv")), ptr(p, blk(l, "attn.bqkv")), 3 * D,
           L.qkv.data());
    L.probs.resize(static_cast<std::size_t>(H) * F * F);
    L.attn.assign(FD, T(0));
    for (int hd = 0; hd < H; ++hd) {
      T* s = L.probs.data() + static_cast<std::ptrdiff_t>(hd) * F * F;
      const T* q = L.qkv.data() + hd * dh;
      const T* k = L.qkv.data() + D + hd * dh;
      const T* v = L.qkv.data() + 2 * D + hd * dh;
      kernels::gemm<T>(Op::kNone, Op::kTranspose, scale, ConstMatRef<T>(q, F, dh, 3 * D),
                       ConstMatRef<T>(k, F, dh, 3 * D), T(0), mat(s, F, F));
      softmax_rows(s, F, F);
      kernels::gemm<T>(Op::kNone, Op::kNone, T(1), cmat<T>(s, F, F), ConstMatRef<T>(v, F, dh, 3 * D),
                       T(0), MatRef<T>{L.attn.data() + hd * dh, F, dh, D});
    }
    std::vector<T> y(FD);
    linear(L.attn.data(), F, D, ptr(p, blk(l, "attn.wo")), ptr(p, blk(l, "attn.bo")), D, y.data());
    for (std::size_t i = 0; i < FD; ++i) h[i] += y[i];
    L.h_mid = h;

    L.ln2_out.resize(FD);
    L.ln2_xhat.resize(FD);
    L.ln2_rstd.resize(F);
    layer_norm(h.data(), F, D, ptr(p, blk(l, "ln2.g")), ptr(p, blk(l, "ln2.b")), L.ln2_out.data(),
               L.ln2_xhat.data(), L.ln2_rstd.data());
    const auto FFF = static_cast<std::size_t>(F) * FF;
    L.ff_u.resize(FFF);
    L.ff_z.resize(FFF);
    linear(L.ln2_out.data(), F, D, ptr(p, blk(l, "ff.w1")), ptr(p, blk(l, "ff.b1")), FF,
           L.ff_u.data());
    for (std::size_t i = 0; i < FFF; ++i) L.ff_z[i] = silu(L.ff_u[i]);
    linear(L.ff_z.data(), F, FF, ptr(p, blk(l, "ff.w2")), ptr(p, blk(l, "ff.b2")), D, y.data());
    for (std::size_t i = 0; i < FD; ++i) h[i] += y[i];
  }

  c.h_final = h;
  c.lnf_out.resize(FD);
  c.lnf_xhat.resize(FD);
  c.lnf_rstd.resize(F);
  layer_norm(h.data(), F, D, ptr(p, "lnf.g"), ptr(p, "lnf.b"), c.lnf_out.data(), c.lnf_xhat.data(),
             c.lnf_rstd.data());
  c.out.resize(static_cast<std::size_t>(F) * cfg.dof);
  if (noise_in_head(cfg)) {
    const int fw = fuse_width(cfg);
    c.fuse_in.resize(static_cast<std::size_t>(F) * fw);
    for (int t = 0; t < F; ++t) {
      T* row = c.fuse_in.data() + static_cast<std::ptrdiff_t>(t) * fw;
      std::copy_n(c.lnf_out.data() + static_cast<std::ptrdiff_t>(t) * D, D, row);
      std::copy_n(cond + static_cast<std::ptrdiff_t>(t) * cfg.blendshape_dim, cfg.blendshape_dim, row + D);
      std::copy_n(noisy + static_cast<std::ptrdiff_t>(t) * cfg.dof, cfg.dof, row + D + cfg.blendshape_dim);
    }
    const auto FFF = static_cast<std::size_t>(F) * FF;
    c.fuse_u.resize(FFF);
    c.fuse_z.resize(FFF);
    linear(c.fuse_in.data(), F, fw, ptr(p, "fuse.w1"), ptr(p, "fuse.b1"), FF, c.fuse_u.data());
    for (std::size_t i = 0; i < FFF; ++i) c.fuse_z[i] = silu(c.fuse_u[i]);
    linear(c.fuse_z.data(), F, FF, ptr(p, "fuse.w2"), ptr(p, "fuse.b2"), cfg.dof, c.out.data());
    return;
  }
  linear(c.lnf_out.data(), F, D, ptr(p, "head.w"), ptr(p, "head.b"), cfg.dof, c.out.data());
  if (!is_diffusion(cfg)) {
    for (T& v : c.out) v = sigmoid(v);
  }
}

template <typename T>
void seq_backward(const ModelConfig& cfg, const ParamSet<T>& p, const SeqCache<T>& c,
                  const T* d_out_in, ParamSet<T>& g) {
  const int D = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = D / H;
  const int FF = cfg.d_ff;
  const int F = c.frames;
  const int in_w = input_width(cfg);
  const auto FD = static_cast<std::size_t>(F) * D;

  std::vector<T> d_out(d_out_in, d_out_in + static_cast<std::size_t>(F) * cfg.dof);
  if (!is_diffusion(cfg)) {
    for (std::size_t i = 0; i < d_out.size(); ++i) d_out[i] *= c.out[i] * (T(1) - c.out[i]);
  }

  std::vector<T> d_lnf(FD);
  if (noise_in_head(cfg)) {
    const int fw = fuse_width(cfg);
    const auto FFF = static_cast<std::size_t>(F) * FF;
    std::vector<T> d_fz(FFF), d_fin(static_cast<std::size_t>(F) * fw);
    linear_backward(c.fuse_z.data(), F, FF, ptr(p, "fuse.w2"), cfg.dof, d_out.data(), d_fz.data(), false,
                    ptr(g, "fuse.w2"), ptr(g, "fuse.b2"));
    for (std::size_t i = 0; i < FFF; ++i) d_fz[i] *= silu_grad(c.fuse_u[i]);
    linear_backward(c.fuse_in.data(), F, fw, ptr(p, "fuse.w1"), FF, d_fz.data(), d_fin.data(), false,
                    ptr(g, "fuse.w1"), ptr(g, "fuse.b1"));
    for (int t = 0; t < F; ++t) {
      std::copy_n(d_fin.data() + static_cast<std::ptrdiff_t>(t) * fw, D,
                  d_lnf.data() + static_cast<std::ptrdiff_t>(t) * D);
    }
  } else {
    linear_backward(c.lnf_out.data(), F, D, ptr(p, "head.w"), cfg.dof, d_out.data(), d_lnf.data(),
                    false, ptr(g, "head.w"), ptr(g, "head.b"));
  }
  std::vector<T> dh_res(FD, T(0));
  layer_norm_backward(d_lnf.data(), c.lnf_xhat.data(), c.lnf_rstd.data(), F, D, ptr(p, "lnf.g"),
                      ptr(g, "lnf.g"), ptr(g, "lnf.b"), dh_res.data());

  const T scale = T(1) / std::sqrt(T(dh));
  std::vector<T> d_ln(FD), d_z, d_u, d_attn(FD), d_qkv(FD * 3), d_p(static_cast<std::size_t>(F) * F);
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& L = c.layers[l];
    const auto FFF = static_cast<std::size_t>(F) * FF;

    // Feed-forward residual branch.
    d_z.assign(FFF, T(0));
    linear_backward(L.ff_z.data(), F, FF, ptr(p, blk(l, "ff.w2")), D, dh_res.data(), d_z.data(),
                    false, ptr(g, blk(l, "ff.w2")), ptr(g, blk(l, "ff.b2")));
    d_u.resize(FFF);
    for (std::size_t i = 0; i < FFF; ++i) d_u[i] = d_z[i] * silu_grad(L.ff_u[i]);
    linear_backward(L.ln2_out.data(), F, D, ptr(p, blk(l, "ff.w1")), FF, d_u.data(), d_ln.data(),
                    false, ptr(g, blk(l, "ff.w1")), ptr(g, blk(l, "ff.b1")));
    layer_norm_backward(d_ln.data(), L.ln2_xhat.data(), L.ln2_rstd.data(), F, D,
                        ptr(p, blk(l, "ln2.g")), ptr(g, blk(l, "ln2.g")), ptr(g, blk(l, "ln2.b")),
                        dh_res.data());

    // Attention residual branch.
    linear_backward(L.attn.data(), F, D, ptr(p, blk(l, "attn.wo")), D, dh_res.data(),
                    d_attn.data(), false, ptr(g, blk(l, "attn.wo")), ptr(g, blk(l, "attn.bo")));
    for (int hd = 0; hd < H; ++hd) {
      const T* P = L.probs.data() + static_cast<std::ptrdiff_t>(hd) * F * F;
      const T* q = L.qkv.data() + hd * dh;
      const T* k = L.qkv.data() + D + hd * dh;
      const T* v = L.qkv.data() + 2 * D + hd * dh;
      const ConstMatRef<T> d_o(d_attn.data() + hd * dh, F, dh, D);
      // dP = dO V^T, dV = P^T dO
      kernels::gemm<T>(Op::kNone, Op::kTranspose, T(1), d_o, ConstMatRef<T>(v, F, dh, 3 * D), T(0),
                       mat(d_p.data(), F, F));
      kernels::gemm<T>(Op::kTranspose, Op::kNone, T(1), cmat(P, F, F), d_o, T(0),
                       MatRef<T>{d_qkv.data() + 2 * D + hd * dh, F, dh, 3 * D});
      // Softmax Jacobian, folded with the score scale.
      for (int r = 0; r < F; ++r) {
        T* dr = d_p.data() + static_cast<std::ptrdiff_t>(r) * F;
        const T* pr = P + static_cast<std::ptrdiff_t>(r) * F;
        T dot = T(0);
        for (int j = 0; j < F; ++j) dot += dr[j] * pr[j];
        for (int j = 0; j < F; ++j) dr[j] = scale * pr[j] * (dr[j] - dot);
      }
      kernels::gemm<T>(Op::kNone, Op::kNone, T(1), cmat(d_p.data(), F, F),
                       ConstMatRef<T>(k, F, dh, 3 * D), T(0),
                       MatRef<T>{d_qkv.data() + hd * dh, F, dh, 3 * D});
      kernels::gemm<T>(Op::kTranspose, Op::kNone, T(1), cmat(d_p.data(), F, F),
                       ConstMatRef<T>(q, F, dh, 3 * D), T(0),
                       MatRef<T>{d_qkv.data() + D + hd * dh, F, dh, 3 * D});
    }
    linear_backward(L.ln1_out.data(), F, D, ptr(p, blk(l, "attn.wqkv")), 3 * D, d_qkv.data(),
                    d_ln.data(), false, ptr(g, blk(l, "attn.wqkv")), ptr(g, blk(l, "attn.bqkv")));
    layer_norm_backward(d_ln.data(), L.ln1_xhat.data(), L.ln1_rstd.data(), F, D,
                        ptr(p, blk(l, "ln1.g")), ptr(g, blk(l, "ln1.g")), ptr(g, blk(l, "ln1.b")),
                        dh_res.data());
  }

  // Token embedding.
  linear_backward(c.input.data(), F, in_w, ptr(p, "in.w"), D, dh_res.data(), static_cast<T*>(nullptr),
                  false, ptr(g, "in.w"), ptr(g, "in.b"));
  T* d_pos = ptr(g, "pos");
  for (std::size_t i = 0; i < FD; ++i) d_pos[i] += dh_res[i];

  if (is_diffusion(cfg)) {
    std::vector<T> d_emb(D, T(0));
    for (int t = 0; t < F; ++t) {
      const T* row = dh_res.data() + static_cast<std::ptrdiff_t>(t) * D;
      for (int j = 0; j < D; ++j) d_emb[j] += row[j];
    }
    std::vector<T> d_a(D), d_u1(D);
    linear_backward(c.t_a.data(), 1, D, ptr(p, "time.w2"), D, d_emb.data(), d_a.data(), false,
                    ptr(g, "time.w2"), ptr(g, "time.b2"));
    for (int j = 0; j < D; ++j) d_u1[j] = d_a[j] * silu_grad(c.t_u[j]);
    linear_backward(c.t_sin.data(), 1, D, ptr(p, "time.w1"), D, d_u1.data(), static_cast<T*>(nullptr),
                    false, ptr(g, "time.w1"), ptr(g, "time.b1"));
  }
}

template <typename T>
struct MlpCache {
  std::vector<T> cond, u, z, out;
};

template <typename T>
void mlp_forward(const ModelConfig& cfg, const ParamSet<T>& p, const T* cond, int frames,
                 MlpCache<T>& c) {
  const int B = cfg.blendshape_dim;
  const int Hd = cfg.mlp_hidden;
  const auto n_hidden = static_cast<std::size_t>(frames) * Hd;
  c.cond.assign(cond, cond + static_cast<std::size_t>(frames) * B);
  c.u.resize(n_hidden);
  c.z.resize(n_hidden);
  linear(c.cond.data(), frames, B, ptr(p, "mlp.w1"), ptr(p, "mlp.b1"), Hd, c.u.data());
  for (std::size_t i = 0; i < n_hidden; ++i) c.z[i] = silu(c.u[i]);
  c.out.resize(static_cast<std::size_t>(frames) * cfg.dof);
  linear(c.z.data(), frames, Hd, ptr(p, "mlp.w2"), ptr(p, "mlp.b2"), cfg.dof, c.out.data());
  for (T& v : c.out) v = sigmoid(v);
}

template <typename T>
void mlp_backward(const ModelConfig& cfg, const ParamSet<T>& p, const MlpCache<T>& c,
                  const T* d_out_in, int frames, ParamSet<T>& g) {
  const int B = cfg.blendshape_dim;
  const int Hd = cfg.mlp_hidden;
  std::vector<T> d_out(d_out_in, d_out_in + static_cast<std::size_t>(frames) * cfg.dof);
  for (std::size_t i = 0; i < d_out.size(); ++i) d_out[i] *= c.out[i] * (T(1) - c.out[i]);
  std::vector<T> d_z(static_cast<std::size_t>(frames) * Hd);
  linear_backward(c.z.data(), frames, Hd, ptr(p, "mlp.w2"), cfg.dof, d_out.data(), d_z.data(), false,
                  ptr(g, "mlp.w2"), ptr(g, "mlp.b2"));
  for (std::size_t i = 0; i < d_z.size(); ++i) d_z[i] *= silu_grad(c.u[i]);
  linear_backward(c.cond.data(), frames, B, ptr(p, "mlp.w1"), Hd, d_z.data(), static_cast<T*>(nullptr),
                  false, ptr(g, "mlp.w1"), ptr(g, "mlp.b1"));
}

template <typename T>
void normal_fill(std::vector<T>& v, Rng& rng, double sd) {
  for (T& x : v) x = static_cast<T>(rng.normal() * sd);
}

void check_example_shape(const ModelConfig& cfg, int frames) {
  if (frames < 1) throw InputError("model input has no frames");
  if (cfg.kind != ModelKind::kMlp && frames > cfg.window) {
    throw InputError("sequence of " + std::to_string(frames) + " frames exceeds model window " +
                     std::to_string(cfg.window));
  }
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDiffusionTransformer:
      return "exface";
    case ModelKind::kTransformer:
      return "transformer";
    case ModelKind::kMlp:
      return "mlp";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "exface" || s == "diffusion_transformer") return ModelKind::kDiffusionTransformer;
  if (s == "transformer") return ModelKind::kTransformer;
  if (s == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model kind '" + s + "'");
}

void ModelConfig::validate() const {
  if (dof <= 0 || blendshape_dim <= 0) throw ConfigError("model dof and blendshape_dim must be positive");
  if (kind == ModelKind::kMlp) {
    if (mlp_hidden <= 0) throw ConfigError("mlp_hidden must be positive");
    return;
  }
  if (window <= 0 || d_model <= 0 || n_layers < 0 || n_heads <= 0 || d_ff <= 0) {
    throw ConfigError("transformer sizes must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (d_model % 2 != 0) throw ConfigError("d_model must be even for the timestep embedding");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"kind", exface::to_string(kind)}, {"dof", dof},           {"blendshape_dim", blendshape_dim},
          {"window", window},                {"d_model", d_model},   {"n_layers", n_layers},
          {"n_heads", n_heads},              {"d_ff", d_ff},         {"mlp_hidden", mlp_hidden},
          {"noise_input", noise_input == NoiseInput::kHead ? "head" : "token"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig cfg;
  if (doc.contains("kind")) cfg.kind = model_kind_from_string(doc.at("kind").get<std::string>());
  cfg.dof = doc.value("dof", cfg.dof);
  cfg.blendshape_dim = doc.value("blendshape_dim", cfg.blendshape_dim);
  cfg.window = doc.value("window", cfg.window);
  cfg.d_model = doc.value("d_model", cfg.d_model);
  cfg.n_layers = doc.value("n_layers", cfg.n_layers);
  cfg.n_heads = doc.value("n_heads", cfg.n_heads);
  cfg.d_ff = doc.value("d_ff", cfg.d_ff);
  cfg.mlp_hidden = doc.value("mlp_hidden", cfg.mlp_hidden);
  if (doc.contains("noise_input")) {
    const auto where = doc.at("noise_input").get<std::string>();
    if (where != "head" && where != "token") throw ConfigError("noise_input must be 'head' or 'token'");
    cfg.noise_input = where == "head" ? NoiseInput::kHead : NoiseInput::kToken;
  }
  cfg.validate();
  return cfg;
}

template <typename T>
ParamSet<T> init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamSet<T> p;
  if (cfg.kind == ModelKind::kMlp) {
    normal_fill(p.add("mlp.w1", {cfg.blendshape_dim, cfg.mlp_hidden}).data, rng,
                1.0 / std::sqrt(cfg.blendshape_dim));
    p.add("mlp.b1", {cfg.mlp_hidden});
    normal_fill(p.add("mlp.w2", {cfg.mlp_hidden, cfg.dof}).data, rng, 1.0 / std::sqrt(cfg.mlp_hidden));
    p.add("mlp.b2", {cfg.dof});
    return p;
  }
  const int D = cfg.d_model;
  const int in_w = input_width(cfg);
  const double resid = 1.0 / std::sqrt(2.0 * std::max(cfg.n_layers, 1));
  normal_fill(p.add("in.w", {in_w, D}).data, rng, 1.0 / std::sqrt(in_w));
  p.add("in.b", {D});
  normal_fill(p.add("pos", {cfg.window, D}).data, rng, 0.1);
  if (is_diffusion(cfg)) {
    normal_fill(p.add("time.w1", {D, D}).data, rng, 1.0 / std::sqrt(D));
    p.add("time.b1", {D});
    normal_fill(p.add("time.w2", {D, D}).data, rng, 1.0 / std::sqrt(D));
    p.add("time.b2", {D});
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& g1 = p.add(blk(l, "ln1.g"), {D});
    std::fill(g1.data.begin(), g1.data.end(), T(1));
    p.add(blk(l, "ln1.b"), {D});
    normal_fill(p.add(blk(l, "attn.wqkv"), {D, 3 * D}).data, rng, 1.0 / std::sqrt(D));
    p.add(blk(l, "attn.bqkv"), {3 * D});
    normal_fill(p.add(blk(l, "attn.wo"), {D, D}).data, rng, resid / std::sqrt(D));
    p.add(blk(l, "attn.bo"), {D});
    auto& g2 = p.add(blk(l, "ln2.g"), {D});
    std::fill(g2.data.begin(), g2.data.end(), T(1));
    p.add(blk(l, "ln2.b"), {D});
    normal_fill(p.add(blk(l, "ff.w1"), {D, cfg.d_ff}).data, rng, 1.0 / std::sqrt(D));
    p.add(blk(l, "ff.b1"), {cfg.d_ff});
    normal_fill(p.add(blk(l, "ff.w2"), {cfg.d_ff, D}).data, rng, resid / std::sqrt(cfg.d_ff));
    p.add(blk(l, "ff.b2"), {D});
  }
  auto& gf = p.add("lnf.g", {D});
  std::fill(gf.data.begin(), gf.data.end(), T(1));
  p.add("lnf.b", {D});
  if (noise_in_head(cfg)) {
    const int fw = fuse_width(cfg);
    normal_fill(p.add("fuse.w1", {fw, cfg.d_ff}).data, rng, 1.0 / std::sqrt(fw));
    p.add("fuse.b1", {cfg.d_ff});
    normal_fill(p.add("fuse.w2", {cfg.d_ff, cfg.dof}).data, rng, 0.5 / std::sqrt(cfg.d_ff));
    p.add("fuse.b2", {cfg.dof});
    return p;
  }
  normal_fill(p.add("head.w", {D, cfg.dof}).data, rng, 0.5 / std::sqrt(D));
  p.add("head.b", {cfg.dof});
  return p;
}

template <typename T>
void require_finite(const ParamSet<T>& params) {
  for (const auto& t : params.tensors()) {
    for (T v : t.data) {
      if (!std::isfinite(v)) throw ModelError("parameter " + t.name + " holds a non-finite value");
    }
  }
}

template <typename T>
void forward(const ModelConfig& cfg, const ParamSet<T>& params, const T* noisy, const T* cond,
             int frames, int level, T* out) {
  check_example_shape(cfg, frames);
  if (cfg.kind == ModelKind::kMlp) {
    MlpCache<T> c;
    mlp_forward(cfg, params, cond, frames, c);
    std::copy(c.out.begin(), c.out.end(), out);
    return;
  }
  SeqCache<T> c;
  seq_forward(cfg, params, noisy, cond, frames, level, c);
  std::copy(c.out.begin(), c.out.end(), out);
}

template <typename T>
T loss_and_grad(const ModelConfig& cfg, const ParamSet<T>& params, const Example<T>& ex,
                ParamSet<T>* grads, T grad_scale) {
  check_example_shape(cfg, ex.frames);
  if (is_diffusion(cfg) && ex.noisy == nullptr) throw InputError("diffusion example without x_n");
  const std::size_t n_out = static_cast<std::size_t>(ex.frames) * cfg.dof;
  std::vector<T> d_out(n_out);
  T loss = T(0);
  auto accumulate = [&](const std::vector<T>& out) {
    for (std::size_t i = 0; i < n_out; ++i) {
      const T diff = out[i] - ex.target[i];
      loss += diff * diff;
      d_out[i] = grad_scale * T(2) * diff / T(n_out);
    }
    loss /= T(n_out);
  };
  if (cfg.kind == ModelKind::kMlp) {
    MlpCache<T> c;
    mlp_forward(cfg, params, ex.cond, ex.frames, c);
    accumulate(c.out);
    if (grads) mlp_backward(cfg, params, c, d_out.data(), ex.frames, *grads);
    return loss;
  }
  SeqCache<T> c;
  seq_forward(cfg, params, ex.noisy, ex.cond, ex.frames, ex.level, c);
  accumulate(c.out);
  if (grads) seq_backward(cfg, params, c, d_out.data(), *grads);
  return loss;
}

template ParamSet<float> init_params<float>(const ModelConfig&, Rng&);
template ParamSet<double> init_params<double>(const ModelConfig&, Rng&);
template void require_finite<float>(const ParamSet<float>&);
template void require_finite<double>(const ParamSet<double>&);
template void forward<float>(const ModelConfig&, const ParamSet<float>&, const float*, const float*,
                             int, int, float*);
template void forward<double>(const ModelConfig&, const ParamSet<double>&, const double*,
                              const double*, int, int, double*);
template float loss_and_grad<float>(const ModelConfig&, const ParamSet<float>&, const Example<float>&,
                                    ParamSet<float>*, float);
template double loss_and_grad<double>(const ModelConfig&, const ParamSet<double>&,
                                      const Example<double>&, ParamSet<double>*, double);

MotorSequence denoise_predict(const ModelConfig& cfg, const ParamSet<float>& params,
                              const MotorSequence& xn, int n, const BlendshapeSequence& c) {
  if (cfg.kind != ModelKind::kDiffusionTransformer) throw ModelError("not a diffusion model config");
  if (xn.length() != c.length()) {
    throw InputError("denoise_predict: x_n has " + std::to_string(xn.length()) +
                     " frames, condition has " + std::to_string(c.length()));
  }
  if (xn.dof() != cfg.dof || c.dim() != cfg.blendshape_dim) {
    throw InputError("denoise_predict: channel counts do not match the model");
  }
  if (n < 1) throw InputError("denoise_predict: noise level must be >= 1");
  require_finite(params);
  MotorSequence out;
  out.frames = FrameBlock(xn.length(), cfg.dof);
  out.space = MotorSpace::kDiffusion;
  out.noise_level = 0;
  forward<float>(cfg, params, xn.frames.flat().data(), c.frames.flat().data(), xn.length(), n,
                 out.frames.flat().data());
  return out;
}

MotorFrame mlp_predict(const ModelConfig& cfg, const ParamSet<float>& params,
                       const BlendshapeFrame& c_frame) {
  if (cfg.kind != ModelKind::kMlp) throw ModelError("not an MLP config");
  if (c_frame.dim() != cfg.blendshape_dim) {
    throw InputError("mlp_predict: frame has " + std::to_string(c_frame.dim()) + " channels, model expects " +
                     std::to_string(cfg.blendshape_dim));
  }
  MotorFrame out{std::vector<float>(cfg.dof)};
  forward<float>(cfg, params, nullptr, c_frame.values.data(), 1, 0, out.values.data());
  return out;
}

MotorSequence transformer_predict(const ModelConfig& cfg, const ParamSet<float>& params,
                                  const BlendshapeSequence& c) {
  if (cfg.kind == ModelKind::kDiffusionTransformer) throw ModelError("not a regression config");
  if (c.dim() != cfg.blendshape_dim) {
    throw InputError("transformer_predict: sequence has " + std::to_string(c.dim()) +
                     " channels, model expects " + std::to_string(cfg.blendshape_dim));
  }
  MotorSequence out;
  out.frames = FrameBlock(c.length(), cfg.dof);
  forward<float>(cfg, params, nullptr, c.frames.flat().data(), c.length(), 0, out.frames.flat().data());
  return out;
}

Denoiser::Denoiser(ModelConfig cfg, ParamSet<float> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  if (cfg_.kind != ModelKind::kDiffusionTransformer) throw ModelError("Denoiser needs a diffusion config");
  require_finite(params_);
}

MotorSequence Denoiser::predict_x0(const MotorSequence& xn, int n, const BlendshapeSequence& c) const {
  return denoise_predict(cfg_, params_, xn, n, c);
}

}  // namespace exface
