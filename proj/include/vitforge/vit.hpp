#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vitforge/errors.hpp"
#include "vitforge/kernels.hpp"
#include "vitforge/rng.hpp"
#include "vitforge/tensor.hpp"
#include "vitforge/threading.hpp"

namespace vitforge {

// Architectural hyperparameters. Defaults are the vit_base_patch16_224
// layout; tiny() is the desk-scale configuration used throughout the tests.
struct ViTConfig {
  int image_size = 224;
  int patch_size = 16;
  int in_channels = 3;
  int embed_dim = 768;
  int depth = 12;
  int num_heads = 12;
  int mlp_ratio = 4;
  int num_classes = 2;
  float layer_norm_eps = 1e-6f;
  float dropout = 0.0f;  // reserved; training is deterministic, must stay 0

  int patches_per_side() const { return image_size / patch_size; }
  int num_patches() const { return patches_per_side() * patches_per_side(); }
  int seq_len() const { return num_patches() + 1; }
  int patch_dim() const { return patch_size * patch_size * in_channels; }
  int head_dim() const { return embed_dim / num_heads; }
  int mlp_dim() const { return embed_dim * mlp_ratio; }

  void validate() const {
    if (image_size < 1 || patch_size < 1 || in_channels < 1 || embed_dim < 1 ||
        depth < 1 || num_heads < 1 || mlp_ratio < 1 || num_classes < 1) {
      throw ConfigError("model config fields must be positive");
    }
    if (image_size % patch_size != 0) {
      throw ConfigError("image_size " + std::to_string(image_size) +
                        " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (embed_dim % num_heads != 0) {
      throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                        " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (!(layer_norm_eps > 0.0f)) throw ConfigError("layer_norm_eps must be > 0");
    if (dropout != 0.0f) {
      throw ConfigError("dropout is reserved and must be 0");
    }
  }

  static ViTConfig base() { return {}; }

  static ViTConfig tiny() {
    ViTConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.embed_dim = 16;
    c.depth = 2;
    c.num_heads = 2;
    return c;
  }

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

template <class T>
struct BlockParamsT {
  TensorT<T> ln1_gamma, ln1_beta;
  TensorT<T> qkv_weight, qkv_bias;    // [D, 3D], [3D]; columns are Q | K | V
  TensorT<T> proj_weight, proj_bias;  // attention output projection [D, D], [D]
  TensorT<T> ln2_gamma, ln2_beta;
  TensorT<T> fc1_weight, fc1_bias;  // [D, 4D], [4D]
  TensorT<T> fc2_weight, fc2_bias;  // [4D, D], [D]
};

template <class T>
struct ViTParamsT {
  TensorT<T> patch_weight;  // [patch_dim, D]
  TensorT<T> patch_bias;    // [D]
  TensorT<T> cls_token;     // [D]
  TensorT<T> pos_embed;     // [S, D]
  std::vector<BlockParamsT<T>> blocks;
  TensorT<T> final_gamma, final_beta;  // [D]
  TensorT<T> head_weight;              // [num_classes, D]
  TensorT<T> head_bias;                // [num_classes]
};

using BlockParams = BlockParamsT<float>;
using ViTParams = ViTParamsT<float>;

// Visits every parameter tensor in a fixed order under a stable name; the
// same order drives initialization, the optimizer, and checkpoints.
template <class Params, class Fn>
void for_each_param(Params& p, Fn&& fn) {
  fn("patch_embed.weight", p.patch_weight);
  fn("patch_embed.bias", p.patch_bias);
  fn("cls_token", p.cls_token);
  fn("pos_embed", p.pos_embed);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string prefix = "blocks." + std::to_string(i) + ".";
    fn(prefix + "ln1.gamma", b.ln1_gamma);
    fn(prefix + "ln1.beta", b.ln1_beta);
    fn(prefix + "attn.qkv.weight", b.qkv_weight);
    fn(prefix + "attn.qkv.bias", b.qkv_bias);
    fn(prefix + "attn.proj.weight", b.proj_weight);
    fn(prefix + "attn.proj.bias", b.proj_bias);
    fn(prefix + "ln2.gamma", b.ln2_gamma);
    fn(prefix + "ln2.beta", b.ln2_beta);
    fn(prefix + "mlp.fc1.weight", b.fc1_weight);
    fn(prefix + "mlp.fc1.bias", b.fc1_bias);
    fn(prefix + "mlp.fc2.weight", b.fc2_weight);
    fn(prefix + "mlp.fc2.bias", b.fc2_bias);
  }
  fn("final_norm.gamma", p.final_gamma);
  fn("final_norm.beta", p.final_beta);
  fn("head.weight", p.head_weight);
  fn("head.bias", p.head_bias);
}

// Named pointers to every parameter tensor, in for_each_param order.
template <class T>
std::vector<std::pair<std::string, TensorT<T>*>> param_refs(ViTParamsT<T>& p) {
  std::vector<std::pair<std::string, TensorT<T>*>> out;
  for_each_param(p, [&out](const std::string& name, TensorT<T>& t) {
    out.emplace_back(name, &t);
  });
  return out;
}

// All parameter tensors with their configured shapes, zero-filled.
template <class T>
ViTParamsT<T> make_params(const ViTConfig& cfg) {
  cfg.validate();
  const int d = cfg.embed_dim, f = cfg.mlp_dim(), s = cfg.seq_len();
  ViTParamsT<T> p;
  p.patch_weight = TensorT<T>({cfg.patch_dim(), d});
  p.patch_bias = TensorT<T>({d});
  p.cls_token = TensorT<T>({d});
  p.pos_embed = TensorT<T>({s, d});
  p.blocks.resize(static_cast<std::size_t>(cfg.depth));
  for (auto& b : p.blocks) {
    b.ln1_gamma = TensorT<T>({d});
    b.ln1_beta = TensorT<T>({d});
    b.qkv_weight = TensorT<T>({d, 3 * d});
    b.qkv_bias = TensorT<T>({3 * d});
    b.proj_weight = TensorT<T>({d, d});
    b.proj_bias = TensorT<T>({d});
    b.ln2_gamma = TensorT<T>({d});
    b.ln2_beta = TensorT<T>({d});
    b.fc1_weight = TensorT<T>({d, f});
    b.fc1_bias = TensorT<T>({f});
    b.fc2_weight = TensorT<T>({f, d});
    b.fc2_bias = TensorT<T>({d});
  }
  p.final_gamma = TensorT<T>({d});
  p.final_beta = TensorT<T>({d});
  p.head_weight = TensorT<T>({cfg.num_classes, d});
  p.head_bias = TensorT<T>({cfg.num_classes});
  return p;
}

inline ViTParams zeros_like_params(const ViTConfig& cfg) {
  return make_params<float>(cfg);
}

template <class T>
void zero_params(ViTParamsT<T>& p) {
  for_each_param(p, [](const std::string&, TensorT<T>& t) { t.fill(T(0)); });
}

template <class T, class U>
ViTParamsT<U> params_cast(const ViTParamsT<T>& p) {
  ViTParamsT<U> out;
  out.blocks.resize(p.blocks.size());
  out.patch_weight = p.patch_weight.template cast<U>();
  out.patch_bias = p.patch_bias.template cast<U>();
  out.cls_token = p.cls_token.template cast<U>();
  out.pos_embed = p.pos_embed.template cast<U>();
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    auto& o = out.blocks[i];
    o.ln1_gamma = b.ln1_gamma.template cast<U>();
    o.ln1_beta = b.ln1_beta.template cast<U>();
    o.qkv_weight = b.qkv_weight.template cast<U>();
    o.qkv_bias = b.qkv_bias.template cast<U>();
    o.proj_weight = b.proj_weight.template cast<U>();
    o.proj_bias = b.proj_bias.template cast<U>();
    o.ln2_gamma = b.ln2_gamma.template cast<U>();
    o.ln2_beta = b.ln2_beta.template cast<U>();
    o.fc1_weight = b.fc1_weight.template cast<U>();
    o.fc1_bias = b.fc1_bias.template cast<U>();
    o.fc2_weight = b.fc2_weight.template cast<U>();
    o.fc2_bias = b.fc2_bias.template cast<U>();
  }
  out.final_gamma = p.final_gamma.template cast<U>();
  out.final_beta = p.final_beta.template cast<U>();
  out.head_weight = p.head_weight.template cast<U>();
  out.head_bias = p.head_bias.template cast<U>();
  return out;
}

// Seeded initialization: truncated normal (std 0.02, clipped at 2 std) for
// projection/attention/MLP/head weights, positional embeddings and the class
// token; zeros for biases; ones/zeros for layer-norm gamma/beta. Draws are
// consumed in for_each_param order, so the result is a pure function of the
// seed.
inline ViTParams init_params(const ViTConfig& cfg, std::uint64_t seed) {
  ViTParams p = make_params<float>(cfg);
  Xoshiro256ss rng(seed);
  const auto trunc_fill = [&rng](Tensor& t) {
    float* d = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = rng.next_trunc_normal(0.02f);
  };
  trunc_fill(p.patch_weight);
  trunc_fill(p.cls_token);
  trunc_fill(p.pos_embed);
  for (auto& b : p.blocks) {
    b.ln1_gamma.fill(1.0f);
    trunc_fill(b.qkv_weight);
    trunc_fill(b.proj_weight);
    b.ln2_gamma.fill(1.0f);
    trunc_fill(b.fc1_weight);
    trunc_fill(b.fc2_weight);
  }
  p.final_gamma.fill(1.0f);
  trunc_fill(p.head_weight);
  return p;
}

// Exact parameter count from shape arithmetic.
inline long long param_count(const ViTConfig& cfg) {
  cfg.validate();
  const long long d = cfg.embed_dim, f = cfg.mlp_dim(), s = cfg.seq_len();
  const long long pd = cfg.patch_dim(), c = cfg.num_classes;
  long long total = pd * d + d;  // patch projection
  total += d;                    // class token
  total += s * d;                // positional embedding
  const long long per_block = 2 * d               // ln1
                              + d * 3 * d + 3 * d  // qkv
                              + d * d + d          // attention projection
                              + 2 * d              // ln2
                              + d * f + f          // fc1
                              + f * d + d;         // fc2
  total += static_cast<long long>(cfg.depth) * per_block;
  total += 2 * d;      // final norm
  total += c * d + c;  // head
  return total;
}

// Floats retained per image by a cached forward pass (the state backward
// consumes): patches, and per block the input, normalized input, qkv,
// attention probabilities, context, post-attention tokens, second normalized
// input and both MLP intermediates, plus the final-norm input/output and the
// logits. The profiler's analytic memory account is this value times the
// batch size.
inline long long activation_floats_per_image(const ViTConfig& cfg) {
  cfg.validate();
  const long long s = cfg.seq_len(), d = cfg.embed_dim, f = cfg.mlp_dim();
  const long long n = cfg.num_patches(), h = cfg.num_heads;
  const long long per_block = s * d      // block input
                              + s * d    // ln1 output
                              + s * 3 * d  // qkv
                              + h * s * s  // attention probabilities
                              + s * d    // context
                              + s * d    // post-attention tokens
                              + s * d    // ln2 output
                              + s * f    // fc1 output
                              + s * f;   // gelu output
  return n * cfg.patch_dim() + cfg.depth * per_block + 2 * s * d + cfg.num_classes;
}

// ---------------------------------------------------------------------------
// Forward caches
// ---------------------------------------------------------------------------

template <class T>
struct AttentionCacheT {
  TensorT<T> input;    // [S, D], the normalized tokens fed to qkv
  TensorT<T> qkv;      // [S, 3D]
  TensorT<T> probs;    // [H, S, S]
  TensorT<T> context;  // [S, D]
};

template <class T>
struct BlockCacheT {
  TensorT<T> x_in;     // [S, D]
  AttentionCacheT<T> attn;
  TensorT<T> x_mid;    // [S, D] after the attention residual
  TensorT<T> h2;       // [S, D] ln2 output
  TensorT<T> fc1_out;  // [S, F] pre-activation
  TensorT<T> act;      // [S, F] gelu output
};

template <class T>
struct ImageCacheT {
  TensorT<T> patches;  // [N, patch_dim]
  std::vector<BlockCacheT<T>> blocks;
  TensorT<T> final_in;   // [S, D]
  TensorT<T> final_out;  // [S, D]
};

template <class T>
struct ForwardCacheT {
  std::vector<ImageCacheT<T>> images;
};

using ForwardCache = ForwardCacheT<float>;

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

// Cuts [C, H, W] into non-overlapping patches in row-major patch order; each
// row of the result is one patch flattened channel-major: (c, py, px).
template <class T>
TensorT<T> extract_patches(const TensorT<T>& image, const ViTConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != cfg.in_channels ||
      image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size) {
    throw DimensionError("expected image [" + std::to_string(cfg.in_channels) + "x" +
                         std::to_string(cfg.image_size) + "x" +
                         std::to_string(cfg.image_size) + "], got " +
                         image.shape_str());
  }
  const int ps = cfg.patch_size, side = cfg.patches_per_side();
  const int hw = cfg.image_size, ch = cfg.in_channels;
  TensorT<T> out({cfg.num_patches(), cfg.patch_dim()});
  const T* src = image.data();
  T* dst = out.data();
  std::size_t row = 0;
  for (int py = 0; py < side; ++py) {
    for (int px = 0; px < side; ++px, ++row) {
      T* prow = dst + row * static_cast<std::size_t>(cfg.patch_dim());
      std::size_t k = 0;
      for (int c = 0; c < ch; ++c) {
        const T* plane = src + static_cast<std::size_t>(c) * hw * hw;
        for (int y = 0; y < ps; ++y) {
          const T* line = plane + static_cast<std::size_t>(py * ps + y) * hw + px * ps;
          for (int x = 0; x < ps; ++x) prow[k++] = line[x];
        }
      }
    }
  }
  return out;
}

// Linear projection of flattened patches: [N, patch_dim] -> [N, D].
template <class T>
TensorT<T> patch_embed(const TensorT<T>& image, const ViTParamsT<T>& params,
                       const ViTConfig& cfg) {
  TensorT<T> patches = extract_patches(image, cfg);
  TensorT<T> emb = matmul(patches, params.patch_weight);
  add_bias_rows(emb, params.patch_bias);
  return emb;
}

// Multi-head self-attention over a token sequence [S, D]. No mask.
template <class T>
TensorT<T> attention(const TensorT<T>& x, const BlockParamsT<T>& bp, int num_heads,
                     AttentionCacheT<T>* cache = nullptr) {
  if (x.rank() != 2) throw DimensionError("attention expects [S, D], got " + x.shape_str());
  const int s = x.dim(0), d = x.dim(1);
  if (d % num_heads != 0) {
    throw DimensionError("embed dim " + std::to_string(d) +
                         " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (bp.qkv_weight.dim(0) != d) {
    throw DimensionError("qkv weight " + bp.qkv_weight.shape_str() +
                         " does not match input " + x.shape_str());
  }
  const int hd = d / num_heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(hd));

  TensorT<T> qkv = matmul(x, bp.qkv_weight);
  add_bias_rows(qkv, bp.qkv_bias);

  TensorT<T> context({s, d});
  TensorT<T> probs({num_heads, s, s});
  for (int h = 0; h < num_heads; ++h) {
    TensorT<T> q = slice_cols(qkv, h * hd, hd);
    TensorT<T> k = slice_cols(qkv, d + h * hd, hd);
    TensorT<T> v = slice_cols(qkv, 2 * d + h * hd, hd);
    TensorT<T> scores = matmul(q, k.transposed());
    scale_inplace(scores, inv_scale);
    softmax_rows_inplace(scores.data(), static_cast<std::size_t>(s), s);
    std::copy(scores.data(), scores.data() + scores.size(),
              probs.data() + static_cast<std::size_t>(h) * s * s);
    set_cols(context, matmul(scores, v), h * hd);
  }

  TensorT<T> out = matmul(context, bp.proj_weight);
  add_bias_rows(out, bp.proj_bias);
  if (cache) {
    cache->input = x;
    cache->qkv = std::move(qkv);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

// Pre-norm encoder block: x + attn(ln1(x)), then + mlp(ln2(.)).
template <class T>
TensorT<T> encoder_block(const TensorT<T>& x, const BlockParamsT<T>& bp,
                         const ViTConfig& cfg, BlockCacheT<T>* cache = nullptr) {
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  TensorT<T> h1 = layer_norm(x, bp.ln1_gamma, bp.ln1_beta, eps);
  TensorT<T> attn_out =
      attention(h1, bp, cfg.num_heads, cache ? &cache->attn : nullptr);
  TensorT<T> x_mid = add(x, attn_out);

  TensorT<T> h2 = layer_norm(x_mid, bp.ln2_gamma, bp.ln2_beta, eps);
  TensorT<T> fc1_out = matmul(h2, bp.fc1_weight);
  add_bias_rows(fc1_out, bp.fc1_bias);
  TensorT<T> act = gelu(fc1_out);
  TensorT<T> mlp_out = matmul(act, bp.fc2_weight);
  add_bias_rows(mlp_out, bp.fc2_bias);
  TensorT<T> out = add(x_mid, mlp_out);

  if (cache) {
    cache->x_in = x;
    cache->x_mid = std::move(x_mid);
    cache->h2 = std::move(h2);
    cache->fc1_out = std::move(fc1_out);
    cache->act = std::move(act);
  }
  return out;
}

namespace detail {

// Forward for one image [C, H, W]; returns logits [num_classes].
template <class T>
TensorT<T> forward_single(const TensorT<T>& image, const ViTParamsT<T>& params,
                          const ViTConfig& cfg, ImageCacheT<T>* cache) {
  const int s = cfg.seq_len(), d = cfg.embed_dim;

  TensorT<T> patches = extract_patches(image, cfg);
  TensorT<T> emb = matmul(patches, params.patch_weight);
  add_bias_rows(emb, params.patch_bias);

  TensorT<T> tokens({s, d});
  for (int j = 0; j < d; ++j) {
    tokens.at(0, j) = params.cls_token[static_cast<std::size_t>(j)] +
                      params.pos_embed.at(0, j);
  }
  for (int i = 1; i < s; ++i) {
    for (int j = 0; j < d; ++j) {
      tokens.at(i, j) = emb.at(i - 1, j) + params.pos_embed.at(i, j);
    }
  }

  if (cache) {
    cache->patches = std::move(patches);
    cache->blocks.resize(static_cast<std::size_t>(cfg.depth));
  }

  TensorT<T> x = std::move(tokens);
  for (int l = 0; l < cfg.depth; ++l) {
    x = encoder_block(x, params.blocks[static_cast<std::size_t>(l)], cfg,
                      cache ? &cache->blocks[static_cast<std::size_t>(l)] : nullptr);
    if (!x.all_finite()) {
      throw NumericError("non-finite activation in encoder block " + std::to_string(l));
    }
  }

  TensorT<T> fin = layer_norm(x, params.final_gamma, params.final_beta,
                              static_cast<T>(cfg.layer_norm_eps));
  TensorT<T> logits({cfg.num_classes});
  for (int c = 0; c < cfg.num_classes; ++c) {
    T acc = params.head_bias[static_cast<std::size_t>(c)];
    const T* w = params.head_weight.data() + static_cast<std::size_t>(c) * d;
    const T* f0 = fin.data();  // class token is row 0
    for (int j = 0; j < d; ++j) acc += w[j] * f0[j];
    logits[static_cast<std::size_t>(c)] = acc;
  }
  if (cache) {
    cache->final_in = std::move(x);
    cache->final_out = std::move(fin);
  }
  return logits;
}

// Backward for one image; accumulates parameter gradients into `grads`.
template <class T>
void backward_single(const TensorT<T>& dlogits, const ViTParamsT<T>& params,
                     const ViTConfig& cfg, const ImageCacheT<T>& cache,
                     ViTParamsT<T>& grads) {
  const int s = cfg.seq_len(), d = cfg.embed_dim;
  const T eps = static_cast<T>(cfg.layer_norm_eps);

  // head: logits[c] = head_w[c,:] . final_out[0,:] + head_b[c]
  TensorT<T> dfin({s, d});
  const T* f0 = cache.final_out.data();
  for (int c = 0; c < cfg.num_classes; ++c) {
    const T g = dlogits[static_cast<std::size_t>(c)];
    T* dw = grads.head_weight.data() + static_cast<std::size_t>(c) * d;
    const T* w = params.head_weight.data() + static_cast<std::size_t>(c) * d;
    for (int j = 0; j < d; ++j) {
      dw[j] += g * f0[j];
      dfin.at(0, j) += g * w[j];
    }
    grads.head_bias[static_cast<std::size_t>(c)] += g;
  }

  LayerNormGradsT<T> fin_grads =
      layer_norm_backward(cache.final_in, params.final_gamma, eps, dfin);
  add_inplace(grads.final_gamma, fin_grads.dgamma);
  add_inplace(grads.final_beta, fin_grads.dbeta);

  TensorT<T> dx = std::move(fin_grads.dx);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const BlockParamsT<T>& bp = params.blocks[static_cast<std::size_t>(l)];
    BlockParamsT<T>& bg = grads.blocks[static_cast<std::size_t>(l)];
    const BlockCacheT<T>& bc = cache.blocks[static_cast<std::size_t>(l)];

    // out = x_mid + mlp(ln2(x_mid))
    // dx currently holds d(out).
    MatmulGradsT<T> fc2 = matmul_backward(bc.act, bp.fc2_weight, dx);
    add_inplace(bg.fc2_weight, fc2.db);
    add_inplace(bg.fc2_bias, column_sums(dx));
    TensorT<T> dfc1_out = gelu_backward(bc.fc1_out, fc2.da);
    MatmulGradsT<T> fc1 = matmul_backward(bc.h2, bp.fc1_weight, dfc1_out);
    add_inplace(bg.fc1_weight, fc1.db);
    add_inplace(bg.fc1_bias, column_sums(dfc1_out));
    LayerNormGradsT<T> ln2 =
        layer_norm_backward(bc.x_mid, bp.ln2_gamma, eps, fc1.da);
    add_inplace(bg.ln2_gamma, ln2.dgamma);
    add_inplace(bg.ln2_beta, ln2.dbeta);
    TensorT<T> dx_mid = add(dx, ln2.dx);

    // x_mid = x_in + attention(ln1(x_in))
    const AttentionCacheT<T>& ac = bc.attn;
    MatmulGradsT<T> proj = matmul_backward(ac.context, bp.proj_weight, dx_mid);
    add_inplace(bg.proj_weight, proj.db);
    add_inplace(bg.proj_bias, column_sums(dx_mid));

    const int heads = cfg.num_heads, hd = cfg.head_dim();
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(hd));
    TensorT<T> dqkv({s, 3 * d});
    for (int h = 0; h < heads; ++h) {
      TensorT<T> q = slice_cols(ac.qkv, h * hd, hd);
      TensorT<T> k = slice_cols(ac.qkv, d + h * hd, hd);
      TensorT<T> v = slice_cols(ac.qkv, 2 * d + h * hd, hd);
      TensorT<T> probs_h({s, s});
      std::copy(ac.probs.data() + static_cast<std::size_t>(h) * s * s,
                ac.probs.data() + static_cast<std::size_t>(h + 1) * s * s,
                probs_h.data());
      TensorT<T> dctx_h = slice_cols(proj.da, h * hd, hd);
      TensorT<T> dprobs = matmul(dctx_h, v.transposed());
      TensorT<T> dv = matmul(probs_h.transposed(), dctx_h);
      TensorT<T> dscores = softmax_backward(probs_h, dprobs);
      scale_inplace(dscores, inv_scale);
      TensorT<T> dq = matmul(dscores, k);
      TensorT<T> dk = matmul(dscores.transposed(), q);
      set_cols(dqkv, dq, h * hd);
      set_cols(dqkv, dk, d + h * hd);
      set_cols(dqkv, dv, 2 * d + h * hd);
    }
    MatmulGradsT<T> qkv = matmul_backward(ac.input, bp.qkv_weight, dqkv);
    add_inplace(bg.qkv_weight, qkv.db);
    add_inplace(bg.qkv_bias, column_sums(dqkv));
    LayerNormGradsT<T> ln1 = layer_norm_backward(bc.x_in, bp.ln1_gamma, eps, qkv.da);
    add_inplace(bg.ln1_gamma, ln1.dgamma);
    add_inplace(bg.ln1_beta, ln1.dbeta);
    dx = add(dx_mid, ln1.dx);
  }

  // tokens = [cls + pos_0; emb + pos_1..] -> dx is d(tokens)
  add_inplace(grads.pos_embed, dx);
  for (int j = 0; j < d; ++j) {
    grads.cls_token[static_cast<std::size_t>(j)] += dx.at(0, j);
  }
  TensorT<T> demb({s - 1, d});
  for (int i = 1; i < s; ++i) {
    for (int j = 0; j < d; ++j) demb.at(i - 1, j) = dx.at(i, j);
  }
  MatmulGradsT<T> patch = matmul_backward(cache.patches, params.patch_weight, demb);
  add_inplace(grads.patch_weight, patch.db);
  add_inplace(grads.patch_bias, column_sums(demb));
}

template <class T>
TensorT<T> image_slice(const TensorT<T>& images, int b, const ViTConfig& cfg) {
  const std::size_t plane =
      static_cast<std::size_t>(cfg.in_channels) * cfg.image_size * cfg.image_size;
  TensorT<T> img({cfg.in_channels, cfg.image_size, cfg.image_size});
  std::copy(images.data() + static_cast<std::size_t>(b) * plane,
            images.data() + static_cast<std::size_t>(b + 1) * plane, img.data());
  return img;
}

}  // namespace detail

// Batch forward: images [B, C, H, W] -> logits [B, num_classes]. Images are
// processed independently (optionally in parallel); when `cache` is given it
// retains the per-image state backward needs.
template <class T>
TensorT<T> vit_forward(const TensorT<T>& images, const ViTParamsT<T>& params,
                       const ViTConfig& cfg, ForwardCacheT<T>* cache = nullptr) {
  if (images.rank() != 4 || images.dim(1) != cfg.in_channels ||
      images.dim(2) != cfg.image_size || images.dim(3) != cfg.image_size) {
    throw DimensionError("expected images [Bx" + std::to_string(cfg.in_channels) +
                         "x" + std::to_string(cfg.image_size) + "x" +
                         std::to_string(cfg.image_size) + "], got " +
                         images.shape_str());
  }
  const int batch = images.dim(0);
  TensorT<T> logits({batch, cfg.num_classes});
  if (cache) {
    cache->images.clear();
    cache->images.resize(static_cast<std::size_t>(batch));
  }
  parallel_for(batch, [&](std::int64_t b) {
    TensorT<T> img = detail::image_slice(images, static_cast<int>(b), cfg);
    TensorT<T> row = detail::forward_single(
        img, params, cfg, cache ? &cache->images[static_cast<std::size_t>(b)] : nullptr);
    for (int c = 0; c < cfg.num_classes; ++c) {
      logits.at(static_cast<int>(b), c) = row[static_cast<std::size_t>(c)];
    }
  });
  return logits;
}

// Batch backward: accumulates exact parameter gradients into `grads` (which
// must be zeroed by the caller if fresh gradients are wanted). Images are
// accumulated in batch order, so results do not depend on the thread count.
template <class T>
void vit_backward(const TensorT<T>& logit_grads, const ViTParamsT<T>& params,
                  const ViTConfig& cfg, const ForwardCacheT<T>& cache,
                  ViTParamsT<T>& grads) {
  if (logit_grads.rank() != 2 || logit_grads.dim(1) != cfg.num_classes) {
    throw DimensionError("expected logit grads [Bx" +
                         std::to_string(cfg.num_classes) + "], got " +
                         logit_grads.shape_str());
  }
  const int batch = logit_grads.dim(0);
  if (cache.images.size() != static_cast<std::size_t>(batch)) {
    throw StateError("backward called without a matching forward cache (have " +
                     std::to_string(cache.images.size()) + " cached images, need " +
                     std::to_string(batch) + ")");
  }
  for (int b = 0; b < batch; ++b) {
    TensorT<T> dl({cfg.num_classes});
    for (int c = 0; c < cfg.num_classes; ++c) dl[static_cast<std::size_t>(c)] = logit_grads.at(b, c);
    detail::backward_single(dl, params, cfg, cache.images[static_cast<std::size_t>(b)],
                            grads);
  }
}

// A configured parameter set plus the class names it was trained on.
struct ViTModel {
  ViTConfig config;
  ViTParams params;
  std::vector<std::string> class_names;
};

}  // namespace vitforge
