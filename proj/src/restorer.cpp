#include "resplat/restorer.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "resplat/common.hpp"

namespace resplat {
namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

constexpr int kFourierDims = 16;  // sin/cos pairs -> 32 features
constexpr double kLnEps = 1e-5;
constexpr double kDeadRow = -5e8;  // score rows maxing below this are fully masked
constexpr char kMagic[8] = {'R', 'S', 'P', 'L', 'A', 'T', 'F', '1'};

constexpr double kInvSqrt2 = 0.70710678118654752440;

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad_scalar(double x) {
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// Fixed log-spaced frequency bank over the c_noise range; not learned.
VectorXd fourier_features(double u) {
  VectorXd f(2 * kFourierDims);
  for (int k = 0; k < kFourierDims; ++k) {
    const double freq = 0.5 * std::pow(64.0, double(k) / double(kFourierDims - 1));
    f(2 * k) = std::sin(freq * u);
    f(2 * k + 1) = std::cos(freq * u);
  }
  return f;
}

struct ParamRef {
  const ParamLayout& layout;
  const std::vector<double>& buf;
  Eigen::Map<const MatrixXd> operator()(const std::string& name) const {
    return layout.view(buf, name);
  }
};

struct GradRef {
  const ParamLayout& layout;
  std::vector<double>& buf;
  Eigen::Map<MatrixXd> operator()(const std::string& name) const {
    return layout.view(buf, name);
  }
};

struct LnCache {
  MatrixXd xhat;  // rows x width
  VectorXd rstd;  // rows
};

MatrixXd layer_norm(const MatrixXd& x, const Eigen::Ref<const MatrixXd>& g,
                    const Eigen::Ref<const MatrixXd>& b, LnCache* cache) {
  const VectorXd mean = x.rowwise().mean();
  MatrixXd centered = x.colwise() - mean;
  const VectorXd var = centered.array().square().matrix().rowwise().mean();
  const VectorXd rstd = (var.array() + kLnEps).rsqrt().matrix();
  MatrixXd xhat = (centered.array().colwise() * rstd.array()).matrix();
  if (cache) {
    cache->xhat = xhat;
    cache->rstd = rstd;
  }
  MatrixXd y =
      ((xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array())
          .matrix();
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const LnCache& c,
                             const Eigen::Ref<const MatrixXd>& g,
                             Eigen::Map<MatrixXd> dg, Eigen::Map<MatrixXd> db) {
  dg.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  MatrixXd dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
  const VectorXd m1 = dxhat.rowwise().mean();
  const VectorXd m2 = (dxhat.array() * c.xhat.array()).matrix().rowwise().mean();
  MatrixXd dx = (((dxhat.colwise() - m1).array() -
                  c.xhat.array().colwise() * m2.array())
                     .colwise() *
                 c.rstd.array())
                    .matrix();
  return dx;
}

struct AttnCache {
  MatrixXd yq;              // query-side input (n x in_dim)
  MatrixXd q, k, v;         // n x width, m x width, m x width
  std::vector<MatrixXd> a;  // per head: n x m attention weights
  MatrixXd o;               // n x width, concatenated head outputs
  int dead_rows = 0;
};

MatrixXd attention_forward(const MatrixXd& yq, const MatrixXd& ykv,
                           const MatrixXd* mask, int heads, const ParamRef& p,
                           const std::string& pre, AttnCache* c) {
  const int n = int(yq.rows());
  const int width = int(p(pre + ".wq").cols());
  const int dk = width / heads;
  const double scale = 1.0 / std::sqrt(double(dk));

  MatrixXd q = yq * p(pre + ".wq");
  q.rowwise() += p(pre + ".bq").row(0);
  MatrixXd k = ykv * p(pre + ".wk");
  k.rowwise() += p(pre + ".bk").row(0);
  MatrixXd v = ykv * p(pre + ".wv");
  v.rowwise() += p(pre + ".bv").row(0);

  const int m = int(k.rows());
  MatrixXd o(n, width);
  std::vector<MatrixXd> a_heads(static_cast<size_t>(heads));
  int dead = 0;
  for (int h = 0; h < heads; ++h) {
    MatrixXd s = scale * (q.middleCols(h * dk, dk) *
                          k.middleCols(h * dk, dk).transpose());
    if (mask) s += *mask;
    MatrixXd a(n, m);
    for (int i = 0; i < n; ++i) {
      const double mx = s.row(i).maxCoeff();
      if (mx <= kDeadRow) {
        a.row(i).setZero();
        ++dead;
        continue;
      }
      RowVectorXd e = (s.row(i).array() - mx).exp().matrix();
      a.row(i) = e / e.sum();
    }
    o.middleCols(h * dk, dk) = a * v.middleCols(h * dk, dk);
    a_heads[size_t(h)] = std::move(a);
  }
  MatrixXd out = o * p(pre + ".wo");
  out.rowwise() += p(pre + ".bo").row(0);
  if (c) {
    c->yq = yq;
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
    c->a = std::move(a_heads);
    c->o = std::move(o);
    c->dead_rows = dead;
  }
  return out;
}

// dyq / dykv accumulate input gradients; they may alias (self-attention).
void attention_backward(const MatrixXd& dout, const MatrixXd& ykv, int heads,
                        const AttnCache& c, const ParamRef& p,
                        const std::string& pre, const GradRef& g,
                        MatrixXd* dyq, MatrixXd* dykv) {
  const int n = int(c.q.rows());
  const int m = int(c.k.rows());
  const int width = int(c.q.cols());
  const int dk = width / heads;
  const double scale = 1.0 / std::sqrt(double(dk));

  g(pre + ".wo") += c.o.transpose() * dout;
  g(pre + ".bo").row(0) += dout.colwise().sum();
  MatrixXd do_concat = dout * p(pre + ".wo").transpose();

  MatrixXd dq(n, width), dkm(m, width), dvm(m, width);
  for (int h = 0; h < heads; ++h) {
    const auto qh = c.q.middleCols(h * dk, dk);
    const auto kh = c.k.middleCols(h * dk, dk);
    const auto vh = c.v.middleCols(h * dk, dk);
    const MatrixXd& a = c.a[size_t(h)];
    MatrixXd doh = do_concat.middleCols(h * dk, dk);
    MatrixXd da = doh * vh.transpose();  // n x m
    dvm.middleCols(h * dk, dk) = a.transpose() * doh;
    const VectorXd rowsum = (da.array() * a.array()).matrix().rowwise().sum();
    MatrixXd ds = (a.array() * (da.colwise() - rowsum).array()).matrix();
    ds *= scale;
    dq.middleCols(h * dk, dk) = ds * kh;
    dkm.middleCols(h * dk, dk) = ds.transpose() * qh;
  }
  g(pre + ".wq") += c.yq.transpose() * dq;
  g(pre + ".bq").row(0) += dq.colwise().sum();
  g(pre + ".wk") += ykv.transpose() * dkm;
  g(pre + ".bk").row(0) += dkm.colwise().sum();
  g(pre + ".wv") += ykv.transpose() * dvm;
  g(pre + ".bv").row(0) += dvm.colwise().sum();
  if (dyq) *dyq += dq * p(pre + ".wq").transpose();
  if (dykv) *dykv += dkm * p(pre + ".wk").transpose() + dvm * p(pre + ".wv").transpose();
}

struct BlockCache {
  LnCache ln1, ln2, ln3, ln4;
  std::vector<AttnCache> sa;  // per frame
  std::vector<AttnCache> ta;  // per spatial token
  AttnCache ca;
  MatrixXd y4;                // MLP input (post-LN4)
  MatrixXd mlp_h1, mlp_hg;    // n x 4*width, pre/post activation
};

struct Workspace {
  int frames = 0;
  EdmCoeffs co{};
  MatrixXd zt_mat;            // n x C (unscaled target-side latents)
  MatrixXd zin;               // n x (C + Cc)
  MatrixXd mf;                // n_t x ref_channels
  VectorXd fourier;           // 2 * kFourierDims
  MatrixXd semb_h1, semb_hg;  // 1 x width
  MatrixXd mask;              // frames x frames additive mask
  std::vector<BlockCache> blocks;
  LnCache lnf;
  MatrixXd yf;   // n x width, head input
  MatrixXd out;  // n x C network output (pre-preconditioning)
};

std::string blk(int b) { return "blk" + std::to_string(b); }

int count_dead(const MatrixXd& a) {
  int n = 0;
  for (int i = 0; i < a.rows(); ++i)
    if (a.row(i).sum() < 0.5) ++n;
  return n;
}

void check_latents(const ModelConfig& cfg, const LatentVideo& z_t,
                   const LatentVideo& z_c) {
  z_t.validate();
  z_c.validate();
  if (z_t.n_frames() < 1 || z_t.n_frames() > cfg.max_frames)
    throw ConfigError("denoise: frame count " + std::to_string(z_t.n_frames()) +
                      " outside [1, " + std::to_string(cfg.max_frames) + "]");
  if (z_c.n_frames() != z_t.n_frames())
    throw ConfigError("denoise: coarse/noisy frame counts differ");
  for (const auto& f : z_t.frames)
    if (f.rows() != cfg.tokens || f.cols() != cfg.latent_channels)
      throw ConfigError("denoise: latent tokens/channels do not match model config");
  for (const auto& f : z_c.frames)
    if (f.rows() != cfg.tokens || f.cols() != cfg.cond_channels)
      throw ConfigError("denoise: conditioning tokens/channels do not match model config");
}

// Runs the full network; fills the workspace with every activation the
// backward pass needs and leaves the raw head output in ws->out.
void forward_core(const ModelConfig& cfg, const ParamRef& p,
                  const LatentVideo& z_t, double sigma, const LatentVideo& z_c,
                  const MatrixXd& mf, Workspace* ws, AttnCapture* capture) {
  const int frames = z_t.n_frames();
  const int tokens = cfg.tokens;
  const int n = frames * tokens;
  const int c_lat = cfg.latent_channels;
  const int c_cond = cfg.cond_channels;
  const int width = cfg.width;

  ws->frames = frames;
  ws->co = edm_coeffs(sigma, cfg.sigma_data);
  ws->mf = mf;

  ws->zt_mat.resize(n, c_lat);
  ws->zin.resize(n, c_lat + c_cond);
  for (int f = 0; f < frames; ++f) {
    ws->zt_mat.middleRows(f * tokens, tokens) = z_t.frames[size_t(f)];
    ws->zin.block(f * tokens, 0, tokens, c_lat) =
        ws->co.c_in * z_t.frames[size_t(f)];
    if (cfg.condition_on_coarse)
      ws->zin.block(f * tokens, c_lat, tokens, c_cond) = z_c.frames[size_t(f)];
    else
      ws->zin.block(f * tokens, c_lat, tokens, c_cond).setZero();
  }

  MatrixXd x = ws->zin * p("in_proj.w");
  x.rowwise() += p("in_proj.b").row(0);

  ws->fourier = fourier_features(ws->co.c_noise);
  ws->semb_h1 = ws->fourier.transpose() * p("semb.w1") + p("semb.b1");
  ws->semb_hg = ws->semb_h1.unaryExpr(&gelu_scalar);
  MatrixXd semb = ws->semb_hg * p("semb.w2") + p("semb.b2");

  const auto pos_s = p("pos_s");
  const auto pos_t = p("pos_t");
  for (int f = 0; f < frames; ++f)
    for (int t = 0; t < tokens; ++t)
      x.row(f * tokens + t) += pos_s.row(t) + pos_t.row(f) + semb.row(0);

  ws->mask = (cfg.use_mask && frames >= 2) ? boundary_mask(frames)
                                           : MatrixXd::Zero(frames, frames);

  ws->blocks.assign(size_t(cfg.depth), BlockCache{});
  for (int b = 0; b < cfg.depth; ++b) {
    BlockCache& bc = ws->blocks[size_t(b)];
    const std::string pre = blk(b);

    // Per-frame spatial self-attention.
    MatrixXd y1 = layer_norm(x, p(pre + ".ln1.g"), p(pre + ".ln1.b"), &bc.ln1);
    bc.sa.resize(size_t(frames));
    for (int f = 0; f < frames; ++f) {
      MatrixXd slice = y1.middleRows(f * tokens, tokens);
      x.middleRows(f * tokens, tokens) += attention_forward(
          slice, slice, nullptr, cfg.heads, p, pre + ".sa", &bc.sa[size_t(f)]);
    }

    // Per-location temporal self-attention with the boundary mask.
    MatrixXd y2 = layer_norm(x, p(pre + ".ln2.g"), p(pre + ".ln2.b"), &bc.ln2);
    bc.ta.resize(size_t(tokens));
    for (int t = 0; t < tokens; ++t) {
      MatrixXd gather(frames, width);
      for (int f = 0; f < frames; ++f) gather.row(f) = y2.row(f * tokens + t);
      MatrixXd o = attention_forward(gather, gather, &ws->mask, cfg.heads, p,
                                     pre + ".ta", &bc.ta[size_t(t)]);
      for (int f = 0; f < frames; ++f) x.row(f * tokens + t) += o.row(f);
      if (capture &&
          (capture->block_select < 0 || capture->block_select == b)) {
        for (int h = 0; h < cfg.heads; ++h) {
          if (capture->head_select >= 0 && capture->head_select != h) continue;
          const MatrixXd& a = bc.ta[size_t(t)].a[size_t(h)];
          if (capture->sum.size() == 0)
            capture->sum = MatrixXd::Zero(frames, frames);
          if (capture->sum.rows() != frames)
            throw NumericError("attention capture: frame count changed between calls");
          capture->sum += a;
          capture->count += 1;
          capture->fully_masked_rows += count_dead(a);
        }
      }
    }

    // Cross-attention to the reference tokens.
    MatrixXd y3 = layer_norm(x, p(pre + ".ln3.g"), p(pre + ".ln3.b"), &bc.ln3);
    x += attention_forward(y3, ws->mf, nullptr, cfg.heads, p, pre + ".ca", &bc.ca);

    // MLP.
    bc.y4 = layer_norm(x, p(pre + ".ln4.g"), p(pre + ".ln4.b"), &bc.ln4);
    bc.mlp_h1 = bc.y4 * p(pre + ".mlp.w1");
    bc.mlp_h1.rowwise() += p(pre + ".mlp.b1").row(0);
    bc.mlp_hg = bc.mlp_h1.unaryExpr(&gelu_scalar);
    MatrixXd mlp_out = bc.mlp_hg * p(pre + ".mlp.w2");
    mlp_out.rowwise() += p(pre + ".mlp.b2").row(0);
    x += mlp_out;
  }

  ws->yf = layer_norm(x, p("lnf.g"), p("lnf.b"), &ws->lnf);
  ws->out = ws->yf * p("head.w");
  ws->out.rowwise() += p("head.b").row(0);
  if (!ws->out.allFinite())
    throw NumericError("denoise: non-finite network output at sigma=" +
                       std::to_string(sigma));
}

// Backward through forward_core given dLoss/d(ws->out); accumulates parameter
// gradients. Input gradients are not needed by any caller and are dropped,
// except the reference-token path which flows into the learned projection.
void backward_core(const ModelConfig& cfg, const ParamRef& p, const GradRef& g,
                   const Workspace& ws, const MatrixXd& dout_net,
                   const MatrixXd& raw_ref) {
  const int frames = ws.frames;
  const int tokens = cfg.tokens;
  const int width = cfg.width;

  g("head.w") += ws.yf.transpose() * dout_net;
  g("head.b").row(0) += dout_net.colwise().sum();
  MatrixXd dyf = dout_net * p("head.w").transpose();
  MatrixXd dx =
      layer_norm_backward(dyf, ws.lnf, p("lnf.g"), g("lnf.g"), g("lnf.b"));

  MatrixXd dmf = MatrixXd::Zero(ws.mf.rows(), ws.mf.cols());

  for (int b = cfg.depth - 1; b >= 0; --b) {
    const BlockCache& bc = ws.blocks[size_t(b)];
    const std::string pre = blk(b);

    // MLP.
    {
      MatrixXd dhg = dx * p(pre + ".mlp.w2").transpose();
      g(pre + ".mlp.w2") += bc.mlp_hg.transpose() * dx;
      g(pre + ".mlp.b2").row(0) += dx.colwise().sum();
      MatrixXd dh1 =
          (dhg.array() * bc.mlp_h1.unaryExpr(&gelu_grad_scalar).array()).matrix();
      g(pre + ".mlp.w1") += bc.y4.transpose() * dh1;
      g(pre + ".mlp.b1").row(0) += dh1.colwise().sum();
      MatrixXd dy4 = dh1 * p(pre + ".mlp.w1").transpose();
      dx += layer_norm_backward(dy4, bc.ln4, p(pre + ".ln4.g"),
                                g(pre + ".ln4.g"), g(pre + ".ln4.b"));
    }

    // Cross-attention.
    {
      MatrixXd dy3 = MatrixXd::Zero(dx.rows(), width);
      attention_backward(dx, ws.mf, cfg.heads, bc.ca, p, pre + ".ca", g, &dy3,
                         &dmf);
      dx += layer_norm_backward(dy3, bc.ln3, p(pre + ".ln3.g"),
                                g(pre + ".ln3.g"), g(pre + ".ln3.b"));
    }

    // Temporal attention.
    {
      MatrixXd dy2 = MatrixXd::Zero(dx.rows(), width);
      for (int t = 0; t < tokens; ++t) {
        const AttnCache& c = bc.ta[size_t(t)];
        MatrixXd dslice(frames, width);
        for (int f = 0; f < frames; ++f) dslice.row(f) = dx.row(f * tokens + t);
        MatrixXd dgather = MatrixXd::Zero(frames, width);
        attention_backward(dslice, c.yq, cfg.heads, c, p, pre + ".ta", g,
                           &dgather, &dgather);
        for (int f = 0; f < frames; ++f)
          dy2.row(f * tokens + t) += dgather.row(f);
      }
      dx += layer_norm_backward(dy2, bc.ln2, p(pre + ".ln2.g"),
                                g(pre + ".ln2.g"), g(pre + ".ln2.b"));
    }

    // Spatial attention.
    {
      MatrixXd dy1 = MatrixXd::Zero(dx.rows(), width);
      for (int f = 0; f < frames; ++f) {
        const AttnCache& c = bc.sa[size_t(f)];
        MatrixXd dslice = MatrixXd::Zero(tokens, width);
        attention_backward(dx.middleRows(f * tokens, tokens), c.yq, cfg.heads,
                           c, p, pre + ".sa", g, &dslice, &dslice);
        dy1.middleRows(f * tokens, tokens) += dslice;
      }
      dx += layer_norm_backward(dy1, bc.ln1, p(pre + ".ln1.g"),
                                g(pre + ".ln1.g"), g(pre + ".ln1.b"));
    }
  }

  // Embeddings.
  MatrixXd dsemb = dx.colwise().sum();
  {
    auto gps = g("pos_s");
    auto gpt = g("pos_t");
    for (int f = 0; f < frames; ++f)
      for (int t = 0; t < tokens; ++t) {
        gps.row(t) += dx.row(f * tokens + t);
        gpt.row(f) += dx.row(f * tokens + t);
      }
  }
  {
    MatrixXd dhg = dsemb * p("semb.w2").transpose();
    g("semb.w2") += ws.semb_hg.transpose() * dsemb;
    g("semb.b2").row(0) += dsemb.row(0);
    MatrixXd dh1 =
        (dhg.array() * ws.semb_h1.unaryExpr(&gelu_grad_scalar).array()).matrix();
    g("semb.w1") += ws.fourier * dh1;
    g("semb.b1").row(0) += dh1.row(0);
  }

  g("in_proj.w") += ws.zin.transpose() * dx;
  g("in_proj.b").row(0) += dx.colwise().sum();

  // Reference projection: mf = ref_proj.w * raw_ref.
  g("ref_proj.w") += dmf * raw_ref.transpose();
}

void append_checkpoint_u32(std::string* buf, uint32_t v) {
  buf->push_back(char(v & 0xff));
  buf->push_back(char((v >> 8) & 0xff));
  buf->push_back(char((v >> 16) & 0xff));
  buf->push_back(char((v >> 24) & 0xff));
}

uint32_t read_checkpoint_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ConfigError("checkpoint: truncated header");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

}  // namespace

void ModelConfig::validate() const {
  if (latent_channels < 1 || cond_channels < 1 || width < 1 || depth < 1 ||
      heads < 1 || tokens < 1 || ref_token_count < 1 || ref_source_tokens < 1 ||
      ref_channels < 1 || max_frames < 1)
    throw ConfigError("model config: all dimensions must be positive");
  if (width % heads != 0)
    throw ConfigError("model config: width must be divisible by heads");
  if (!(sigma_data > 0.0))
    throw ConfigError("model config: sigma_data must be positive");
}

void ParamLayout::add(const std::string& name, int rows, int cols) {
  if (entries_.count(name))
    throw ConfigError("parameter layout: duplicate name " + name);
  entries_[name] = Entry{total_, rows, cols};
  order_.push_back(name);
  total_ += size_t(rows) * size_t(cols);
}

Eigen::Map<Eigen::MatrixXd> ParamLayout::view(std::vector<double>& buf,
                                              const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw ConfigError("parameter layout: unknown name " + name);
  if (buf.size() != total_)
    throw ConfigError("parameter layout: buffer size mismatch");
  const Entry& e = it->second;
  return Eigen::Map<Eigen::MatrixXd>(buf.data() + e.offset, e.rows, e.cols);
}

Eigen::Map<const Eigen::MatrixXd> ParamLayout::view(
    const std::vector<double>& buf, const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw ConfigError("parameter layout: unknown name " + name);
  if (buf.size() != total_)
    throw ConfigError("parameter layout: buffer size mismatch");
  const Entry& e = it->second;
  return Eigen::Map<const Eigen::MatrixXd>(buf.data() + e.offset, e.rows,
                                           e.cols);
}

FixerModel::FixerModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int w = cfg_.width;
  const int cin = cfg_.latent_channels + cfg_.cond_channels;
  layout_.add("in_proj.w", cin, w);
  layout_.add("in_proj.b", 1, w);
  layout_.add("pos_s", cfg_.tokens, w);
  layout_.add("pos_t", cfg_.max_frames, w);
  layout_.add("semb.w1", 2 * kFourierDims, w);
  layout_.add("semb.b1", 1, w);
  layout_.add("semb.w2", w, w);
  layout_.add("semb.b2", 1, w);
  layout_.add("ref_proj.w", cfg_.ref_token_count, cfg_.ref_source_tokens);
  for (int b = 0; b < cfg_.depth; ++b) {
    const std::string pre = blk(b);
    layout_.add(pre + ".ln1.g", 1, w);
    layout_.add(pre + ".ln1.b", 1, w);
    for (const char* a : {".sa", ".ta"}) {
      layout_.add(pre + a + std::string(".wq"), w, w);
      layout_.add(pre + a + std::string(".bq"), 1, w);
      layout_.add(pre + a + std::string(".wk"), w, w);
      layout_.add(pre + a + std::string(".bk"), 1, w);
      layout_.add(pre + a + std::string(".wv"), w, w);
      layout_.add(pre + a + std::string(".bv"), 1, w);
      layout_.add(pre + a + std::string(".wo"), w, w);
      layout_.add(pre + a + std::string(".bo"), 1, w);
      if (a == std::string(".sa")) {
        layout_.add(pre + ".ln2.g", 1, w);
        layout_.add(pre + ".ln2.b", 1, w);
      }
    }
    layout_.add(pre + ".ln3.g", 1, w);
    layout_.add(pre + ".ln3.b", 1, w);
    layout_.add(pre + ".ca.wq", w, w);
    layout_.add(pre + ".ca.bq", 1, w);
    layout_.add(pre + ".ca.wk", cfg_.ref_channels, w);
    layout_.add(pre + ".ca.bk", 1, w);
    layout_.add(pre + ".ca.wv", cfg_.ref_channels, w);
    layout_.add(pre + ".ca.bv", 1, w);
    layout_.add(pre + ".ca.wo", w, w);
    layout_.add(pre + ".ca.bo", 1, w);
    layout_.add(pre + ".ln4.g", 1, w);
    layout_.add(pre + ".ln4.b", 1, w);
    layout_.add(pre + ".mlp.w1", w, 4 * w);
    layout_.add(pre + ".mlp.b1", 1, 4 * w);
    layout_.add(pre + ".mlp.w2", 4 * w, w);
    layout_.add(pre + ".mlp.b2", 1, w);
  }
  layout_.add("lnf.g", 1, w);
  layout_.add("lnf.b", 1, w);
  layout_.add("head.w", w, cfg_.latent_channels);
  layout_.add("head.b", 1, cfg_.latent_channels);
  params_.assign(layout_.total(), 0.0);
}

void FixerModel::init_params(uint64_t seed) {
  Rng rng(derive_seed(seed, "fixer-init", 0));
  for (const std::string& name : layout_.names()) {
    auto m = layout_.view(params_, name);
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    if (name == "head.w" || name == "head.b") {
      m.setZero();
    } else if (leaf == "g") {
      m.setOnes();
    } else if (!leaf.empty() && leaf[0] == 'b') {
      m.setZero();
    } else {
      for (int j = 0; j < m.cols(); ++j)
        for (int i = 0; i < m.rows(); ++i) m(i, j) = 0.02 * rng.normal();
    }
  }
}

Eigen::MatrixXd FixerModel::embed_reference(
    const Eigen::MatrixXd& raw_tokens) const {
  if (raw_tokens.rows() != cfg_.ref_source_tokens ||
      raw_tokens.cols() != cfg_.ref_channels)
    throw ConfigError("embed_reference: expected " +
                      std::to_string(cfg_.ref_source_tokens) + "x" +
                      std::to_string(cfg_.ref_channels) + " raw tokens, got " +
                      std::to_string(raw_tokens.rows()) + "x" +
                      std::to_string(raw_tokens.cols()));
  if (!raw_tokens.allFinite())
    throw NumericError("embed_reference: non-finite reference tokens");
  ParamRef p{layout_, params_};
  return p("ref_proj.w") * raw_tokens;
}

LatentVideo FixerModel::denoise(const LatentVideo& z_t, double sigma,
                                const LatentVideo& z_c,
                                const Eigen::MatrixXd& m_f,
                                AttnCapture* capture) const {
  check_latents(cfg_, z_t, z_c);
  if (m_f.rows() != cfg_.ref_token_count || m_f.cols() != cfg_.ref_channels)
    throw ConfigError("denoise: reference embedding dims do not match model config");
  if (!m_f.allFinite())
    throw NumericError("denoise: non-finite reference embedding");
  Workspace ws;
  ParamRef p{layout_, params_};
  forward_core(cfg_, p, z_t, sigma, z_c, m_f, &ws, capture);

  LatentVideo result;
  result.grid = z_t.grid;
  result.patch = z_t.patch;
  result.cyclic = false;
  result.frames.resize(size_t(ws.frames));
  const int tokens = cfg_.tokens;
  for (int f = 0; f < ws.frames; ++f)
    result.frames[size_t(f)] =
        ws.co.c_skip * z_t.frames[size_t(f)] +
        ws.co.c_out * ws.out.middleRows(f * tokens, tokens);
  return result;
}

double FixerModel::loss_and_grad(const LatentVideo& z_t, double sigma,
                                 const LatentVideo& z_c,
                                 const Eigen::MatrixXd& raw_ref_tokens,
                                 const LatentVideo& target,
                                 std::vector<double>* grads) const {
  check_latents(cfg_, z_t, z_c);
  target.validate();
  if (target.n_frames() != z_t.n_frames())
    throw ConfigError("loss_and_grad: target frame count mismatch");
  if (grads == nullptr) throw ConfigError("loss_and_grad: null gradient buffer");
  if (grads->empty()) grads->assign(layout_.total(), 0.0);
  if (grads->size() != layout_.total())
    throw ConfigError("loss_and_grad: gradient buffer size mismatch");

  const MatrixXd m_f = embed_reference(raw_ref_tokens);
  Workspace ws;
  ParamRef p{layout_, params_};
  GradRef g{layout_, *grads};
  forward_core(cfg_, p, z_t, sigma, z_c, m_f, &ws, nullptr);

  const int tokens = cfg_.tokens;
  const int n = ws.frames * tokens;
  const double total = double(n) * double(cfg_.latent_channels);
  const double lw = edm_loss_weight(sigma, cfg_.sigma_data);

  MatrixXd diff(n, cfg_.latent_channels);
  for (int f = 0; f < ws.frames; ++f)
    diff.middleRows(f * tokens, tokens) =
        ws.co.c_skip * z_t.frames[size_t(f)] +
        ws.co.c_out * ws.out.middleRows(f * tokens, tokens) -
        target.frames[size_t(f)];
  const double loss = lw * diff.squaredNorm() / total;

  MatrixXd dout_net = (2.0 * lw * ws.co.c_out / total) * diff;
  backward_core(cfg_, p, g, ws, dout_net, raw_ref_tokens);
  return loss;
}

LatentVideo forward_diffuse(const LatentVideo& z0, double sigma,
                            const LatentVideo& noise) {
  z0.validate();
  noise.validate();
  if (noise.n_frames() != z0.n_frames())
    throw ConfigError("forward_diffuse: frame count mismatch");
  for (size_t f = 0; f < z0.frames.size(); ++f)
    if (noise.frames[f].rows() != z0.frames[f].rows() ||
        noise.frames[f].cols() != z0.frames[f].cols())
      throw ConfigError("forward_diffuse: token shape mismatch at frame " +
                        std::to_string(f));
  LatentVideo out = z0;
  if (sigma != 0.0)
    for (size_t f = 0; f < out.frames.size(); ++f)
      out.frames[f] += sigma * noise.frames[f];
  out.cyclic = z0.cyclic && (sigma == 0.0 || noise.cyclic);
  return out;
}

LatentVideo gaussian_like(const LatentVideo& like, Rng& rng) {
  LatentVideo out;
  out.grid = like.grid;
  out.patch = like.patch;
  out.cyclic = false;
  out.frames.reserve(like.frames.size());
  for (const auto& f : like.frames) {
    MatrixXd n(f.rows(), f.cols());
    for (int j = 0; j < n.cols(); ++j)
      for (int i = 0; i < n.rows(); ++i) n(i, j) = rng.normal();
    out.frames.push_back(std::move(n));
  }
  return out;
}

void FixerModel::save(const std::string& path) const {
  nlohmann::json header;
  header["format"] = "fixer-checkpoint";
  header["version"] = 1;
  header["param_count"] = params_.size();
  header["config"] = {{"latent_channels", cfg_.latent_channels},
                      {"cond_channels", cfg_.cond_channels},
                      {"width", cfg_.width},
                      {"depth", cfg_.depth},
                      {"heads", cfg_.heads},
                      {"tokens", cfg_.tokens},
                      {"ref_token_count", cfg_.ref_token_count},
                      {"ref_source_tokens", cfg_.ref_source_tokens},
                      {"ref_channels", cfg_.ref_channels},
                      {"max_frames", cfg_.max_frames},
                      {"sigma_data", cfg_.sigma_data},
                      {"use_mask", cfg_.use_mask},
                      {"condition_on_coarse", cfg_.condition_on_coarse}};
  const std::string hs = header.dump();

  std::string buf;
  buf.reserve(16 + hs.size() + 4 * params_.size());
  buf.append(kMagic, sizeof(kMagic));
  append_checkpoint_u32(&buf, uint32_t(hs.size()));
  buf.append(hs);
  for (double d : params_)
    append_checkpoint_u32(&buf, std::bit_cast<uint32_t>(float(d)));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("checkpoint: cannot open " + path + " for writing");
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw ConfigError("checkpoint: short write to " + path);
}

FixerModel FixerModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(kMagic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("checkpoint: bad magic in " + path);
  const uint32_t hlen = read_checkpoint_u32(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw ConfigError("checkpoint: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed header: ") + e.what());
  }
  try {
    if (header.at("format") != "fixer-checkpoint" || header.at("version") != 1)
      throw ConfigError("checkpoint: unsupported format/version in " + path);
    const auto& jc = header.at("config");
    ModelConfig cfg;
    cfg.latent_channels = jc.at("latent_channels").get<int>();
    cfg.cond_channels = jc.at("cond_channels").get<int>();
    cfg.width = jc.at("width").get<int>();
    cfg.depth = jc.at("depth").get<int>();
    cfg.heads = jc.at("heads").get<int>();
    cfg.tokens = jc.at("tokens").get<int>();
    cfg.ref_token_count = jc.at("ref_token_count").get<int>();
    cfg.ref_source_tokens = jc.at("ref_source_tokens").get<int>();
    cfg.ref_channels = jc.at("ref_channels").get<int>();
    cfg.max_frames = jc.at("max_frames").get<int>();
    cfg.sigma_data = jc.at("sigma_data").get<double>();
    cfg.use_mask = jc.at("use_mask").get<bool>();
    cfg.condition_on_coarse = jc.at("condition_on_coarse").get<bool>();

    FixerModel model(cfg);
    const size_t count = header.at("param_count").get<size_t>();
    if (count != model.params_.size())
      throw ConfigError("checkpoint: parameter count does not match config");
    std::vector<unsigned char> raw(4 * count);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!in) throw ConfigError("checkpoint: truncated parameters in " + path);
    for (size_t i = 0; i < count; ++i) {
      const uint32_t bits = uint32_t(raw[4 * i]) | uint32_t(raw[4 * i + 1]) << 8 |
                            uint32_t(raw[4 * i + 2]) << 16 |
                            uint32_t(raw[4 * i + 3]) << 24;
      model.params_[i] = double(std::bit_cast<float>(bits));
    }
    char extra;
    if (in.read(&extra, 1))
      throw ConfigError("checkpoint: trailing bytes in " + path);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: missing header field: ") + e.what());
  }
}

}  // namespace resplat
