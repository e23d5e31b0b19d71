#include "se3d/model.hpp"

#include <cmath>
#include <stdexcept>

namespace se3d {

namespace {

Tensor uniform_init(Shape shape, double bound, Rng r) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.uniform(-bound, bound);
  return t;
}

Parameter conv_weight(const std::string& name, const LayerSpec& s, bool transpose, Rng r) {
  const int fan_in = (transpose ? s.out_channels : s.in_channels) * s.kernel_h * s.kernel_w;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Parameter(name,
                   uniform_init({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}, bound, r));
}

Parameter vec_param(const std::string& name, int n, double bound, Rng r) {
  return Parameter(name, uniform_init({n}, bound, r));
}

}  // namespace

ModelConfig ModelConfig::canonical(int channels) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.encoder = {
      conv_spec(channels, 32, 7, 1, 1, 1), conv_spec(32, 32, 1, 7, 1, 1),
      conv_spec(32, 32, 8, 6, 2, 2),       conv_spec(32, 64, 7, 6, 1, 1),
      conv_spec(64, 64, 6, 5, 2, 2),       conv_spec(64, 96, 5, 5, 1, 1),
      conv_spec(96, 96, 6, 3, 2, 2),       conv_spec(96, 96, 5, 3, 1, 1),
      conv_spec(96, 128, 6, 3, 2, 1),      conv_spec(128, 256, 5, 3, 1, 1),
  };
  return cfg;
}

void ModelConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("config: channels must be >= 1");
  if (encoder.empty()) throw std::invalid_argument("config: encoder stack is empty");
  if (encoder.front().in_channels != channels)
    throw std::invalid_argument("config: first encoder block must take the input channels");
  for (size_t i = 0; i < encoder.size(); ++i) {
    encoder[i].validate();
    if (i > 0 && encoder[i].in_channels != encoder[i - 1].out_channels)
      throw std::invalid_argument("config: encoder channel chain is broken at block " +
                                  std::to_string(i));
  }
  if (dprnn_modules < 0) throw std::invalid_argument("config: dprnn_modules must be >= 0");
  if (dprnn_channels != lstm_hidden)
    throw std::invalid_argument(
        "config: dprnn_channels must equal lstm_hidden (direction sums feed the residual)");
  if (groupnorm_groups < 1 || dprnn_channels % groupnorm_groups != 0)
    throw std::invalid_argument("config: dprnn_channels must be divisible by groupnorm_groups");
  if (attention_inputs != 2)
    throw std::invalid_argument("config: the two-stage pipeline fuses exactly 2 inputs");
  if (beam_hidden < 1) throw std::invalid_argument("config: beam_hidden must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("config: dropout in [0,1)");
  if (window < 2 || (window & (window - 1)) != 0)
    throw std::invalid_argument("config: window must be a power of two");
  if (hop < 1 || hop > window) throw std::invalid_argument("config: hop must be in [1, window]");
  if (sample_rate < 1) throw std::invalid_argument("config: sample_rate must be positive");
  if (segment_samples() < window)
    throw std::invalid_argument("config: segment shorter than one stft window");
}

int64_t ModelConfig::segment_samples() const {
  return std::llround(segment_seconds * sample_rate);
}

std::vector<Shape> encoder_shape_chain(const std::vector<LayerSpec>& specs, int h, int w) {
  std::vector<Shape> chain;
  chain.reserve(specs.size() + 1);
  int ch = specs.front().in_channels, hh = h, ww = w;
  for (const auto& s : specs) {
    chain.push_back({ch, hh, ww});
    ConvGeom g = conv_geometry(s, hh, ww);
    ch = s.out_channels;
    hh = g.oh;
    ww = g.ow;
  }
  chain.push_back({ch, hh, ww});
  return chain;
}

// ---------------------------------------------------------------------------
// encoder / decoder blocks

EncoderBlock::EncoderBlock(const std::string& prefix, const LayerSpec& s, Rng init)
    : spec(s), name(prefix) {
  const double bound =
      1.0 / std::sqrt(static_cast<double>(s.in_channels) * s.kernel_h * s.kernel_w);
  weight = conv_weight(prefix + ".conv.weight", s, false, init.split("w"));
  bias = vec_param(prefix + ".conv.bias", s.out_channels, bound, init.split("b"));
  bn_gamma = Parameter(prefix + ".bn.gamma", Tensor(Shape{s.out_channels}, 1.0));
  bn_beta = Parameter(prefix + ".bn.beta", Tensor(Shape{s.out_channels}));
  bn_mean = Tensor(Shape{s.out_channels});
  bn_var = Tensor(Shape{s.out_channels}, 1.0);
}

Var EncoderBlock::forward(const Var& x, bool training) {
  Var h = conv2d(x, spec, weight.var(), bias.var());
  h = batchnorm2d(h, bn_gamma.var(), bn_beta.var(), bn_mean, bn_var, training);
  return leaky_relu(h, spec.slope);
}

void EncoderBlock::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
  out.push_back(&bn_gamma);
  out.push_back(&bn_beta);
}

void EncoderBlock::collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(name + ".bn.running_mean", &bn_mean);
  out.emplace_back(name + ".bn.running_var", &bn_var);
}

DecoderBlock::DecoderBlock(const std::string& prefix, const LayerSpec& s, Rng init)
    : spec(s), name(prefix) {
  const double bound =
      1.0 / std::sqrt(static_cast<double>(s.out_channels) * s.kernel_h * s.kernel_w);
  weight = conv_weight(prefix + ".conv.weight", s, true, init.split("w"));
  bias = vec_param(prefix + ".conv.bias", s.in_channels, bound, init.split("b"));
  bn_gamma = Parameter(prefix + ".bn.gamma", Tensor(Shape{s.in_channels}, 1.0));
  bn_beta = Parameter(prefix + ".bn.beta", Tensor(Shape{s.in_channels}));
  bn_mean = Tensor(Shape{s.in_channels});
  bn_var = Tensor(Shape{s.in_channels}, 1.0);
}

Var DecoderBlock::forward(const Var& x, int target_h, int target_w, bool training) {
  Var h = conv_transpose2d(x, spec, weight.var(), bias.var(), target_h, target_w);
  h = batchnorm2d(h, bn_gamma.var(), bn_beta.var(), bn_mean, bn_var, training);
  return leaky_relu(h, spec.slope);
}

void DecoderBlock::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
  out.push_back(&bn_gamma);
  out.push_back(&bn_beta);
}

void DecoderBlock::collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(name + ".bn.running_mean", &bn_mean);
  out.emplace_back(name + ".bn.running_var", &bn_var);
}

EncoderStack::EncoderStack(const std::string& prefix, const std::vector<LayerSpec>& specs,
                           Rng init) {
  blocks.reserve(specs.size());
  for (size_t i = 0; i < specs.size(); ++i)
    blocks.emplace_back(prefix + ".block" + std::to_string(i), specs[i], init.split(i));
}

EncodeResult EncoderStack::forward(const Var& mag, bool training) {
  EncodeResult res;
  res.skips.reserve(blocks.size());
  Var h = mag;
  for (auto& b : blocks) {
    h = b.forward(h, training);
    res.skips.push_back(h);
  }
  res.latent = h;
  return res;
}

void EncoderStack::collect(std::vector<Parameter*>& out) {
  for (auto& b : blocks) b.collect(out);
}

void EncoderStack::collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
  for (auto& b : blocks) b.collect_buffers(out);
}

DecoderStack::DecoderStack(const std::string& prefix, const std::vector<LayerSpec>& specs,
                           MaskActivation act, Rng init)
    : activation(act) {
  blocks.reserve(specs.size());
  // deepest encoder spec first
  for (size_t i = 0; i < specs.size(); ++i) {
    const size_t si = specs.size() - 1 - i;
    blocks.emplace_back(prefix + ".block" + std::to_string(i), specs[si], init.split(i));
  }
}

Var DecoderStack::forward(const Var& latent, const std::vector<Var>& skips, int in_h, int in_w,
                          bool training) {
  if (skips.size() != blocks.size())
    throw std::invalid_argument("decoder: skip count does not match block count");
  std::vector<LayerSpec> enc_specs(blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) enc_specs[blocks.size() - 1 - i] = blocks[i].spec;
  const std::vector<Shape> chain = encoder_shape_chain(enc_specs, in_h, in_w);

  Var h = latent;
  for (size_t i = 0; i < blocks.size(); ++i) {
    const Var& skip = skips[blocks.size() - 1 - i];
    if (!h.value().same_shape(skip.value()))
      throw std::runtime_error("decoder: skip shape " + shape_str(skip.shape()) +
                               " does not match block input " + shape_str(h.shape()));
    h = add(h, skip);
    const Shape& target = chain[blocks.size() - 1 - i];
    h = blocks[i].forward(h, target[1], target[2], training);
  }
  return activation == MaskActivation::kSigmoid ? sigmoid(h) : h;
}

void DecoderStack::collect(std::vector<Parameter*>& out) {
  for (auto& b : blocks) b.collect(out);
}

void DecoderStack::collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
  for (auto& b : blocks) b.collect_buffers(out);
}

// ---------------------------------------------------------------------------
// dprnn

BiLstmLayer::BiLstmLayer(const std::string& prefix, int input, int hidden_, Rng init)
    : hidden(hidden_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  auto mk = [&](const char* nm, Shape s, uint64_t salt) {
    return Parameter(prefix + "." + nm, uniform_init(std::move(s), bound, init.split(salt)));
  };
  fw_w_ih = mk("fw.w_ih", {4 * hidden_, input}, 0);
  fw_w_hh = mk("fw.w_hh", {4 * hidden_, hidden_}, 1);
  fw_b_ih = mk("fw.b_ih", {4 * hidden_}, 2);
  fw_b_hh = mk("fw.b_hh", {4 * hidden_}, 3);
  bw_w_ih = mk("bw.w_ih", {4 * hidden_, input}, 4);
  bw_w_hh = mk("bw.w_hh", {4 * hidden_, hidden_}, 5);
  bw_b_ih = mk("bw.b_ih", {4 * hidden_}, 6);
  bw_b_hh = mk("bw.b_hh", {4 * hidden_}, 7);
}

Var BiLstmLayer::forward(const Var& x) {
  LstmDirParams fw{fw_w_ih.var(), fw_w_hh.var(), fw_b_ih.var(), fw_b_hh.var()};
  LstmDirParams bw{bw_w_ih.var(), bw_w_hh.var(), bw_b_ih.var(), bw_b_hh.var()};
  return bilstm(x, fw, bw, hidden);
}

void BiLstmLayer::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&fw_w_ih, &fw_w_hh, &fw_b_ih, &fw_b_hh, &bw_w_ih, &bw_w_hh, &bw_b_ih,
                       &bw_b_hh})
    out.push_back(p);
}

DprnnModule::DprnnModule(const std::string& prefix, const ModelConfig& cfg, Rng init)
    : groups(cfg.groupnorm_groups), dropout_rate(cfg.dropout) {
  const int latent = cfg.latent_channels();
  const int d = cfg.dprnn_channels;
  entry_spec = conv_spec(latent, d, 1, 1, 1, 1);
  exit_spec = conv_spec(d, latent, 1, 1, 1, 1);
  entry_w = conv_weight(prefix + ".entry.weight", entry_spec, false, init.split("ew"));
  entry_b = vec_param(prefix + ".entry.bias", d, 1.0 / std::sqrt(static_cast<double>(latent)),
                      init.split("eb"));
  exit_w = conv_weight(prefix + ".exit.weight", exit_spec, false, init.split("xw"));
  exit_b = vec_param(prefix + ".exit.bias", latent, 1.0 / std::sqrt(static_cast<double>(d)),
                     init.split("xb"));
  time_lstm = BiLstmLayer(prefix + ".time_lstm", d, cfg.lstm_hidden, init.split("tl"));
  freq_lstm = BiLstmLayer(prefix + ".freq_lstm", d, cfg.lstm_hidden, init.split("fl"));
  gn_gamma = Parameter(prefix + ".gn.gamma", Tensor(Shape{d}, 1.0));
  gn_beta = Parameter(prefix + ".gn.beta", Tensor(Shape{d}));
  prelu_slope = Parameter(prefix + ".prelu.slope", Tensor(Shape{d}, 0.25));
}

Var DprnnModule::forward(const Var& x, bool training, Rng& stream) {
  const int h = time_lstm.hidden;

  Var u = conv2d(x, entry_spec, entry_w.var(), entry_b.var());  // (d, L, F)

  // time path: sequences over frames, one per frequency bin
  Var t_in = permute(u, {2, 1, 0});  // (F, L, d)
  Var t_out = time_lstm.forward(t_in);
  Var t_sum = add(narrow(t_out, 2, 0, h), narrow(t_out, 2, h, h));
  Var t_res = add(t_sum, t_in);

  // frequency path: sequences over bins, one per frame
  Var f_in = permute(t_res, {1, 0, 2});  // (L, F, d)
  Var f_out = freq_lstm.forward(f_in);
  Var f_sum = add(narrow(f_out, 2, 0, h), narrow(f_out, 2, h, h));
  Var f_res = add(f_sum, f_in);

  Var v = permute(f_res, {2, 0, 1});  // (d, L, F)
  v = groupnorm(v, gn_gamma.var(), gn_beta.var(), groups);
  v = prelu(v, prelu_slope.var());
  Var w = conv2d(v, exit_spec, exit_w.var(), exit_b.var());
  Var y = add(w, x);
  return dropout(y, dropout_rate, training, stream);
}

void DprnnModule::collect(std::vector<Parameter*>& out) {
  out.push_back(&entry_w);
  out.push_back(&entry_b);
  time_lstm.collect(out);
  freq_lstm.collect(out);
  out.push_back(&gn_gamma);
  out.push_back(&gn_beta);
  out.push_back(&prelu_slope);
  out.push_back(&exit_w);
  out.push_back(&exit_b);
}

DprnnBlock::DprnnBlock(const std::string& prefix, const ModelConfig& cfg, Rng init) {
  modules.reserve(static_cast<size_t>(cfg.dprnn_modules));
  for (int i = 0; i < cfg.dprnn_modules; ++i)
    modules.emplace_back(prefix + ".mod" + std::to_string(i), cfg,
                         init.split(static_cast<uint64_t>(i)));
}

Var DprnnBlock::forward(const Var& latent, bool training, Rng& stream) {
  Var h = latent;
  for (auto& m : modules) h = m.forward(h, training, stream);
  return h;
}

void DprnnBlock::collect(std::vector<Parameter*>& out) {
  for (auto& m : modules) m.collect(out);
}

// ---------------------------------------------------------------------------
// attention fusion

AttentionFusion::AttentionFusion(const std::string& prefix, int inputs_, int channels)
    : inputs(inputs_) {
  logits = Parameter(prefix + ".logits", Tensor(Shape{inputs_, channels}));
}

Var AttentionFusion::fuse(const std::vector<Var>& xs) {
  if (static_cast<int>(xs.size()) != inputs)
    throw std::invalid_argument("attention: expected " + std::to_string(inputs) + " inputs");
  for (const Var& x : xs)
    if (!x.value().same_shape(xs[0].value()))
      throw std::invalid_argument("attention: input shapes differ");
  Var w = softmax_axis0(logits.var());  // (N, C)
  const int c = xs[0].value().dim(0);
  Var out;
  for (int i = 0; i < inputs; ++i) {
    Var wi = reshape(narrow(w, 0, i, 1), {c});
    Var term = channel_scale(xs[static_cast<size_t>(i)], wi);
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

std::pair<Var, Var> AttentionFusion::fuse_complex(const std::vector<std::pair<Var, Var>>& xs) {
  if (static_cast<int>(xs.size()) != inputs)
    throw std::invalid_argument("attention: expected " + std::to_string(inputs) + " inputs");
  Var w = softmax_axis0(logits.var());
  const int c = xs[0].first.value().dim(0);
  Var out_re, out_im;
  for (int i = 0; i < inputs; ++i) {
    Var wi = reshape(narrow(w, 0, i, 1), {c});
    Var tre = channel_scale(xs[static_cast<size_t>(i)].first, wi);
    Var tim = channel_scale(xs[static_cast<size_t>(i)].second, wi);
    out_re = out_re.defined() ? add(out_re, tre) : tre;
    out_im = out_im.defined() ? add(out_im, tim) : tim;
  }
  return {out_re, out_im};
}

void AttentionFusion::collect(std::vector<Parameter*>& out) { out.push_back(&logits); }

// ---------------------------------------------------------------------------
// beamformer

namespace {

// (C,L,F) planes -> rows (L*F, 2C+1) of [re_0..re_C-1, im_0..im_C-1, f/(F-1)]
Var beam_pack(const Var& re, const Var& im) {
  const int c = re.value().dim(0);
  const int l = re.value().dim(1);
  const int f = re.value().dim(2);
  const int cols = 2 * c + 1;
  const int64_t rows = static_cast<int64_t>(l) * f;
  Tensor out(Shape{static_cast<int>(rows), cols});
  const double* pr = re.value().data();
  const double* pi = im.value().data();
  double* po = out.data();
  const double fnorm = f > 1 ? 1.0 / static_cast<double>(f - 1) : 0.0;
  for (int li = 0; li < l; ++li) {
    for (int fi = 0; fi < f; ++fi) {
      double* row = po + (static_cast<int64_t>(li) * f + fi) * cols;
      for (int ci = 0; ci < c; ++ci) {
        row[ci] = pr[(static_cast<int64_t>(ci) * l + li) * f + fi];
        row[c + ci] = pi[(static_cast<int64_t>(ci) * l + li) * f + fi];
      }
      row[2 * c] = fi * fnorm;
    }
  }
  return make_node(std::move(out), {re, im},
                   [re, im, c, l, f, cols](Node& n) {
                     const double* pg = n.grad.data();
                     auto scatter = [&](const Var& plane, int off) {
                       if (!plane.requires_grad()) return;
                       Tensor g(plane.shape());
                       double* pgo = g.data();
                       for (int li = 0; li < l; ++li)
                         for (int fi = 0; fi < f; ++fi) {
                           const double* row = pg + (static_cast<int64_t>(li) * f + fi) * cols;
                           for (int ci = 0; ci < c; ++ci)
                             pgo[(static_cast<int64_t>(ci) * l + li) * f + fi] += row[off + ci];
                         }
                       accumulate_grad(*plane.node(), g);
                     };
                     scatter(re, 0);
                     scatter(im, c);
                   },
                   "beam_pack");
}

}  // namespace

NeuralBeamformer::NeuralBeamformer(const std::string& prefix, int channels_, int hidden,
                                   double rate, Rng init)
    : channels(channels_), dropout_rate(rate) {
  const int din = 2 * channels_ + 1;
  const double b1v = 1.0 / std::sqrt(static_cast<double>(din));
  const double b2v = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1 = Parameter(prefix + ".l1.weight", uniform_init({hidden, din}, b1v, init.split("w1")));
  b1 = Parameter(prefix + ".l1.bias", uniform_init({hidden}, b1v, init.split("b1")));
  w2 = Parameter(prefix + ".l2.weight", uniform_init({2, hidden}, b2v, init.split("w2")));
  b2 = Parameter(prefix + ".l2.bias", uniform_init({2}, b2v, init.split("b2")));
}

std::pair<Var, Var> NeuralBeamformer::forward(const Var& re, const Var& im, bool training,
                                              Rng& stream) {
  if (re.value().dim(0) != channels)
    throw std::invalid_argument("beamformer: channel count mismatch");
  const int l = re.value().dim(1);
  const int f = re.value().dim(2);
  Var x = beam_pack(re, im);                  // (L*F, 2C+1)
  Var h = linear(x, w1.var(), b1.var());      // (L*F, hidden)
  h = leaky_relu(h, 0.01);
  h = dropout(h, dropout_rate, training, stream);
  Var o = linear(h, w2.var(), b2.var());      // (L*F, 2)
  Var ore = reshape(narrow(o, 1, 0, 1), {1, l, f});
  Var oim = reshape(narrow(o, 1, 1, 1), {1, l, f});
  return {ore, oim};
}

void NeuralBeamformer::collect(std::vector<Parameter*>& out) {
  out.push_back(&w1);
  out.push_back(&b1);
  out.push_back(&w2);
  out.push_back(&b2);
}

// ---------------------------------------------------------------------------
// full pipeline

TwoStageModel::TwoStageModel(ModelConfig cfg, Rng init) : cfg_(std::move(cfg)) {
  cfg_.validate();
  enc1_ = EncoderStack("enc1", cfg_.encoder, init.split("enc1"));
  enc2_ = EncoderStack("enc2", cfg_.encoder, init.split("enc2"));
  dec1_ = DecoderStack("dec1", cfg_.encoder, cfg_.mask_activation, init.split("dec1"));
  dec2_ = DecoderStack("dec2", cfg_.encoder, cfg_.mask_activation, init.split("dec2"));
  dprnn_ = DprnnBlock("dprnn", cfg_, init.split("dprnn"));
  mask_attn_ = AttentionFusion("attn_mask", cfg_.attention_inputs, cfg_.channels);
  sig_attn_ = AttentionFusion("attn_sig", cfg_.attention_inputs, cfg_.channels);
  beam_ = NeuralBeamformer("beam", cfg_.channels, cfg_.beam_hidden, cfg_.dropout,
                           init.split("beam"));
}

ForwardResult TwoStageModel::forward(const AudioSegment& seg, bool training, Rng stream) {
  if (seg.channels() != cfg_.channels)
    throw std::invalid_argument("forward: expected " + std::to_string(cfg_.channels) +
                                " channels, got " + std::to_string(seg.channels()));
  ComplexSpectrogram x = stft(seg, cfg_.window, cfg_.hop);
  const int l = x.frames();
  const int f = x.bins();

  ForwardResult res;
  res.x_re = x.re;
  res.x_im = x.im;
  Var xre = Var::constant(x.re, "stft.re");
  Var xim = Var::constant(x.im, "stft.im");

  Rng drop1 = stream.split("stage1");
  Rng drop_beam = stream.split("beam");

  // stage 1: mask from the dprnn-equipped autoencoder
  Var mag1 = hypot_v(xre, xim);
  EncodeResult e1 = enc1_.forward(mag1, training);
  Var lat = dprnn_.forward(e1.latent, training, drop1);
  res.m1 = dec1_.forward(lat, e1.skips, l, f, training);

  // reference signal for stage 2
  res.xf_re = mul(xre, res.m1);
  res.xf_im = mul(xim, res.m1);

  // stage 2: plain autoencoder on the reference magnitude
  Var mag2 = hypot_v(res.xf_re, res.xf_im);
  EncodeResult e2 = enc2_.forward(mag2, training);
  res.m2 = dec2_.forward(e2.latent, e2.skips, l, f, training);

  // fuse masks and signals, apply, beamform, invert
  res.m = mask_attn_.fuse({res.m1, res.m2});
  auto [xh_re, xh_im] = sig_attn_.fuse_complex({{xre, xim}, {res.xf_re, res.xf_im}});
  Var xm_re = mul(xh_re, res.m);
  Var xm_im = mul(xh_im, res.m);
  auto [xe_re, xe_im] = beam_.forward(xm_re, xm_im, training, drop_beam);
  res.xe_re = xe_re;
  res.xe_im = xe_im;
  res.enhanced = istft_op(xe_re, xe_im, cfg_.window, cfg_.hop, seg.samples());
  return res;
}

std::vector<Parameter*> TwoStageModel::parameters() {
  std::vector<Parameter*> out;
  enc1_.collect(out);
  dprnn_.collect(out);
  dec1_.collect(out);
  enc2_.collect(out);
  dec2_.collect(out);
  mask_attn_.collect(out);
  sig_attn_.collect(out);
  beam_.collect(out);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> TwoStageModel::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  enc1_.collect_buffers(out);
  dec1_.collect_buffers(out);
  enc2_.collect_buffers(out);
  dec2_.collect_buffers(out);
  return out;
}

}  // namespace se3d
