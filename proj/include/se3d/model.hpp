#pragma once

#include <string>
#include <utility>
#include <vector>

#include "se3d/dsp.hpp"
#include "se3d/nn.hpp"

namespace se3d {

enum class MaskActivation { kSigmoid, kLinear };

/// Full hyperparameter record of the two-stage network.
struct ModelConfig {
  int channels = 4;
  std::vector<LayerSpec> encoder;  // canonical() fills the 10-block stack
  int dprnn_modules = 4;
  int dprnn_channels = 128;  // bottleneck width; must equal lstm_hidden
  int lstm_hidden = 128;
  int groupnorm_groups = 8;
  int attention_inputs = 2;
  int beam_hidden = 128;
  double dropout = 0.1;
  MaskActivation mask_activation = MaskActivation::kSigmoid;
  int window = 512;
  int hop = 128;
  int sample_rate = 16000;
  double segment_seconds = 4.792;

  static ModelConfig canonical(int channels = 4);
  void validate() const;

  int64_t segment_samples() const;
  int frames() const { return stft_frames(segment_samples(), window, hop); }
  int bins() const { return window / 2 + 1; }
  int latent_channels() const { return encoder.back().out_channels; }
};

/// Conv -> batchnorm -> LeakyReLU, the repeated encoder unit.
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(const std::string& prefix, const LayerSpec& spec, Rng init);
  Var forward(const Var& x, bool training);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out);

  LayerSpec spec;
  Parameter weight, bias, bn_gamma, bn_beta;
  Tensor bn_mean, bn_var;
  std::string name;
};

/// Transposed mirror of an EncoderBlock.
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(const std::string& prefix, const LayerSpec& spec, Rng init);
  Var forward(const Var& x, int target_h, int target_w, bool training);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out);

  LayerSpec spec;  // the paired encoder spec; weights are independent
  Parameter weight, bias, bn_gamma, bn_beta;
  Tensor bn_mean, bn_var;
  std::string name;
};

struct EncodeResult {
  Var latent;
  std::vector<Var> skips;  // one per block, shallow to deep
};

class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(const std::string& prefix, const std::vector<LayerSpec>& specs, Rng init);
  EncodeResult forward(const Var& mag, bool training);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out);

  std::vector<EncoderBlock> blocks;
};

/// Spatial shape chain of an encoder stack on an (h, w) input: entry i is
/// the input shape (C, H, W) of block i; the final entry is the latent.
std::vector<Shape> encoder_shape_chain(const std::vector<LayerSpec>& specs, int h, int w);

class DecoderStack {
 public:
  DecoderStack() = default;
  DecoderStack(const std::string& prefix, const std::vector<LayerSpec>& specs,
               MaskActivation act, Rng init);
  /// Adds the shape-matched encoder skip (deepest first) to every block
  /// input, mirrors the encoder shape chain back to (C, in_h, in_w), and
  /// applies the mask activation.
  Var forward(const Var& latent, const std::vector<Var>& skips, int in_h, int in_w,
              bool training);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out);

  std::vector<DecoderBlock> blocks;  // deepest first
  MaskActivation activation = MaskActivation::kSigmoid;
};

class BiLstmLayer {
 public:
  BiLstmLayer() = default;
  BiLstmLayer(const std::string& prefix, int input, int hidden, Rng init);
  Var forward(const Var& x);  // (B,T,D) -> (B,T,2H)
  void collect(std::vector<Parameter*>& out);

  int hidden = 0;
  Parameter fw_w_ih, fw_w_hh, fw_b_ih, fw_b_hh;
  Parameter bw_w_ih, bw_w_hh, bw_b_ih, bw_b_hh;
};

/// One dual-path module: bottleneck conv, recurrent passes over frames and
/// bins with residuals, group norm + PReLU, expansion conv, outer residual.
class DprnnModule {
 public:
  DprnnModule() = default;
  DprnnModule(const std::string& prefix, const ModelConfig& cfg, Rng init);
  Var forward(const Var& x, bool training, Rng& stream);
  void collect(std::vector<Parameter*>& out);

  LayerSpec entry_spec, exit_spec;
  Parameter entry_w, entry_b, exit_w, exit_b;
  BiLstmLayer time_lstm, freq_lstm;
  Parameter gn_gamma, gn_beta, prelu_slope;
  int groups = 8;
  double dropout_rate = 0.1;
};

class DprnnBlock {
 public:
  DprnnBlock() = default;
  DprnnBlock(const std::string& prefix, const ModelConfig& cfg, Rng init);
  Var forward(const Var& latent, bool training, Rng& stream);
  void collect(std::vector<Parameter*>& out);

  std::vector<DprnnModule> modules;
};

/// Convex per-channel fusion of N same-shaped tensors: softmax across the
/// inputs of one logit per (input, channel), then a weighted sum.
class AttentionFusion {
 public:
  AttentionFusion() = default;
  AttentionFusion(const std::string& prefix, int inputs, int channels);
  Var fuse(const std::vector<Var>& xs);
  /// Applies the same real weights to both planes.
  std::pair<Var, Var> fuse_complex(const std::vector<std::pair<Var, Var>>& xs);
  void collect(std::vector<Parameter*>& out);

  Parameter logits;  // (N, C)
  int inputs = 2;
};

/// Pointwise MLP over (t,f): [Re_1..Re_C, Im_1..Im_C, f/(F-1)] -> (Re, Im).
class NeuralBeamformer {
 public:
  NeuralBeamformer() = default;
  NeuralBeamformer(const std::string& prefix, int channels, int hidden, double dropout_rate,
                   Rng init);
  std::pair<Var, Var> forward(const Var& re, const Var& im, bool training, Rng& stream);
  void collect(std::vector<Parameter*>& out);

  Parameter w1, b1, w2, b2;
  int channels = 4;
  double dropout_rate = 0.1;
};

struct ForwardResult {
  Var enhanced;        // (1, N)
  Var xe_re, xe_im;    // beamformed spectrogram (1, L, F)
  Var m1, m2, m;       // masks (C, L, F)
  Var xf_re, xf_im;    // first-stage reference signal
  Tensor x_re, x_im;   // input spectrogram (constant)
};

class TwoStageModel {
 public:
  explicit TwoStageModel(ModelConfig cfg, Rng init);

  ForwardResult forward(const AudioSegment& seg, bool training, Rng stream);

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> buffers();  // batchnorm running stats
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  EncoderStack enc1_, enc2_;
  DecoderStack dec1_, dec2_;
  DprnnBlock dprnn_;
  AttentionFusion mask_attn_, sig_attn_;
  NeuralBeamformer beam_;
};

}  // namespace se3d
