#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "se3d/data.hpp"
#include "se3d/loss.hpp"
#include "se3d/model.hpp"

namespace se3d {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Standard Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  void zero_grad();

  int64_t step_count() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore_state(int64_t t, std::vector<Tensor> m, std::vector<Tensor> v);
  void quantize_state_f32();
  AdamConfig& config() { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

struct TrainConfig {
  int batch = 12;
  AdamConfig adam;   // lr 0.001 by default
  int patience = 10;
  int max_epochs = 100;
  uint64_t seed = 1;
  LossConfig loss;
  double clip_norm = 0.0;  // 0 disables clipping
};

struct Checkpoint {
  uint32_t version = 1;
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> buffers;
  bool has_optimizer = false;
  int64_t opt_step = 0;
  std::vector<Tensor> opt_m, opt_v;  // parallel to params
  uint32_t epoch = 0;
  double best_val_loss = 0.0;
  uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot(TwoStageModel& model, const Adam* opt, uint32_t epoch, double best_val,
                    uint64_t seed);
/// Loads parameter and buffer tensors into a model built from ckpt.config.
/// Every name must match exactly and shapes must agree.
void apply_checkpoint(TwoStageModel& model, const Checkpoint& ckpt);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  int epochs_run = 0;
};

/// One segment of one scene, with the loss targets precomputed.
struct TrainItem {
  AudioSegment noisy;
  Tensor clean;      // (1, N)
  Tensor clean_mag;  // (1, L, F)
};

std::vector<TrainItem> load_items(const Manifest& manifest, const ModelConfig& cfg);

/// Epoch loop with per-batch gradient accumulation, validation-based early
/// stopping, and f32-exact state so checkpoints resume bit-identically.
/// Writes best.ckpt / last.ckpt / train_log.tsv under out_dir when set.
TrainResult train(const Manifest& train_manifest, const Manifest& val_manifest,
                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::string& out_dir = "", const Checkpoint* resume = nullptr);

}  // namespace se3d
