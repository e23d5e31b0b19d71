#include "se3d/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "se3d/ops.hpp"

namespace se3d {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i]->value();
    const Tensor& grad = params_[i]->grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < value.numel(); ++j) {
      const double g = grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::restore_state(int64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw std::invalid_argument("adam: restored state size mismatch");
  for (size_t i = 0; i < params_.size(); ++i)
    if (!m[i].same_shape(params_[i]->value()) || !v[i].same_shape(params_[i]->value()))
      throw std::invalid_argument("adam: restored moment shape mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void Adam::quantize_state_f32() {
  for (auto& t : m_) quantize_f32_inplace(t);
  for (auto& t : v_) quantize_f32_inplace(t);
}

// ---------------------------------------------------------------------------

Checkpoint snapshot(TwoStageModel& model, const Adam* opt, uint32_t epoch, double best_val,
                    uint64_t seed) {
  Checkpoint c;
  c.config = model.config();
  for (Parameter* p : model.parameters()) c.params.emplace_back(p->name(), p->value());
  for (auto& [name, buf] : model.buffers()) c.buffers.emplace_back(name, *buf);
  if (opt) {
    c.has_optimizer = true;
    c.opt_step = opt->step_count();
    c.opt_m = opt->first_moments();
    c.opt_v = opt->second_moments();
  }
  c.epoch = epoch;
  c.best_val_loss = best_val;
  c.seed = seed;
  return c;
}

void apply_checkpoint(TwoStageModel& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  if (params.size() != ckpt.params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (" +
                             std::to_string(ckpt.params.size()) + " stored, " +
                             std::to_string(params.size()) + " in model)");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = ckpt.params[i];
    if (params[i]->name() != name)
      throw std::runtime_error("checkpoint: parameter name mismatch: " + name + " vs " +
                               params[i]->name());
    if (!params[i]->value().same_shape(value))
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": stored " +
                               shape_str(value.shape()) + ", model wants " +
                               shape_str(params[i]->shape()));
    params[i]->value() = value;
  }
  auto buffers = model.buffers();
  if (buffers.size() != ckpt.buffers.size())
    throw std::runtime_error("checkpoint: buffer count mismatch");
  for (size_t i = 0; i < buffers.size(); ++i) {
    const auto& [name, value] = ckpt.buffers[i];
    if (buffers[i].first != name)
      throw std::runtime_error("checkpoint: buffer name mismatch: " + name);
    if (!buffers[i].second->same_shape(value))
      throw std::runtime_error("checkpoint: buffer shape mismatch for " + name);
    *buffers[i].second = value;
  }
}

// ---------------------------------------------------------------------------

std::vector<TrainItem> load_items(const Manifest& manifest, const ModelConfig& cfg) {
  std::vector<TrainItem> items;
  for (const auto& entry : manifest) {
    AudioSegment noisy = read_wav(entry.noisy_path);
    AudioSegment clean = read_wav(entry.clean_path);
    if (noisy.rate != cfg.sample_rate || clean.rate != cfg.sample_rate)
      throw std::runtime_error("train: sample rate mismatch for " + entry.noisy_path);
    if (noisy.samples() != clean.samples())
      throw std::runtime_error("train: clean/noisy length mismatch for " + entry.noisy_path);
    auto noisy_segs = segment(noisy, cfg.segment_seconds);
    auto clean_segs = segment(clean, cfg.segment_seconds);
    for (size_t s = 0; s < noisy_segs.size(); ++s) {
      TrainItem item;
      item.noisy = std::move(noisy_segs[s]);
      item.clean = clean_segs[s].data;
      item.clean_mag = magnitude(stft(clean_segs[s], cfg.window, cfg.hop));
      items.push_back(std::move(item));
    }
  }
  return items;
}

namespace {

double evaluate(TwoStageModel& model, std::vector<TrainItem>& items, const LossConfig& loss_cfg,
                uint64_t seed) {
  NoGradGuard ng;
  double total = 0.0;
  for (auto& item : items) {
    ForwardResult fwd = model.forward(item.noisy, /*training=*/false, Rng(seed).split("eval"));
    Var est_mag = hypot_v(fwd.xe_re, fwd.xe_im);
    Var loss = combined_loss(item.clean_mag, est_mag, item.clean, fwd.enhanced, loss_cfg);
    total += loss.value()[0];
  }
  return total / static_cast<double>(items.size());
}

void clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (Parameter* p : params) sq += dot(p->grad(), p->grad());
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (Parameter* p : params) scale_inplace(p->grad(), scale);
}

void quantize_training_state(TwoStageModel& model, Adam& adam) {
  for (Parameter* p : model.parameters()) quantize_f32_inplace(p->value());
  for (auto& [name, buf] : model.buffers()) quantize_f32_inplace(*buf);
  adam.quantize_state_f32();
}

}  // namespace

TrainResult train(const Manifest& train_manifest, const Manifest& val_manifest,
                  const ModelConfig& mcfg, const TrainConfig& tcfg, const std::string& out_dir,
                  const Checkpoint* resume) {
  if (train_manifest.empty()) throw std::invalid_argument("train: empty training manifest");
  if (val_manifest.empty()) throw std::invalid_argument("train: empty validation manifest");
  tcfg.loss.validate();
  if (tcfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (tcfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");

  std::vector<TrainItem> train_items = load_items(train_manifest, mcfg);
  std::vector<TrainItem> val_items = load_items(val_manifest, mcfg);

  Rng root(tcfg.seed);
  TwoStageModel model(mcfg, root.split("init"));
  Adam adam(model.parameters(), tcfg.adam);
  uint32_t start_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  if (resume) {
    apply_checkpoint(model, *resume);
    if (resume->has_optimizer) adam.restore_state(resume->opt_step, resume->opt_m, resume->opt_v);
    start_epoch = resume->epoch;
    best_val = resume->best_val_loss;
  } else {
    // training state is f32-exact from the start so checkpoints round-trip
    quantize_training_state(model, adam);
  }

  const bool emit = !out_dir.empty();
  if (emit) std::filesystem::create_directories(out_dir);
  std::ofstream log_file;
  if (emit)
    log_file.open(out_dir + "/train_log.tsv",
                  resume ? std::ios::app : std::ios::trunc);

  TrainResult result;
  Checkpoint best = snapshot(model, &adam, start_epoch, best_val, tcfg.seed);
  int patience_left = tcfg.patience;
  const std::vector<Parameter*> params = model.parameters();

  for (int epoch = static_cast<int>(start_epoch); epoch < tcfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<size_t> order(train_items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = root.split("shuffle").split(static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t pos = 0; pos < order.size();) {
      const size_t batch_n = std::min<size_t>(static_cast<size_t>(tcfg.batch),
                                              order.size() - pos);
      adam.zero_grad();
      for (size_t k = 0; k < batch_n; ++k, ++pos) {
        TrainItem& item = train_items[order[pos]];
        Rng stream = root.split("dropout")
                         .split(static_cast<uint64_t>(epoch))
                         .split(static_cast<uint64_t>(order[pos]));
        ForwardResult fwd = model.forward(item.noisy, /*training=*/true, stream);
        Var est_mag = hypot_v(fwd.xe_re, fwd.xe_im);
        Var loss = combined_loss(item.clean_mag, est_mag, item.clean, fwd.enhanced, tcfg.loss);
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) {
          const std::string bad = first_nonfinite_label(loss);
          throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", item " + std::to_string(order[pos]) +
                                   "; first non-finite tensor: " + bad);
        }
        loss_sum += lv;
        backward(mul_scalar(loss, 1.0 / static_cast<double>(batch_n)));
      }
      if (tcfg.clip_norm > 0.0) clip_gradients(params, tcfg.clip_norm);
      adam.step();
      quantize_training_state(model, adam);
    }
    const double train_loss = loss_sum / static_cast<double>(train_items.size());
    const double val_loss = evaluate(model, val_items, tcfg.loss, tcfg.seed);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EpochLog line{epoch, train_loss, val_loss, tcfg.adam.lr, seconds};
    result.log.push_back(line);
    ++result.epochs_run;
    if (log_file)
      log_file << epoch << '\t' << train_loss << '\t' << val_loss << '\t' << tcfg.adam.lr << '\t'
               << seconds << '\n'
               << std::flush;

    if (val_loss < best_val) {
      best_val = val_loss;
      patience_left = tcfg.patience;
      best = snapshot(model, &adam, static_cast<uint32_t>(epoch + 1), best_val, tcfg.seed);
      if (emit) save_checkpoint(out_dir + "/best.ckpt", best);
    } else {
      --patience_left;
    }
    if (emit) {
      Checkpoint last =
          snapshot(model, &adam, static_cast<uint32_t>(epoch + 1), best_val, tcfg.seed);
      save_checkpoint(out_dir + "/last.ckpt", last);
    }
    if (patience_left <= 0) break;
  }

  result.best = std::move(best);
  return result;
}

}  // namespace se3d
