#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "se3d/trainer.hpp"

using namespace se3d;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int c = 0;
    path = fs::temp_directory_path() /
           ("se3d_trainer_" + std::to_string(::getpid()) + "_" + std::to_string(c++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

ModelConfig toy_model_config() {
  ModelConfig c;
  c.channels = 2;
  c.encoder = {conv_spec(2, 3, 3, 2, 1, 1), conv_spec(3, 4, 2, 3, 2, 2)};
  c.dprnn_modules = 1;
  c.dprnn_channels = 4;
  c.lstm_hidden = 4;
  c.groupnorm_groups = 2;
  c.beam_hidden = 5;
  c.dropout = 0.1;
  c.window = 8;
  c.hop = 4;
  c.segment_seconds = 48.0 / 16000.0;
  return c;
}

// writes a couple of tiny scenes and returns their manifest
Manifest toy_manifest(const TempDir& tmp, const ModelConfig& cfg, int count, uint64_t seed) {
  Manifest m;
  for (int i = 0; i < count; ++i) {
    Rng r(seed + static_cast<uint64_t>(i));
    const int64_t n = cfg.segment_samples();
    AudioSegment clean = synth_speech_like(n, cfg.sample_rate, r);
    AudioSegment noise = synth_noise(n, cfg.sample_rate, r);
    SceneSpec spec;
    spec.seed = seed + static_cast<uint64_t>(i);
    spec.channels = cfg.channels;
    spec.rir_length = 32;
    spec.rt60 = 0.05;
    spec.taps = 6;
    spec.snr_db = 6.0;
    spec.delays = std::vector<int>(static_cast<size_t>(cfg.channels), 0);
    for (int c = 0; c < cfg.channels; ++c) spec.delays[static_cast<size_t>(c)] = c;
    auto [noisy, target] = make_scene(clean, noise, spec);
    ManifestEntry e;
    e.noisy_path = tmp.file("s" + std::to_string(i) + "_noisy.wav");
    e.clean_path = tmp.file("s" + std::to_string(i) + "_clean.wav");
    e.samples = n;
    e.snr_db = spec.snr_db;
    e.seed = spec.seed;
    write_wav(e.noisy_path, noisy);
    write_wav(e.clean_path, target);
    m.push_back(std::move(e));
  }
  return m;
}

}  // namespace

TEST_CASE("adam closed-form behavior") {
  SUBCASE("zero gradient changes nothing") {
    Parameter p("p", Tensor(Shape{3}, 1.5));
    Adam adam({&p}, AdamConfig{});
    p.zero_grad();
    adam.step();
    for (int i = 0; i < 3; ++i) CHECK(p.value()[i] == 1.5);
  }

  SUBCASE("single scalar step matches the hand computation") {
    Parameter p("p", Tensor::scalar(1.0));
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam adam({&p}, cfg);
    p.grad()[0] = 0.5;
    adam.step();
    // m=0.05, v=2.5e-4; mhat=0.5, vhat=0.25; step = 0.1*0.5/(0.5+1e-8)
    const double want = 1.0 - 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
    CHECK(p.value()[0] == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("constant gradient walks at about -lr per step") {
    Parameter p("p", Tensor::scalar(0.0));
    AdamConfig cfg;
    cfg.lr = 0.01;
    Adam adam({&p}, cfg);
    const int k = 100;
    for (int i = 0; i < k; ++i) {
      p.zero_grad();
      p.grad()[0] = 1.0;
      adam.step();
    }
    // with g constant, mhat/sqrt(vhat) == 1 at every step
    CHECK(p.value()[0] == doctest::Approx(-cfg.lr * k).epsilon(1e-6));
  }

  SUBCASE("lr zero changes no parameter") {
    Rng r(80);
    Parameter p("p", Tensor(Shape{4}));
    for (int i = 0; i < 4; ++i) p.value()[i] = r.gaussian();
    Tensor before = p.value();
    AdamConfig cfg;
    cfg.lr = 0.0;
    Adam adam({&p}, cfg);
    p.grad()[0] = 1.0;
    p.grad()[1] = -2.0;
    adam.step();
    for (int i = 0; i < 4; ++i) CHECK(p.value()[i] == before[i]);
  }
}

TEST_CASE("checkpoint round-trip and rejection paths") {
  TempDir tmp;
  ModelConfig cfg = toy_model_config();
  TwoStageModel model(cfg, Rng(5));
  Adam adam(model.parameters(), AdamConfig{});
  for (Parameter* p : model.parameters()) quantize_f32_inplace(p->value());
  for (auto& [name, buf] : model.buffers()) quantize_f32_inplace(*buf);

  Checkpoint ck = snapshot(model, &adam, 3, 0.25, 42);
  save_checkpoint(tmp.file("m.ckpt"), ck);
  Checkpoint back = load_checkpoint(tmp.file("m.ckpt"));

  SUBCASE("all fields survive bit-exact") {
    CHECK(back.epoch == 3);
    CHECK(back.best_val_loss == 0.25);
    CHECK(back.seed == 42);
    REQUIRE(back.params.size() == ck.params.size());
    for (size_t i = 0; i < ck.params.size(); ++i) {
      CHECK(back.params[i].first == ck.params[i].first);
      for (int64_t j = 0; j < ck.params[i].second.numel(); ++j)
        CHECK(back.params[i].second[j] == ck.params[i].second[j]);
    }
    REQUIRE(back.opt_m.size() == ck.opt_m.size());
    CHECK(back.opt_step == ck.opt_step);
    // and a fresh model accepts it
    TwoStageModel other(cfg, Rng(99));
    apply_checkpoint(other, back);
    auto pa = model.parameters();
    auto pb = other.parameters();
    for (size_t i = 0; i < pa.size(); ++i)
      for (int64_t j = 0; j < pa[i]->value().numel(); ++j)
        CHECK(pa[i]->value()[j] == pb[i]->value()[j]);
  }

  SUBCASE("save twice produces identical bytes") {
    save_checkpoint(tmp.file("m2.ckpt"), ck);
    std::ifstream a(tmp.file("m.ckpt"), std::ios::binary);
    std::ifstream b(tmp.file("m2.ckpt"), std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
  }

  SUBCASE("corrupted magic is rejected") {
    std::fstream f(tmp.file("m.ckpt"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("m.ckpt")),
                         doctest::Contains("magic"), std::runtime_error);
  }

  SUBCASE("shape mismatch against the config is rejected") {
    Checkpoint bad = ck;
    bad.params[0].second = Tensor(Shape{1, 1, 1, 1});
    save_checkpoint(tmp.file("bad.ckpt"), bad);
    CHECK_THROWS(load_checkpoint(tmp.file("bad.ckpt")));
  }

  SUBCASE("version mismatch is rejected") {
    // patch the version field (bytes 4..7)
    std::fstream f(tmp.file("m.ckpt"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    uint32_t v = 999;
    f.write(reinterpret_cast<const char*>(&v), 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("m.ckpt")),
                         doctest::Contains("version"), std::runtime_error);
  }
}

TEST_CASE("early stopping with frozen parameters stops after patience runs out") {
  TempDir tmp;
  ModelConfig mcfg = toy_model_config();
  Manifest items = toy_manifest(tmp, mcfg, 2, 500);
  TrainConfig tcfg;
  tcfg.batch = 2;
  tcfg.adam.lr = 0.0;  // no updates: validation loss can never improve
  tcfg.patience = 1;
  tcfg.max_epochs = 50;
  tcfg.seed = 7;
  // zero every parameter so batchnorm statistics cannot drift the
  // validation loss between epochs (all activations are exactly zero)
  TwoStageModel frozen(mcfg, Rng(tcfg.seed));
  for (Parameter* p : frozen.parameters()) fill_inplace(p->value(), 0.0);
  Checkpoint start = snapshot(frozen, nullptr, 0, 1e30, tcfg.seed);
  save_checkpoint(tmp.file("frozen.ckpt"), start);
  Checkpoint resume = load_checkpoint(tmp.file("frozen.ckpt"));
  TrainResult res = train(items, items, mcfg, tcfg, "", &resume);
  CHECK(res.epochs_run == 2);  // epoch 1 sets the best, epoch 2 exhausts patience
}

TEST_CASE("validation never mutates parameters or buffers") {
  TempDir tmp;
  ModelConfig mcfg = toy_model_config();
  Manifest items = toy_manifest(tmp, mcfg, 2, 600);
  std::vector<TrainItem> loaded = load_items(items, mcfg);
  TwoStageModel model(mcfg, Rng(8));
  std::vector<Tensor> before;
  for (Parameter* p : model.parameters()) before.push_back(p->value());
  std::vector<Tensor> buf_before;
  for (auto& [name, buf] : model.buffers()) buf_before.push_back(*buf);
  {
    NoGradGuard ng;
    for (auto& item : loaded) model.forward(item.noisy, /*training=*/false, Rng(1));
  }
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i)
    for (int64_t j = 0; j < before[i].numel(); ++j)
      CHECK(params[i]->value()[j] == before[i][j]);
  auto buffers = model.buffers();
  for (size_t i = 0; i < buffers.size(); ++i)
    for (int64_t j = 0; j < buf_before[i].numel(); ++j)
      CHECK((*buffers[i].second)[j] == buf_before[i][j]);
}

TEST_CASE("training runs, logs and improves on a tiny problem") {
  TempDir tmp;
  ModelConfig mcfg = toy_model_config();
  Manifest items = toy_manifest(tmp, mcfg, 3, 700);
  TrainConfig tcfg;
  tcfg.batch = 3;
  tcfg.adam.lr = 2e-3;
  tcfg.patience = 50;
  tcfg.max_epochs = 30;
  tcfg.seed = 11;
  TrainResult res = train(items, items, mcfg, tcfg, tmp.file("run"));
  REQUIRE(res.epochs_run >= 1);
  CHECK(res.log.back().train_loss < res.log.front().train_loss);
  CHECK(fs::exists(tmp.file("run") + "/best.ckpt"));
  CHECK(fs::exists(tmp.file("run") + "/last.ckpt"));
  CHECK(fs::exists(tmp.file("run") + "/train_log.tsv"));
}

TEST_CASE("resume from a checkpoint reproduces the next epoch bit-identically") {
  TempDir tmp;
  ModelConfig mcfg = toy_model_config();
  Manifest items = toy_manifest(tmp, mcfg, 2, 800);
  TrainConfig tcfg;
  tcfg.batch = 2;
  tcfg.adam.lr = 1e-3;
  tcfg.patience = 100;
  tcfg.seed = 13;

  // run A: two epochs straight through
  TrainConfig two = tcfg;
  two.max_epochs = 2;
  TrainResult full = train(items, items, mcfg, two, tmp.file("a"));
  REQUIRE(full.epochs_run == 2);

  // run B: one epoch, checkpoint, then resume for the second
  TrainConfig one = tcfg;
  one.max_epochs = 1;
  TrainResult first = train(items, items, mcfg, one, tmp.file("b"));
  REQUIRE(first.epochs_run == 1);
  Checkpoint mid = load_checkpoint(tmp.file("b") + "/last.ckpt");
  TrainConfig second = tcfg;
  second.max_epochs = 2;
  TrainResult resumed = train(items, items, mcfg, second, tmp.file("b2"), &mid);
  REQUIRE(resumed.epochs_run == 1);

  CHECK(resumed.log.back().train_loss == full.log.back().train_loss);
  CHECK(resumed.log.back().val_loss == full.log.back().val_loss);
}

TEST_CASE("non-finite loss aborts with a diagnostic naming a tensor") {
  TempDir tmp;
  ModelConfig mcfg = toy_model_config();
  Manifest items = toy_manifest(tmp, mcfg, 1, 900);
  TrainConfig tcfg;
  tcfg.batch = 1;
  tcfg.max_epochs = 1;
  tcfg.seed = 17;

  // poison one weight so the first forward produces NaN
  std::vector<TrainItem> loaded = load_items(items, mcfg);
  TwoStageModel model(mcfg, Rng(tcfg.seed));
  model.parameters()[0]->value()[0] = std::numeric_limits<double>::quiet_NaN();
  Checkpoint poisoned = snapshot(model, nullptr, 0, 1e30, tcfg.seed);
  save_checkpoint(tmp.file("poison.ckpt"), poisoned);
  Checkpoint resume = load_checkpoint(tmp.file("poison.ckpt"));
  CHECK_THROWS_WITH_AS(train(items, items, mcfg, tcfg, "", &resume),
                       doctest::Contains("non-finite"), std::runtime_error);
}
