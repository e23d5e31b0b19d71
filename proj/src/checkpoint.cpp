#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "se3d/trainer.hpp"

namespace se3d {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'E', '3', 'D'};
constexpr uint32_t kVersion = 1;

json config_to_json(const ModelConfig& c) {
  json j;
  j["channels"] = c.channels;
  json enc = json::array();
  for (const auto& s : c.encoder)
    enc.push_back({{"in", s.in_channels},
                   {"out", s.out_channels},
                   {"kernel", {s.kernel_h, s.kernel_w}},
                   {"stride", {s.stride_h, s.stride_w}}});
  j["encoder"] = enc;
  j["dprnn_modules"] = c.dprnn_modules;
  j["dprnn_channels"] = c.dprnn_channels;
  j["lstm_hidden"] = c.lstm_hidden;
  j["groupnorm_groups"] = c.groupnorm_groups;
  j["attention_inputs"] = c.attention_inputs;
  j["beam_hidden"] = c.beam_hidden;
  j["dropout"] = c.dropout;
  j["mask_activation"] = c.mask_activation == MaskActivation::kSigmoid ? "sigmoid" : "linear";
  j["window"] = c.window;
  j["hop"] = c.hop;
  j["sample_rate"] = c.sample_rate;
  j["segment_seconds"] = c.segment_seconds;
  j["init"] = "fanin_uniform";
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<int>();
  c.encoder.clear();
  for (const auto& e : j.at("encoder"))
    c.encoder.push_back(conv_spec(e.at("in").get<int>(), e.at("out").get<int>(),
                                  e.at("kernel")[0].get<int>(), e.at("kernel")[1].get<int>(),
                                  e.at("stride")[0].get<int>(), e.at("stride")[1].get<int>()));
  c.dprnn_modules = j.at("dprnn_modules").get<int>();
  c.dprnn_channels = j.at("dprnn_channels").get<int>();
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.groupnorm_groups = j.at("groupnorm_groups").get<int>();
  c.attention_inputs = j.at("attention_inputs").get<int>();
  c.beam_hidden = j.at("beam_hidden").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.mask_activation = j.at("mask_activation").get<std::string>() == "linear"
                          ? MaskActivation::kLinear
                          : MaskActivation::kSigmoid;
  c.window = j.at("window").get<int>();
  c.hop = j.at("hop").get<int>();
  c.sample_rate = j.at("sample_rate").get<int>();
  c.segment_seconds = j.at("segment_seconds").get<double>();
  return c;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_tensor_f32(std::ostream& out, const Tensor& t) {
  put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
  for (int d = 0; d < t.rank(); ++d) put<uint32_t>(out, static_cast<uint32_t>(t.dim(d)));
  for (int64_t i = 0; i < t.numel(); ++i) put<float>(out, static_cast<float>(t[i]));
}

Tensor get_tensor_f32(std::istream& in) {
  const uint32_t rank = get<uint32_t>(in);
  if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad tensor rank");
  Shape shape(rank);
  for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(get<uint32_t>(in));
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(get<float>(in));
  return t;
}

void put_string(std::ostream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const uint32_t len = get<uint32_t>(in);
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot create " + path);
  out.write(kMagic, 4);
  put<uint32_t>(out, kVersion);
  const std::string cfg = config_to_json(ckpt.config).dump();
  put<uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  put<uint32_t>(out, static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_string(out, name);
    put_tensor_f32(out, t);
  }
  put<uint32_t>(out, static_cast<uint32_t>(ckpt.buffers.size()));
  for (const auto& [name, t] : ckpt.buffers) {
    put_string(out, name);
    put_tensor_f32(out, t);
  }
  put<uint8_t>(out, ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    put<uint64_t>(out, static_cast<uint64_t>(ckpt.opt_step));
    for (const Tensor& t : ckpt.opt_m) put_tensor_f32(out, t);
    for (const Tensor& t : ckpt.opt_v) put_tensor_f32(out, t);
  }
  put<uint32_t>(out, ckpt.epoch);
  put<double>(out, ckpt.best_val_loss);
  put<uint64_t>(out, ckpt.seed);
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic bytes in " + path);
  Checkpoint c;
  c.version = get<uint32_t>(in);
  if (c.version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(c.version));
  const uint64_t cfg_len = get<uint64_t>(in);
  if (cfg_len > (1ull << 24)) throw std::runtime_error("checkpoint: implausible config length");
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw std::runtime_error("checkpoint: truncated config record");
  c.config = config_from_json(json::parse(cfg));

  const uint32_t n_params = get<uint32_t>(in);
  c.params.reserve(n_params);
  for (uint32_t i = 0; i < n_params; ++i) {
    std::string name = get_string(in);
    c.params.emplace_back(std::move(name), get_tensor_f32(in));
  }
  const uint32_t n_buffers = get<uint32_t>(in);
  c.buffers.reserve(n_buffers);
  for (uint32_t i = 0; i < n_buffers; ++i) {
    std::string name = get_string(in);
    c.buffers.emplace_back(std::move(name), get_tensor_f32(in));
  }
  c.has_optimizer = get<uint8_t>(in) != 0;
  if (c.has_optimizer) {
    c.opt_step = static_cast<int64_t>(get<uint64_t>(in));
    c.opt_m.reserve(n_params);
    c.opt_v.reserve(n_params);
    for (uint32_t i = 0; i < n_params; ++i) c.opt_m.push_back(get_tensor_f32(in));
    for (uint32_t i = 0; i < n_params; ++i) c.opt_v.push_back(get_tensor_f32(in));
  }
  c.epoch = get<uint32_t>(in);
  c.best_val_loss = get<double>(in);
  c.seed = get<uint64_t>(in);

  // cross-check stored tensors against the config
  TwoStageModel probe(c.config, Rng(0));
  auto params = probe.parameters();
  if (params.size() != c.params.size())
    throw std::runtime_error("checkpoint: parameter table does not match config");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name() != c.params[i].first)
      throw std::runtime_error("checkpoint: unexpected parameter " + c.params[i].first);
    if (!params[i]->value().same_shape(c.params[i].second))
      throw std::runtime_error("checkpoint: shape mismatch for " + c.params[i].first +
                               " (stored " + shape_str(c.params[i].second.shape()) +
                               ", config implies " + shape_str(params[i]->shape()) + ")");
  }
  return c;
}

}  // namespace se3d
