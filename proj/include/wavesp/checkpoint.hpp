#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "wavesp/model.hpp"
#include "wavesp/optimizer.hpp"

namespace wavesp {

constexpr char kCheckpointMagic[8] = {'W', 'S', 'P', 'N', 'E', 'T', '1', '\n'};

// Versioned binary snapshot: config echo, every trainable tensor by name,
// Adam moments, and the best-dev selection bookkeeping. Backbone weights are
// reconstructed from the seed in the config echo, not stored.
struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;
  std::vector<std::vector<double>> adam_m, adam_v;
  int64_t adam_step = 0;
  double best_dev_eer = 1.0;
  int best_epoch = 0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

namespace detail {

inline void put_u64(std::ofstream& f, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  f.write(b, 8);
}

inline uint64_t take_u64(std::ifstream& f) {
  unsigned char b[8];
  f.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ofstream& f, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(f, v);
}

inline double take_f64(std::ifstream& f) {
  uint64_t v = take_u64(f);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline void put_doubles(std::ofstream& f, const std::vector<double>& v) {
  put_u64(f, v.size());
  for (double d : v) put_f64(f, d);
}

inline std::vector<double> take_doubles(std::ifstream& f) {
  std::vector<double> v(take_u64(f));
  for (double& d : v) d = take_f64(f);
  return v;
}

inline void put_string(std::ofstream& f, const std::string& s) {
  put_u64(f, s.size());
  f.write(s.data(), static_cast<long>(s.size()));
}

inline std::string take_string(std::ifstream& f) {
  std::string s(take_u64(f), '\0');
  f.read(s.data(), static_cast<long>(s.size()));
  return s;
}

}  // namespace detail

inline void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_string(f, config_text);
  detail::put_u64(f, tensors.size());
  for (const auto& [name, data] : tensors) {
    detail::put_string(f, name);
    detail::put_doubles(f, data);
  }
  detail::put_u64(f, adam_m.size());
  for (size_t i = 0; i < adam_m.size(); ++i) {
    detail::put_doubles(f, adam_m[i]);
    detail::put_doubles(f, adam_v[i]);
  }
  detail::put_u64(f, static_cast<uint64_t>(adam_step));
  detail::put_f64(f, best_dev_eer);
  detail::put_u64(f, static_cast<uint64_t>(best_epoch));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a WSPNET1 checkpoint: " + path);
  Checkpoint ck;
  ck.config_text = detail::take_string(f);
  const uint64_t nt = detail::take_u64(f);
  for (uint64_t i = 0; i < nt; ++i) {
    std::string name = detail::take_string(f);
    ck.tensors.emplace_back(std::move(name), detail::take_doubles(f));
  }
  const uint64_t ns = detail::take_u64(f);
  for (uint64_t i = 0; i < ns; ++i) {
    ck.adam_m.push_back(detail::take_doubles(f));
    ck.adam_v.push_back(detail::take_doubles(f));
  }
  ck.adam_step = static_cast<int64_t>(detail::take_u64(f));
  ck.best_dev_eer = detail::take_f64(f);
  ck.best_epoch = static_cast<int>(detail::take_u64(f));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return ck;
}

// Snapshot of the current trainable state (and optionally optimizer moments).
inline Checkpoint make_checkpoint(const WaveSPNet& net, const Adam* adam,
                                  double best_dev_eer, int best_epoch) {
  Checkpoint ck;
  ck.config_text = serialize_config(net.cfg);
  for (const auto& [name, t] : named_trainable(net))
    ck.tensors.emplace_back(name, t.value());
  if (adam) {
    ck.adam_m = adam->moments_m();
    ck.adam_v = adam->moments_v();
    ck.adam_step = adam->step_count();
  }
  ck.best_dev_eer = best_dev_eer;
  ck.best_epoch = best_epoch;
  return ck;
}

// Rebuilds the model described by the checkpoint and restores every saved
// tensor into it.
inline WaveSPNet restore_model(const Checkpoint& ck) {
  WaveSPNet net = WaveSPNet::build(parse_config(ck.config_text));
  auto named = named_trainable(net);
  check_arg(named.size() == ck.tensors.size(),
            "checkpoint: tensor count mismatch (" + std::to_string(ck.tensors.size()) +
                " stored, model has " + std::to_string(named.size()) + ")");
  for (size_t i = 0; i < named.size(); ++i) {
    auto& [name, t] = named[i];
    const auto& [ck_name, data] = ck.tensors[i];
    check_arg(name == ck_name, "checkpoint: tensor order mismatch at '" + ck_name +
                                   "', expected '" + name + "'");
    check_arg(t.size() == data.size(), "checkpoint: size mismatch for '" + name + "'");
    Tensor dst = t;
    dst.value() = data;
  }
  return net;
}

}  // namespace wavesp
