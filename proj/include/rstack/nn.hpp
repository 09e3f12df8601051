#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rstack/rng.hpp"
#include "rstack/tape.hpp"
#include "rstack/tensor.hpp"

namespace rstack::nn {

struct LinearLayer {
  Tensor w;  // [out, in]
  Tensor b;  // [out]
  int in = 0;
  int out = 0;
};

struct EmbeddingTable {
  Tensor e;  // [vocab, dim]
  int vocab = 0;
  int dim = 0;
};

// Single LSTM cell. Gate order in the stacked [4h] dimension is fixed as
// (input, forget, cell, output) so checkpoints stay portable.
struct LstmCell {
  Tensor w_ih;  // [4h, in]
  Tensor w_hh;  // [4h, h]
  Tensor b;     // [4h]
  int input = 0;
  int hidden = 0;
};

struct LstmState {
  Var h;
  Var c;
};

Var linear_forward(Tape& tape, LinearLayer& layer, Var x);
Var embed(Tape& tape, EmbeddingTable& table, int token_index);

// c' = f.c + i.g, h' = o.tanh(c'); the returned out is h'.
std::pair<Var, LstmState> lstm_step(Tape& tape, LstmCell& cell, Var x, LstmState state);

// mean_k |predictions[k] - answers[k]|, each prediction a [1] vector
Var l1_loss(Tape& tape, std::span<const Var> predictions, std::span<const double> answers);

struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

int64_t parameter_count(std::span<const NamedParam> params);
void zero_grads(std::span<const NamedParam> params);

// Adam with bias correction. The paper-facing setting is the learning rate;
// the moment and epsilon constants are the usual framework defaults.
struct AdamConfig {
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update over all params; every param must carry a populated gradient.
  // t is incremented once per call.
  void step(std::span<const NamedParam> params);

  int64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<Array> m_;
  std::vector<Array> v_;
};

// Init rule used for every trained tensor: uniform(-k, k), k = 1/sqrt(fan_in).
void init_uniform(Rng& rng, Tensor& t, int fan_in);

LinearLayer make_linear(Rng& rng, int out, int in);
EmbeddingTable make_embedding(Rng& rng, int vocab, int dim);
// forget-gate bias slice starts at +1
LstmCell make_lstm(Rng& rng, int input, int hidden);

// Checkpoint container format: magic "DDRC", u32 version, then one record per
// tensor: u32 name length, name bytes, u32 rank, u64 dims, raw little-endian
// f64 data. Records are read until end of file. Round-trips are bit-exact.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void save_checkpoint(const std::string& path, std::span<const NamedParam> entries);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace rstack::nn
