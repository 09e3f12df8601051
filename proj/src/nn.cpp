#include "rstack/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rstack/errors.hpp"

namespace rstack::nn {

Var linear_forward(Tape& tape, LinearLayer& layer, Var x) {
  return add(matmul(tape.leaf(layer.w), x), tape.leaf(layer.b));
}

Var embed(Tape& tape, EmbeddingTable& table, int token_index) {
  return embedding_row(tape.leaf(table.e), token_index);
}

std::pair<Var, LstmState> lstm_step(Tape& tape, LstmCell& cell, Var x, LstmState state) {
  const int h = cell.hidden;
  Var z = add(add(matmul(tape.leaf(cell.w_ih), x), matmul(tape.leaf(cell.w_hh), state.h)),
              tape.leaf(cell.b));
  Var i = sigmoid(slice(z, 0, h));
  Var f = sigmoid(slice(z, h, h));
  Var g = tanh(slice(z, 2 * h, h));
  Var o = sigmoid(slice(z, 3 * h, h));
  Var c_next = add(mul(f, state.c), mul(i, g));
  Var h_next = mul(o, tanh(c_next));
  return {h_next, LstmState{h_next, c_next}};
}

Var l1_loss(Tape& tape, std::span<const Var> predictions, std::span<const double> answers) {
  if (predictions.size() != answers.size()) {
    throw ContractError("l1_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(answers.size()) + " answers");
  }
  Var pred = concat(predictions);
  Array target(static_cast<Eigen::Index>(answers.size()));
  for (size_t i = 0; i < answers.size(); ++i) target[static_cast<Eigen::Index>(i)] = answers[i];
  Var ans = tape.constant(target, {static_cast<int>(answers.size())});
  return mean(abs(sub(pred, ans)));
}

int64_t parameter_count(std::span<const NamedParam> params) {
  int64_t n = 0;
  for (const NamedParam& p : params) n += p.tensor->numel();
  return n;
}

void zero_grads(std::span<const NamedParam> params) {
  for (const NamedParam& p : params) p.tensor->zero_grad();
}

void Adam::step(std::span<const NamedParam> params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = Array::Zero(params[i].tensor->numel());
      v_[i] = Array::Zero(params[i].tensor->numel());
    }
  }
  if (m_.size() != params.size()) throw ContractError("adam: parameter list changed size");
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Scalar>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    if (!p.has_grad()) {
      throw ContractError("adam: missing gradient for " + params[i].name);
    }
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad * p.grad;
    p.data -= cfg_.lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + cfg_.eps);
  }
}

void init_uniform(Rng& rng, Tensor& t, int fan_in) {
  const Scalar k = 1.0 / std::sqrt(static_cast<Scalar>(fan_in));
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = rng.next_uniform(k);
}

LinearLayer make_linear(Rng& rng, int out, int in) {
  LinearLayer layer;
  layer.in = in;
  layer.out = out;
  layer.w = Tensor::zeros({out, in});
  layer.b = Tensor::zeros({out});
  init_uniform(rng, layer.w, in);
  init_uniform(rng, layer.b, in);
  return layer;
}

EmbeddingTable make_embedding(Rng& rng, int vocab, int dim) {
  EmbeddingTable table;
  table.vocab = vocab;
  table.dim = dim;
  table.e = Tensor::zeros({vocab, dim});
  init_uniform(rng, table.e, dim);
  return table;
}

LstmCell make_lstm(Rng& rng, int input, int hidden) {
  LstmCell cell;
  cell.input = input;
  cell.hidden = hidden;
  cell.w_ih = Tensor::zeros({4 * hidden, input});
  cell.w_hh = Tensor::zeros({4 * hidden, hidden});
  cell.b = Tensor::zeros({4 * hidden});
  init_uniform(rng, cell.w_ih, input);
  init_uniform(rng, cell.w_hh, hidden);
  init_uniform(rng, cell.b, hidden);
  cell.b.data.segment(hidden, hidden) += 1.0;  // forget gate
  return cell;
}

namespace {

constexpr char kMagic[4] = {'D', 'D', 'R', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return is.gcount() == sizeof(T);
}

}  // namespace

void save_checkpoint(const std::string& path, std::span<const NamedParam> entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  for (const NamedParam& e : entries) {
    const Tensor& t = *e.tensor;
    write_pod(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(Scalar)));
  }
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  uint32_t version = 0;
  if (!read_pod(is, version) || version != kVersion) {
    throw DataError("checkpoint: unsupported version in " + path);
  }
  std::vector<NamedTensor> out;
  for (;;) {
    uint32_t name_len = 0;
    if (!read_pod(is, name_len)) break;  // clean EOF
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t rank = 0;
    if (is.gcount() != name_len || !read_pod(is, rank)) {
      throw DataError("checkpoint: truncated record in " + path);
    }
    std::vector<int> shape(rank);
    Eigen::Index numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint64_t d = 0;
      if (!read_pod(is, d)) throw DataError("checkpoint: truncated dims in " + path);
      shape[i] = static_cast<int>(d);
      numel *= static_cast<Eigen::Index>(d);
    }
    Array data(numel);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(Scalar)));
    if (is.gcount() != static_cast<std::streamsize>(numel * sizeof(Scalar))) {
      throw DataError("checkpoint: truncated data for '" + name + "' in " + path);
    }
    out.push_back(NamedTensor{std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

}  // namespace rstack::nn
