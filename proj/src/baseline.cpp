#include "rstack/baseline.hpp"

#include "rstack/errors.hpp"

namespace rstack {

namespace {

const Tensor& find_entry(const std::vector<nn::NamedTensor>& entries, const std::string& name) {
  for (const nn::NamedTensor& e : entries) {
    if (e.name == name) return e.tensor;
  }
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

}  // namespace

LstmBaseline LstmBaseline::make(uint64_t seed, int hidden, int layers) {
  if (hidden < 1 || layers < 1) throw ConfigError("baseline: hidden and layers must be >= 1");
  Rng rng(seed);
  LstmBaseline m;
  m.hidden = hidden;
  m.layers = layers;
  m.token_embedding = nn::make_embedding(rng, 14, hidden);
  m.lstm.reserve(static_cast<size_t>(layers));
  for (int l = 0; l < layers; ++l) m.lstm.push_back(nn::make_lstm(rng, hidden, hidden));
  m.projection = nn::make_linear(rng, 1, hidden);
  return m;
}

std::vector<nn::NamedParam> LstmBaseline::parameters() {
  std::vector<nn::NamedParam> out;
  out.push_back({"embed/tok", &token_embedding.e});
  for (int l = 0; l < layers; ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    out.push_back({prefix + "/w_ih", &lstm[static_cast<size_t>(l)].w_ih});
    out.push_back({prefix + "/w_hh", &lstm[static_cast<size_t>(l)].w_hh});
    out.push_back({prefix + "/b", &lstm[static_cast<size_t>(l)].b});
  }
  out.push_back({"proj/w", &projection.w});
  out.push_back({"proj/b", &projection.b});
  return out;
}

int64_t LstmBaseline::parameter_count() {
  auto params = parameters();
  return nn::parameter_count(params);
}

int LstmBaseline::token_id(const rpn::Token& tok) {
  return tok.kind == rpn::Token::Kind::kNum ? tok.index : 10 + tok.index;
}

std::vector<Var> LstmBaseline::forward(Tape& tape, const rpn::Expression& expr) {
  const int steps = static_cast<int>(expr.tokens.size());
  const Array zero = Array::Zero(hidden);
  std::vector<nn::LstmState> states;
  states.reserve(lstm.size());
  for (size_t l = 0; l < lstm.size(); ++l) {
    states.push_back({tape.constant(zero, {hidden}), tape.constant(zero, {hidden})});
  }
  std::vector<Var> preds;
  preds.reserve(static_cast<size_t>(expr.n));
  for (int t = 0; t < steps; ++t) {
    Var x = nn::embed(tape, token_embedding, token_id(expr.tokens[static_cast<size_t>(t)]));
    for (size_t l = 0; l < lstm.size(); ++l) {
      auto [out, next] = nn::lstm_step(tape, lstm[l], x, states[l]);
      states[l] = next;
      x = out;
    }
    if (t >= steps - expr.n) preds.push_back(nn::linear_forward(tape, projection, x));
  }
  return preds;
}

std::vector<Scalar> LstmBaseline::predict(const rpn::Expression& expr) {
  Tape tape;
  std::vector<Var> preds = forward(tape, expr);
  std::vector<Scalar> out;
  out.reserve(preds.size());
  for (Var p : preds) out.push_back(tape.scalar_value(p));
  return out;
}

std::string LstmBaseline::id() const {
  return "baseline-h" + std::to_string(hidden) + "x" + std::to_string(layers);
}

void LstmBaseline::save(const std::string& path) {
  Tensor kind = Tensor::scalar(1.0);
  Tensor h = Tensor::scalar(static_cast<Scalar>(hidden));
  Tensor l = Tensor::scalar(static_cast<Scalar>(layers));
  std::vector<nn::NamedParam> entries;
  entries.push_back({"meta/kind", &kind});
  entries.push_back({"meta/hidden", &h});
  entries.push_back({"meta/layers", &l});
  for (nn::NamedParam p : parameters()) entries.push_back(p);
  nn::save_checkpoint(path, entries);
}

LstmBaseline LstmBaseline::load_from(const std::vector<nn::NamedTensor>& entries) {
  const Tensor& kind = find_entry(entries, "meta/kind");
  if (kind.data[0] != 1.0) throw DataError("checkpoint: not a baseline model");
  const int hidden = static_cast<int>(find_entry(entries, "meta/hidden").data[0]);
  const int layers = static_cast<int>(find_entry(entries, "meta/layers").data[0]);
  LstmBaseline m = make(0, hidden, layers);
  for (nn::NamedParam p : m.parameters()) {
    const Tensor& src = find_entry(entries, p.name);
    if (p.tensor->shape != src.shape) {
      throw DataError("checkpoint: tensor '" + p.name + "' has shape " + shape_str(src.shape) +
                      ", expected " + shape_str(p.tensor->shape));
    }
    p.tensor->data = src.data;
  }
  return m;
}

}  // namespace rstack
