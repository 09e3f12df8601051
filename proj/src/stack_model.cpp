#include "rstack/stack_model.hpp"

#include "rstack/errors.hpp"

namespace rstack {

namespace {

const Tensor& find_entry(const std::vector<nn::NamedTensor>& entries, const std::string& name) {
  for (const nn::NamedTensor& e : entries) {
    if (e.name == name) return e.tensor;
  }
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
  if (dst.shape != src.shape) {
    throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_str(src.shape) +
                    ", expected " + shape_str(dst.shape));
  }
  dst.data = src.data;
}

}  // namespace

StackModel StackModel::make(uint64_t seed, int hidden) {
  if (hidden < 1) throw ConfigError("stack model: hidden must be >= 1");
  Rng rng(seed);
  StackModel m;
  m.hidden = hidden;
  m.num_embedding = nn::make_embedding(rng, 10, hidden);
  m.lstm = nn::make_lstm(rng, hidden, hidden);
  for (int op = 0; op < 4; ++op) m.cells[static_cast<size_t>(op)] = nn::make_linear(rng, hidden, 2 * hidden);
  m.projection = nn::make_linear(rng, 1, hidden);
  m.init_h = Tensor::zeros({hidden});
  m.init_c = Tensor::zeros({hidden});
  nn::init_uniform(rng, m.init_h, hidden);
  nn::init_uniform(rng, m.init_c, hidden);
  return m;
}

std::vector<nn::NamedParam> StackModel::parameters() {
  std::vector<nn::NamedParam> out;
  out.push_back({"embed/num", &num_embedding.e});
  out.push_back({"lstm/w_ih", &lstm.w_ih});
  out.push_back({"lstm/w_hh", &lstm.w_hh});
  out.push_back({"lstm/b", &lstm.b});
  for (int op = 0; op < 4; ++op) {
    const std::string prefix = "cell" + std::to_string(op);
    out.push_back({prefix + "/w", &cells[static_cast<size_t>(op)].w});
    out.push_back({prefix + "/b", &cells[static_cast<size_t>(op)].b});
  }
  out.push_back({"proj/w", &projection.w});
  out.push_back({"proj/b", &projection.b});
  return out;
}

std::vector<nn::NamedParam> StackModel::state_tensors() {
  std::vector<nn::NamedParam> out = parameters();
  out.push_back({"state/h0", &init_h});
  out.push_back({"state/c0", &init_c});
  return out;
}

int64_t StackModel::parameter_count() {
  auto params = parameters();
  return nn::parameter_count(params);
}

std::vector<Var> StackModel::forward(Tape& tape, std::span<const rpn::Token> tokens) {
  std::vector<Var> stack;
  std::vector<Var> preds;
  stack.reserve(tokens.size());
  nn::LstmState state{tape.constant(init_h), tape.constant(init_c)};
  int nums_seen = 0;
  int ops_seen = 0;
  for (const rpn::Token& tok : tokens) {
    Var out;
    if (tok.kind == rpn::Token::Kind::kNum) {
      out = nn::embed(tape, num_embedding, tok.index);
      ++nums_seen;
    } else {
      if (stack.size() < 2) throw ContractError("stack model: pop on a stack of depth < 2");
      Var arg2 = stack.back();
      stack.pop_back();
      Var arg1 = stack.back();
      stack.pop_back();
      out = nn::linear_forward(tape, cells[tok.index], concat(arg1, arg2));
      ++ops_seen;
    }
    auto [lstm_out, next] = nn::lstm_step(tape, lstm, out, state);
    state = next;
    stack.push_back(lstm_out);
    if (tok.kind == rpn::Token::Kind::kOp) {
      preds.push_back(nn::linear_forward(tape, projection, lstm_out));
    }
    if (static_cast<int>(stack.size()) != nums_seen - ops_seen) {
      throw ContractError("stack model: depth trace violated at token " +
                          std::to_string(nums_seen + ops_seen));
    }
  }
  return preds;
}

std::vector<Var> StackModel::forward(Tape& tape, const rpn::Expression& expr) {
  std::vector<Var> preds = forward(tape, std::span<const rpn::Token>(expr.tokens));
  // [NUM]*(n+1)[OP]*n always drains back to one activation
  if (static_cast<int>(preds.size()) != expr.n) {
    throw ContractError("stack model: prediction count " + std::to_string(preds.size()) +
                        " for n=" + std::to_string(expr.n));
  }
  return preds;
}

std::vector<Scalar> StackModel::predict(const rpn::Expression& expr) {
  Tape tape;
  std::vector<Var> preds = forward(tape, expr);
  std::vector<Scalar> out;
  out.reserve(preds.size());
  for (Var p : preds) out.push_back(tape.scalar_value(p));
  return out;
}

std::string StackModel::id() const { return "ddrstack-h" + std::to_string(hidden); }

void StackModel::save(const std::string& path) {
  Tensor kind = Tensor::scalar(0.0);
  Tensor h = Tensor::scalar(static_cast<Scalar>(hidden));
  std::vector<nn::NamedParam> entries;
  entries.push_back({"meta/kind", &kind});
  entries.push_back({"meta/hidden", &h});
  for (nn::NamedParam p : state_tensors()) entries.push_back(p);
  nn::save_checkpoint(path, entries);
}

StackModel StackModel::load_from(const std::vector<nn::NamedTensor>& entries) {
  const Tensor& kind = find_entry(entries, "meta/kind");
  if (kind.data[0] != 0.0) throw DataError("checkpoint: not a stack model");
  const int hidden = static_cast<int>(find_entry(entries, "meta/hidden").data[0]);
  StackModel m = make(0, hidden);
  for (nn::NamedParam p : m.state_tensors()) {
    copy_into(*p.tensor, find_entry(entries, p.name), p.name);
  }
  return m;
}

}  // namespace rstack
