#pragma once

#include <array>
#include <span>
#include <vector>

#include "rstack/nn.hpp"
#include "rstack/rpn.hpp"

namespace rstack {

// Stack-augmented LSTM for RPN evaluation. NUM tokens are embedded; each OP
// token pops two activations, merges them through the operator's linear cell
// (no nonlinearity) and projects one prediction after the LSTM step. The
// push/pop schedule is given by the input, so the controller is
// deterministic.
struct StackModel {
  int hidden = 32;
  nn::EmbeddingTable num_embedding;          // [10, h]
  nn::LstmCell lstm;                         // in = h
  std::array<nn::LinearLayer, 4> cells;      // [h <- 2h], indexed by op
  nn::LinearLayer projection;                // [1 <- h]
  // Fixed random initial LSTM state drawn at construction; stored in
  // checkpoints but not trained, so the trainable count stays at 16h^2+19h+1.
  Tensor init_h;
  Tensor init_c;

  static StackModel make(uint64_t seed, int hidden);

  std::vector<nn::NamedParam> parameters();        // trainable tensors
  std::vector<nn::NamedParam> state_tensors();     // parameters + buffers
  int64_t parameter_count();

  // One prediction Var (shape [1]) per OP token. Accepts any prefix of the
  // grammar that never underflows; checks the stack depth trace on the way.
  std::vector<Var> forward(Tape& tape, std::span<const rpn::Token> tokens);
  // Full-expression variant; additionally requires a final stack depth of 1.
  std::vector<Var> forward(Tape& tape, const rpn::Expression& expr);

  std::vector<Scalar> predict(const rpn::Expression& expr);

  std::string id() const;
  void save(const std::string& path);
  static StackModel load_from(const std::vector<nn::NamedTensor>& entries);
};

}  // namespace rstack
