#pragma once

#include <span>
#include <vector>

#include "rstack/nn.hpp"
#include "rstack/rpn.hpp"

namespace rstack {

// Vanilla LSTM over the raw token stream, with the same supervision as the
// stack model: one projected prediction at each of the last n timesteps.
// NUM and OP tokens share a single flat 14-entry embedding table, so the
// model gets no structural hint about which tokens are operators.
struct LstmBaseline {
  int hidden = 32;
  int layers = 1;
  nn::EmbeddingTable token_embedding;  // [14, h]
  std::vector<nn::LstmCell> lstm;      // `layers` stacked cells, all width h
  nn::LinearLayer projection;          // [1 <- h]

  static LstmBaseline make(uint64_t seed, int hidden, int layers);

  std::vector<nn::NamedParam> parameters();
  int64_t parameter_count();

  static int token_id(const rpn::Token& tok);  // NUM 0..9, OP 10..13

  std::vector<Var> forward(Tape& tape, const rpn::Expression& expr);
  std::vector<Scalar> predict(const rpn::Expression& expr);

  std::string id() const;
  void save(const std::string& path);
  static LstmBaseline load_from(const std::vector<nn::NamedTensor>& entries);
};

}  // namespace rstack
