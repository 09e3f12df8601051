#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rstack/rng.hpp"

namespace rstack::rpn {

enum class OpKind : uint8_t { kAdd = 0, kSub = 1, kMul = 2, kDiv = 3 };

char op_char(OpKind op);

// NUM tokens carry an index 0..9 standing for the values 0.0 .. 0.9; OP
// tokens carry an index 0..3 meaning + - * /. Models see only the indices.
struct Token {
  enum class Kind : uint8_t { kNum, kOp };
  Kind kind = Kind::kNum;
  uint8_t index = 0;

  double num_value() const { return static_cast<double>(index) / 10.0; }
  OpKind op() const { return static_cast<OpKind>(index); }

  static Token num(int index);
  static Token op_token(int index);

  bool operator==(const Token&) const = default;
};

// Fixed grammar [NUM]*(n+1) [OP]*n with one intermediate answer per OP.
struct Expression {
  int n = 0;
  std::vector<Token> tokens;    // 2n+1
  std::vector<double> answers;  // n, in OP application order
};

enum class EvalStatus : uint8_t { kOk, kDivisionByZero, kMalformed };

// Stack evaluation: NUM pushes its value; OP pops b then a (a is the deeper
// element) and pushes a.op.b, recording the result. Exactly one value must
// remain at the end. Division by an exact zero stops evaluation.
EvalStatus evaluate_tokens(std::span<const Token> tokens, std::vector<double>& answers);

// Same machine over the canonical layout with arbitrary real operands.
EvalStatus evaluate_reals(std::span<const double> nums, std::span<const OpKind> ops,
                          std::vector<double>& answers);

// Throwing wrapper over evaluate_tokens.
std::vector<double> evaluate(std::span<const Token> tokens);

// Uniform token sampling with whole-expression rejection: resample until no
// division by zero occurs and every intermediate answer stays within bound.
Expression generate_expression(Rng& rng, int n, double bound = 100.0);

struct DatasetSpec {
  int n = 10;
  int64_t train = 100000;
  int64_t val = 5000;
  int64_t test = 20000;
  int gen_n = 30;
  int64_t gen_count = 20000;
  uint64_t seed = 42;
  double bound = 100.0;
};

// Split block indices: train 0, val 1, test 2, generalization 3.
std::vector<Expression> generate_split(uint64_t seed, uint64_t block, int n, int64_t count,
                                       double bound);

// One expression per line: space-separated tokens, " | ", space-separated
// answers printed with the shortest round-trip decimal form.
std::string format_double(double v);
std::string format_expression(const Expression& e);
Expression parse_expression(const std::string& line, int line_number);

void write_dataset(std::span<const Expression> exprs, const std::string& path);
std::vector<Expression> read_dataset(const std::string& path);

// Writes train.rpn, val.rpn, test.rpn, gen30.rpn under out_dir.
void write_dataset_files(const DatasetSpec& spec, const std::string& out_dir);

}  // namespace rstack::rpn
