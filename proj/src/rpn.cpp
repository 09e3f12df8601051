#include "rstack/rpn.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "rstack/errors.hpp"

namespace rstack::rpn {

char op_char(OpKind op) {
  switch (op) {
    case OpKind::kAdd: return '+';
    case OpKind::kSub: return '-';
    case OpKind::kMul: return '*';
    case OpKind::kDiv: return '/';
  }
  return '?';
}

Token Token::num(int index) {
  if (index < 0 || index > 9) throw IndexError("rpn: NUM index " + std::to_string(index));
  return Token{Kind::kNum, static_cast<uint8_t>(index)};
}

Token Token::op_token(int index) {
  if (index < 0 || index > 3) throw IndexError("rpn: OP index " + std::to_string(index));
  return Token{Kind::kOp, static_cast<uint8_t>(index)};
}

namespace {

inline bool apply_op(OpKind op, double a, double b, double& out) {
  switch (op) {
    case OpKind::kAdd: out = a + b; return true;
    case OpKind::kSub: out = a - b; return true;
    case OpKind::kMul: out = a * b; return true;
    case OpKind::kDiv:
      if (b == 0.0) return false;
      out = a / b;
      return true;
  }
  return false;
}

}  // namespace

EvalStatus evaluate_tokens(std::span<const Token> tokens, std::vector<double>& answers) {
  answers.clear();
  std::vector<double> stack;
  stack.reserve(tokens.size());
  for (const Token& t : tokens) {
    if (t.kind == Token::Kind::kNum) {
      stack.push_back(t.num_value());
    } else {
      if (stack.size() < 2) return EvalStatus::kMalformed;
      const double b = stack.back();
      stack.pop_back();
      const double a = stack.back();
      stack.pop_back();
      double r = 0.0;
      if (!apply_op(t.op(), a, b, r)) return EvalStatus::kDivisionByZero;
      stack.push_back(r);
      answers.push_back(r);
    }
  }
  return stack.size() == 1 ? EvalStatus::kOk : EvalStatus::kMalformed;
}

EvalStatus evaluate_reals(std::span<const double> nums, std::span<const OpKind> ops,
                          std::vector<double>& answers) {
  answers.clear();
  if (nums.size() != ops.size() + 1) return EvalStatus::kMalformed;
  std::vector<double> stack(nums.begin(), nums.end());
  for (OpKind op : ops) {
    const double b = stack.back();
    stack.pop_back();
    const double a = stack.back();
    stack.pop_back();
    double r = 0.0;
    if (!apply_op(op, a, b, r)) return EvalStatus::kDivisionByZero;
    stack.push_back(r);
    answers.push_back(r);
  }
  return EvalStatus::kOk;
}

std::vector<double> evaluate(std::span<const Token> tokens) {
  std::vector<double> answers;
  switch (evaluate_tokens(tokens, answers)) {
    case EvalStatus::kOk: return answers;
    case EvalStatus::kDivisionByZero: throw NumericError("rpn: division by zero");
    case EvalStatus::kMalformed: throw DataError("rpn: malformed expression");
  }
  return answers;
}

Expression generate_expression(Rng& rng, int n, double bound) {
  if (n < 1) throw ContractError("rpn: n must be >= 1");
  constexpr int64_t kMaxResamples = 1000000;
  Expression e;
  e.n = n;
  e.tokens.resize(static_cast<size_t>(2 * n + 1));
  for (int64_t attempt = 0; attempt < kMaxResamples; ++attempt) {
    for (int i = 0; i <= n; ++i) {
      e.tokens[static_cast<size_t>(i)] = Token{Token::Kind::kNum,
                                               static_cast<uint8_t>(rng.next_below(10))};
    }
    for (int i = 0; i < n; ++i) {
      e.tokens[static_cast<size_t>(n + 1 + i)] = Token{Token::Kind::kOp,
                                                       static_cast<uint8_t>(rng.next_below(4))};
    }
    if (evaluate_tokens(e.tokens, e.answers) != EvalStatus::kOk) continue;
    bool within = true;
    for (double a : e.answers) {
      if (std::abs(a) > bound) {
        within = false;
        break;
      }
    }
    if (within) return e;
  }
  throw ConfigError("rpn: generator stuck after " + std::to_string(kMaxResamples) +
                    " resamples (n=" + std::to_string(n) + ", bound=" + std::to_string(bound) +
                    ")");
}

std::vector<Expression> generate_split(uint64_t seed, uint64_t block, int n, int64_t count,
                                       double bound) {
  Rng rng = derived_rng(seed, block);
  std::vector<Expression> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) out.push_back(generate_expression(rng, n, bound));
  return out;
}

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_expression(const Expression& e) {
  std::string line;
  for (const Token& t : e.tokens) {
    if (!line.empty()) line += ' ';
    if (t.kind == Token::Kind::kNum) {
      line += "0.";
      line += static_cast<char>('0' + t.index);
    } else {
      line += op_char(t.op());
    }
  }
  line += " |";
  for (double a : e.answers) {
    line += ' ';
    line += format_double(a);
  }
  return line;
}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void parse_fail(int line_number, const std::string& why) {
  throw DataError("rpn: line " + std::to_string(line_number) + ": " + why);
}

}  // namespace

Expression parse_expression(const std::string& line, int line_number) {
  const size_t bar = line.find(" | ");
  if (bar == std::string::npos) parse_fail(line_number, "missing ' | ' separator");
  const std::vector<std::string> toks = split_ws(line.substr(0, bar));
  const std::vector<std::string> vals = split_ws(line.substr(bar + 3));
  if (toks.size() < 3 || toks.size() % 2 == 0) {
    parse_fail(line_number, "expected 2n+1 tokens, got " + std::to_string(toks.size()));
  }
  Expression e;
  e.n = static_cast<int>(toks.size() / 2);
  e.tokens.reserve(toks.size());
  for (size_t i = 0; i < toks.size(); ++i) {
    const std::string& s = toks[i];
    const bool want_num = i <= static_cast<size_t>(e.n);
    if (s.size() == 3 && s[0] == '0' && s[1] == '.' && s[2] >= '0' && s[2] <= '9') {
      if (!want_num) parse_fail(line_number, "NUM token after an OP token");
      e.tokens.push_back(Token::num(s[2] - '0'));
    } else if (s.size() == 1 && (s[0] == '+' || s[0] == '-' || s[0] == '*' || s[0] == '/')) {
      if (want_num) parse_fail(line_number, "OP token in the NUM prefix");
      const int op = s[0] == '+' ? 0 : s[0] == '-' ? 1 : s[0] == '*' ? 2 : 3;
      e.tokens.push_back(Token::op_token(op));
    } else {
      parse_fail(line_number, "unrecognized token '" + s + "'");
    }
  }
  if (vals.size() != static_cast<size_t>(e.n)) {
    parse_fail(line_number, "expected " + std::to_string(e.n) + " answers, got " +
                                std::to_string(vals.size()));
  }
  e.answers.reserve(vals.size());
  for (const std::string& s : vals) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      parse_fail(line_number, "bad answer '" + s + "'");
    }
    e.answers.push_back(v);
  }
  return e;
}

void write_dataset(std::span<const Expression> exprs, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("rpn: cannot open " + path + " for writing");
  for (const Expression& e : exprs) os << format_expression(e) << '\n';
  if (!os) throw DataError("rpn: write failed for " + path);
}

std::vector<Expression> read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("rpn: cannot open " + path);
  std::vector<Expression> out;
  std::string line;
  int line_number = 0;
  while (std::getline(is, line)) {
    ++line_number;
    if (line.empty()) continue;
    out.push_back(parse_expression(line, line_number));
  }
  return out;
}

void write_dataset_files(const DatasetSpec& spec, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  write_dataset(generate_split(spec.seed, 0, spec.n, spec.train, spec.bound),
                (dir / "train.rpn").string());
  write_dataset(generate_split(spec.seed, 1, spec.n, spec.val, spec.bound),
                (dir / "val.rpn").string());
  write_dataset(generate_split(spec.seed, 2, spec.n, spec.test, spec.bound),
                (dir / "test.rpn").string());
  write_dataset(generate_split(spec.seed, 3, spec.gen_n, spec.gen_count, spec.bound),
                (dir / "gen30.rpn").string());
}

}  // namespace rstack::rpn
