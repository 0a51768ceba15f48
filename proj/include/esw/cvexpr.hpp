#pragma once

#include "esw/pipeline.hpp"

#include <memory>
#include <string>
#include <vector>

namespace esw {

struct CompileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line, int column)
      : std::runtime_error(msg + " at line " + std::to_string(line) +
                           ", column " + std::to_string(column)),
        line(line),
        column(column) {}
  int line;
  int column;
};

// grammar:
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")" | "-" factor
// functions: sin, cos, exp, sig  with sig(u) = 1/(1+exp(-u))
struct AstNode {
  enum class Kind { Num, Var, Add, Sub, Mul, Div, Neg, Call };
  enum class Func { Sin, Cos, Exp, Sig };

  Kind kind = Kind::Num;
  double value = 0.0;          // Num
  int var_index = -1;          // Var: index into the variable vector
  std::string name;            // Var name
  Func func = Func::Sin;       // Call
  std::unique_ptr<AstNode> lhs, rhs;
};

using AstPtr = std::unique_ptr<AstNode>;

struct Ast {
  AstPtr root;
  std::vector<std::string> variables;  // index order used by eval/grad
};

// variables must be named x0..x{d-1}; unknown identifiers are a parse error
Ast parse_expression(const std::string& text, int n_vars);

double eval_ast(const Ast& ast, const Vec& x, bool* ieee_flag = nullptr);
Vec grad_ast(const Ast& ast, const Vec& x);
std::string print_ast(const Ast& ast);

struct CvExpression {
  std::string text;
  std::vector<std::string> inputs;
  std::string pipeline_hash;
  // compiled tICA-stage subexpressions feeding the encoder (empty when the
  // pipeline has no tICA stage)
  std::vector<std::string> tic_subexpressions;
};

CvExpression compile_pipeline(const CvPipeline& p);

std::string format_constant(double v);

}  // namespace esw
