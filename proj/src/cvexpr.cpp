#include "esw/cvexpr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

namespace esw {

std::string format_constant(double v) {
  char buf[64];
  // shortest decimal that round-trips, capped at 17 significant digits
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace {

// literal usable as a grammar factor ("-" needs wrapping)
std::string lit(double v) {
  if (std::signbit(v)) return "(-" + format_constant(-v) + ")";
  return format_constant(v);
}

struct Parser {
  const std::string& text;
  int n_vars;
  std::size_t pos = 0;
  int line = 1;
  int col = 1;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, line, col);
  }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos < text.size(); ++i, ++pos) {
      if (text[pos] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
      advance(1);
  }

  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      advance(1);
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  AstPtr parse_expr() {
    AstPtr node = parse_term();
    while (true) {
      const char c = peek();
      if (c != '+' && c != '-') break;
      advance(1);
      auto parent = std::make_unique<AstNode>();
      parent->kind = c == '+' ? AstNode::Kind::Add : AstNode::Kind::Sub;
      parent->lhs = std::move(node);
      parent->rhs = parse_term();
      node = std::move(parent);
    }
    return node;
  }

  AstPtr parse_term() {
    AstPtr node = parse_factor();
    while (true) {
      const char c = peek();
      if (c != '*' && c != '/') break;
      advance(1);
      auto parent = std::make_unique<AstNode>();
      parent->kind = c == '*' ? AstNode::Kind::Mul : AstNode::Kind::Div;
      parent->lhs = std::move(node);
      parent->rhs = parse_factor();
      node = std::move(parent);
    }
    return node;
  }

  AstPtr parse_factor() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression");
    const char c = text[pos];
    if (c == '-') {
      advance(1);
      auto node = std::make_unique<AstNode>();
      node->kind = AstNode::Kind::Neg;
      node->lhs = parse_factor();
      return node;
    }
    if (c == '(') {
      advance(1);
      AstPtr inner = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
      return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
      return parse_ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  AstPtr parse_number() {
    const std::size_t start = pos;
    std::size_t p = pos;
    while (p < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[p])) || text[p] == '.'))
      ++p;
    if (p < text.size() && (text[p] == 'e' || text[p] == 'E')) {
      std::size_t q = p + 1;
      if (q < text.size() && (text[q] == '+' || text[q] == '-')) ++q;
      if (q < text.size() && std::isdigit(static_cast<unsigned char>(text[q]))) {
        ++q;
        while (q < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[q])))
          ++q;
        p = q;
      }
    }
    const std::string tok = text.substr(start, p - start);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) fail("malformed number '" + tok + "'");
    advance(p - start);
    auto node = std::make_unique<AstNode>();
    node->kind = AstNode::Kind::Num;
    node->value = v;
    return node;
  }

  AstPtr parse_ident() {
    const std::size_t start = pos;
    std::size_t p = pos;
    while (p < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[p])) || text[p] == '_'))
      ++p;
    const std::string name = text.substr(start, p - start);
    advance(p - start);
    if (peek() == '(') {
      advance(1);
      auto node = std::make_unique<AstNode>();
      node->kind = AstNode::Kind::Call;
      if (name == "sin")
        node->func = AstNode::Func::Sin;
      else if (name == "cos")
        node->func = AstNode::Func::Cos;
      else if (name == "exp")
        node->func = AstNode::Func::Exp;
      else if (name == "sig")
        node->func = AstNode::Func::Sig;
      else
        fail("unknown function '" + name + "'");
      node->lhs = parse_expr();
      if (!eat(')')) fail("expected ')' after function argument");
      return node;
    }
    // variable: x<k>
    if (name.size() >= 2 && name[0] == 'x') {
      bool digits = true;
      for (std::size_t i = 1; i < name.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
      if (digits) {
        const int k = std::stoi(name.substr(1));
        if (k >= n_vars) fail("variable '" + name + "' out of range");
        auto node = std::make_unique<AstNode>();
        node->kind = AstNode::Kind::Var;
        node->var_index = k;
        node->name = name;
        return node;
      }
    }
    fail("unknown identifier '" + name + "'");
  }
};

double node_eval(const AstNode* n, const Vec& x, bool* flag) {
  switch (n->kind) {
    case AstNode::Kind::Num: return n->value;
    case AstNode::Kind::Var: return x[n->var_index];
    case AstNode::Kind::Add:
      return node_eval(n->lhs.get(), x, flag) + node_eval(n->rhs.get(), x, flag);
    case AstNode::Kind::Sub:
      return node_eval(n->lhs.get(), x, flag) - node_eval(n->rhs.get(), x, flag);
    case AstNode::Kind::Mul:
      return node_eval(n->lhs.get(), x, flag) * node_eval(n->rhs.get(), x, flag);
    case AstNode::Kind::Div: {
      const double a = node_eval(n->lhs.get(), x, flag);
      const double b = node_eval(n->rhs.get(), x, flag);
      if (b == 0.0 && flag) *flag = true;
      return a / b;
    }
    case AstNode::Kind::Neg: return -node_eval(n->lhs.get(), x, flag);
    case AstNode::Kind::Call: {
      const double a = node_eval(n->lhs.get(), x, flag);
      switch (n->func) {
        case AstNode::Func::Sin: return std::sin(a);
        case AstNode::Func::Cos: return std::cos(a);
        case AstNode::Func::Exp: return std::exp(a);
        case AstNode::Func::Sig: return 1.0 / (1.0 + std::exp(-a));
      }
    }
  }
  return 0.0;
}

// reverse-mode: recompute child values on the way down, push adjoints
void node_grad(const AstNode* n, const Vec& x, double adj, Vec& g) {
  switch (n->kind) {
    case AstNode::Kind::Num: return;
    case AstNode::Kind::Var:
      g[n->var_index] += adj;
      return;
    case AstNode::Kind::Add:
      node_grad(n->lhs.get(), x, adj, g);
      node_grad(n->rhs.get(), x, adj, g);
      return;
    case AstNode::Kind::Sub:
      node_grad(n->lhs.get(), x, adj, g);
      node_grad(n->rhs.get(), x, -adj, g);
      return;
    case AstNode::Kind::Mul: {
      const double a = node_eval(n->lhs.get(), x, nullptr);
      const double b = node_eval(n->rhs.get(), x, nullptr);
      node_grad(n->lhs.get(), x, adj * b, g);
      node_grad(n->rhs.get(), x, adj * a, g);
      return;
    }
    case AstNode::Kind::Div: {
      const double a = node_eval(n->lhs.get(), x, nullptr);
      const double b = node_eval(n->rhs.get(), x, nullptr);
      node_grad(n->lhs.get(), x, adj / b, g);
      node_grad(n->rhs.get(), x, -adj * a / (b * b), g);
      return;
    }
    case AstNode::Kind::Neg:
      node_grad(n->lhs.get(), x, -adj, g);
      return;
    case AstNode::Kind::Call: {
      const double a = node_eval(n->lhs.get(), x, nullptr);
      double d = 0.0;
      switch (n->func) {
        case AstNode::Func::Sin: d = std::cos(a); break;
        case AstNode::Func::Cos: d = -std::sin(a); break;
        case AstNode::Func::Exp: d = std::exp(a); break;
        case AstNode::Func::Sig: {
          const double s = 1.0 / (1.0 + std::exp(-a));
          d = s * (1.0 - s);
          break;
        }
      }
      node_grad(n->lhs.get(), x, adj * d, g);
      return;
    }
  }
}

void node_print(const AstNode* n, std::ostream& os) {
  switch (n->kind) {
    case AstNode::Kind::Num:
      os << lit(n->value);
      return;
    case AstNode::Kind::Var:
      os << "x" << n->var_index;
      return;
    case AstNode::Kind::Add:
    case AstNode::Kind::Sub:
    case AstNode::Kind::Mul:
    case AstNode::Kind::Div: {
      const char* op = n->kind == AstNode::Kind::Add   ? "+"
                       : n->kind == AstNode::Kind::Sub ? "-"
                       : n->kind == AstNode::Kind::Mul ? "*"
                                                       : "/";
      os << "(";
      node_print(n->lhs.get(), os);
      os << op;
      node_print(n->rhs.get(), os);
      os << ")";
      return;
    }
    case AstNode::Kind::Neg:
      os << "(-";
      node_print(n->lhs.get(), os);
      os << ")";
      return;
    case AstNode::Kind::Call: {
      const char* f = n->func == AstNode::Func::Sin   ? "sin"
                      : n->func == AstNode::Func::Cos ? "cos"
                      : n->func == AstNode::Func::Exp ? "exp"
                                                      : "sig";
      os << f << "(";
      node_print(n->lhs.get(), os);
      os << ")";
      return;
    }
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Ast parse_expression(const std::string& text, int n_vars) {
  Parser p{text, n_vars};
  Ast ast;
  ast.root = p.parse_expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  for (int i = 0; i < n_vars; ++i)
    ast.variables.push_back("x" + std::to_string(i));
  return ast;
}

double eval_ast(const Ast& ast, const Vec& x, bool* ieee_flag) {
  if (ieee_flag) *ieee_flag = false;
  const double v = node_eval(ast.root.get(), x, ieee_flag);
  if (ieee_flag && !std::isfinite(v)) *ieee_flag = true;
  return v;
}

Vec grad_ast(const Ast& ast, const Vec& x) {
  Vec g = Vec::Zero(x.size());
  node_grad(ast.root.get(), x, 1.0, g);
  return g;
}

std::string print_ast(const Ast& ast) {
  std::ostringstream os;
  node_print(ast.root.get(), os);
  return os.str();
}

namespace {

std::string affine_row(const Mat& W, const Vec& b, int row,
                       const std::vector<std::string>& inputs) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index c = 0; c < W.cols(); ++c) {
    if (c > 0) os << "+";
    os << "(" << lit(W(row, c)) << "*" << inputs[c] << ")";
  }
  os << "+" << lit(b[row]) << ")";
  return os.str();
}

std::string apply_activation(Activation act, const std::string& u) {
  switch (act) {
    case Activation::Identity: return u;
    case Activation::Swish: return "(" + u + "*sig(" + u + "))";
    case Activation::Tanh: return "((2*sig((2*" + u + ")))-1)";
  }
  throw CompileError("unsupported activation");
}

}  // namespace

CvExpression compile_pipeline(const CvPipeline& p) {
  p.validate();
  const int d = p.input_dim();

  CvExpression out;
  for (int i = 0; i < d; ++i) out.inputs.push_back("x" + std::to_string(i));

  auto var = [&](int slot) {
    const int idx = p.input_permutation.empty() ? slot
                                                : p.input_permutation[slot];
    return "x" + std::to_string(idx);
  };

  // feature stage
  std::vector<std::string> cur;
  for (const auto& b : p.features.blocks) {
    switch (b.kind) {
      case FeatureKind::Identity:
        for (int i = 0; i < d; ++i) {
          std::string e = var(i);
          if (b.scale != 1.0) e = "(" + lit(b.scale) + "*" + e + ")";
          cur.push_back(e);
        }
        break;
      case FeatureKind::SinCos:
        for (int i = 0; i < d; ++i) {
          std::string s = "sin(" + var(i) + ")";
          std::string c = "cos(" + var(i) + ")";
          if (b.scale != 1.0) {
            s = "(" + lit(b.scale) + "*" + s + ")";
            c = "(" + lit(b.scale) + "*" + c + ")";
          }
          cur.push_back(s);
          cur.push_back(c);
        }
        break;
      case FeatureKind::PairDistances:
        throw CompileError(
            "pair-distance features are not representable in the expression "
            "grammar");
    }
  }

  // scaler stage
  if (p.scaler) {
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur[i] = "((" + cur[i] + "-" + lit(p.scaler->mean[i]) + ")/" +
               lit(p.scaler->std[i]) + ")";
  }

  // tICA stage: one linear combination per retained tIC
  if (p.tica) {
    std::vector<std::string> tics;
    for (int j = 0; j < p.n_tics; ++j) {
      std::ostringstream os;
      os << "(";
      for (std::size_t i = 0; i < cur.size(); ++i) {
        if (i > 0) os << "+";
        os << "(" << lit(p.tica->components(i, j)) << "*(" << cur[i] << "-"
           << lit(p.tica->mean[i]) << "))";
      }
      os << ")";
      tics.push_back(os.str());
    }
    out.tic_subexpressions = tics;
    cur = std::move(tics);
  }

  // encoder stage
  const auto& layers = p.encoder.encoder;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<std::string> next;
    for (Eigen::Index r = 0; r < layers[l].W.rows(); ++r) {
      std::string u = affine_row(layers[l].W, layers[l].b, static_cast<int>(r),
                                 cur);
      if (l + 1 < layers.size()) u = apply_activation(p.encoder.activation, u);
      next.push_back(std::move(u));
    }
    cur = std::move(next);
  }
  if (cur.size() != 1)
    throw CompileError("encoder latent width must be 1 for CV export");
  out.text = cur[0];

  std::ostringstream meta;
  meta << d << "|" << out.text.size() << "|" << out.text;
  out.pipeline_hash = std::to_string(fnv1a(meta.str()));
  return out;
}

}  // namespace esw
