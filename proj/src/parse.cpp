#include "fieldlab/parse.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>

#include "fieldlab/errors.hpp"

namespace fieldlab {

namespace {

enum class Tok { Num, Ident, Punct, End };

struct Token {
  Tok kind = Tok::End;
  double num = 0.0;
  bool integral = false;
  std::string text;  // identifier or punct
  int pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& s) : s_(s) { scan(); }

  std::vector<Token> take() { return std::move(toks_); }

 private:
  void scan() {
    int i = 0;
    int nchar = (int)s_.size();
    while (i < nchar) {
      char c = s_[i];
      if (std::isspace((unsigned char)c)) {
        ++i;
        continue;
      }
      if (std::isdigit((unsigned char)c)) {
        int start = i;
        bool integral = true;
        while (i < nchar && std::isdigit((unsigned char)s_[i])) ++i;
        if (i < nchar && s_[i] == '.') {
          integral = false;
          ++i;
          while (i < nchar && std::isdigit((unsigned char)s_[i])) ++i;
        }
        if (i < nchar && (s_[i] == 'e' || s_[i] == 'E')) {
          int save = i;
          ++i;
          if (i < nchar && (s_[i] == '+' || s_[i] == '-')) ++i;
          if (i < nchar && std::isdigit((unsigned char)s_[i])) {
            integral = false;
            while (i < nchar && std::isdigit((unsigned char)s_[i])) ++i;
          } else {
            i = save;  // 'e' belongs to an identifier, not this number
          }
        }
        Token t;
        t.kind = Tok::Num;
        t.integral = integral;
        t.pos = start;
        std::string digits = s_.substr(start, i - start);
        t.num = std::strtod(digits.c_str(), nullptr);
        toks_.push_back(std::move(t));
        continue;
      }
      if (std::isalpha((unsigned char)c) || c == '_') {
        int start = i;
        while (i < nchar &&
               (std::isalnum((unsigned char)s_[i]) || s_[i] == '_'))
          ++i;
        Token t;
        t.kind = Tok::Ident;
        t.text = s_.substr(start, i - start);
        t.pos = start;
        toks_.push_back(std::move(t));
        continue;
      }
      if (std::string("+-*/^()[],").find(c) != std::string::npos) {
        Token t;
        t.kind = Tok::Punct;
        t.text = std::string(1, c);
        t.pos = i;
        toks_.push_back(std::move(t));
        ++i;
        continue;
      }
      fail(ErrorKind::SyntaxError,
           "unexpected character '" + std::string(1, c) + "' at position " +
               std::to_string(i));
    }
    Token end;
    end.kind = Tok::End;
    end.pos = nchar;
    toks_.push_back(end);
  }

  const std::string& s_;
  std::vector<Token> toks_;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, ChartPtr chart)
      : toks_(std::move(toks)), chart_(std::move(chart)) {}

  Expr run() {
    Expr e = parse_expr();
    expect_end();
    return e;
  }

 private:
  const Token& peek() const { return toks_[i_]; }
  const Token& advance() { return toks_[i_++]; }
  bool at_punct(const char* p) const {
    return peek().kind == Tok::Punct && peek().text == p;
  }
  bool eat_punct(const char* p) {
    if (!at_punct(p)) return false;
    ++i_;
    return true;
  }
  void expect_punct(const char* p) {
    if (!eat_punct(p))
      fail(ErrorKind::SyntaxError, std::string("expected '") + p + "' at position " +
                                       std::to_string(peek().pos));
  }
  void expect_end() {
    if (peek().kind != Tok::End)
      fail(ErrorKind::SyntaxError,
           "trailing input at position " + std::to_string(peek().pos));
  }

  Expr parse_expr() {
    bool lead_neg = eat_punct("-");
    Expr e = parse_term();
    if (lead_neg) e = neg(e);
    for (;;) {
      if (eat_punct("+"))
        e = e + parse_term();
      else if (eat_punct("-"))
        e = e - parse_term();
      else
        return e;
    }
  }

  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      if (eat_punct("*"))
        e = e * parse_factor();
      else if (eat_punct("/"))
        e = e / parse_factor();
      else
        return e;
    }
  }

  Expr parse_factor() {
    Expr e = parse_base();
    if (eat_punct("^")) {
      bool negated = eat_punct("-");
      const Token& t = peek();
      if (t.kind != Tok::Num || !t.integral)
        fail(ErrorKind::SyntaxError,
             "exponent must be an integer at position " + std::to_string(t.pos));
      advance();
      int k = (int)std::llround(t.num);
      e = ipow(e, negated ? -k : k);
    }
    return e;
  }

  int parse_index() {
    bool negated = eat_punct("-");
    const Token& t = peek();
    if (t.kind == Tok::Num && t.integral) {
      advance();
      int v = (int)std::llround(t.num);
      return negated ? -v : v;
    }
    if (!negated && t.kind == Tok::Ident) {
      auto it = bound_.find(t.text);
      if (it == bound_.end())
        fail(ErrorKind::SyntaxError, "unknown index variable '" + t.text +
                                         "' at position " + std::to_string(t.pos));
      advance();
      return it->second;
    }
    fail(ErrorKind::SyntaxError,
         "expected an index at position " + std::to_string(t.pos));
  }

  Expr parse_base() {
    const Token& t = peek();
    if (t.kind == Tok::Num) {
      advance();
      return kconst(t.num);
    }
    if (eat_punct("(")) {
      Expr e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (t.kind != Tok::Ident)
      fail(ErrorKind::SyntaxError,
           "expected an expression at position " + std::to_string(t.pos));
    std::string name = t.text;
    advance();

    if (name == "sqrt" || name == "sin" || name == "cos" || name == "exp" ||
        name == "log") {
      expect_punct("(");
      Expr a = parse_expr();
      expect_punct(")");
      if (name == "sqrt") return sqrt_of(a);
      if (name == "sin") return apply(Prim::Sin, a);
      if (name == "cos") return apply(Prim::Cos, a);
      if (name == "exp") return apply(Prim::Exp, a);
      return apply(Prim::Log, a);
    }
    if (name == "sum") return parse_sum();
    if (name == "det2") {
      expect_punct("(");
      const Token& g = peek();
      if (g.kind != Tok::Ident)
        fail(ErrorKind::SyntaxError,
             "det2 expects a group name at position " + std::to_string(g.pos));
      advance();
      expect_punct(")");
      return sym2_det(g.text, g.pos);
    }
    if (at_punct("(")) {
      if (!find_external(name))
        fail(ErrorKind::SyntaxError, "unknown function '" + name +
                                         "' at position " + std::to_string(t.pos));
      advance();
      std::vector<Expr> args;
      if (!at_punct(")")) {
        args.push_back(parse_expr());
        while (eat_punct(",")) args.push_back(parse_expr());
      }
      expect_punct(")");
      return external(name, std::move(args));
    }

    std::vector<int> idx;
    if (eat_punct("[")) {
      idx.push_back(parse_index());
      while (eat_punct(",")) idx.push_back(parse_index());
      expect_punct("]");
    } else if (auto it = bound_.find(name); it != bound_.end()) {
      // a sum-bound index variable doubles as an integer constant
      return kconst((double)it->second);
    }
    return resolve_ref(name, idx, t.pos);
  }

  Expr parse_sum() {
    expect_punct("(");
    const Token& v = peek();
    if (v.kind != Tok::Ident)
      fail(ErrorKind::SyntaxError,
           "sum expects an index variable at position " + std::to_string(v.pos));
    std::string var = v.text;
    if (bound_.count(var))
      fail(ErrorKind::SyntaxError, "index variable '" + var + "' is already bound");
    advance();
    expect_punct(",");
    int lo = parse_index();
    expect_punct(",");
    int hi = parse_index();
    expect_punct(",");
    int body_start = i_;
    std::vector<Expr> parts;
    if (lo > hi)
      fail(ErrorKind::SyntaxError, "empty sum range [" + std::to_string(lo) +
                                       ", " + std::to_string(hi) + "]");
    for (int k = lo; k <= hi; ++k) {
      i_ = body_start;
      bound_[var] = k;
      parts.push_back(parse_expr());
    }
    bound_.erase(var);
    expect_punct(")");
    return add(std::move(parts));
  }

  Expr sym2_component(const FiberGroup& g, int a, int b) {
    return kcoord(fiber_coord(chart_->fiber_index(g, {a, b})));
  }

  Expr sym2_det(const std::string& gname, int pos) {
    const FiberGroup* g = chart_->find_group(gname);
    if (!g || !g->sym2)
      fail(ErrorKind::SyntaxError, "det2 needs a sym2 group, got '" + gname +
                                       "' at position " + std::to_string(pos));
    Expr a = sym2_component(*g, 0, 0);
    Expr b = sym2_component(*g, 0, 1);
    Expr c = sym2_component(*g, 1, 1);
    return a * c - ipow(b, 2);
  }

  Expr resolve_ref(const std::string& name, const std::vector<int>& idx, int pos) {
    if (const BundleChart::Table* tab = chart_->find_table(name)) {
      if ((int)idx.size() != tab->arity)
        fail(ErrorKind::SyntaxError, "table '" + name + "' takes " +
                                         std::to_string(tab->arity) + " indices");
      auto it = tab->entries.find(idx);
      if (it == tab->entries.end())
        fail(ErrorKind::UnknownCoordinate,
             "table '" + name + "' has no entry for the given indices");
      return it->second;
    }
    // closed-form inverse components of a sym2 group: <name>inv[a,b]
    if (name.size() > 3 && name.substr(name.size() - 3) == "inv") {
      std::string gname = name.substr(0, name.size() - 3);
      const FiberGroup* g = chart_->find_group(gname);
      if (g && g->sym2) {
        if (idx.size() != 2 || idx[0] < 0 || idx[0] > 1 || idx[1] < 0 || idx[1] > 1)
          fail(ErrorKind::SyntaxError,
               "'" + name + "' takes two indices in {0,1}");
        Expr det = sym2_det(gname, pos);
        int a = idx[0], b = idx[1];
        Expr cof;
        if (a == 0 && b == 0)
          cof = sym2_component(*g, 1, 1);
        else if (a == 1 && b == 1)
          cof = sym2_component(*g, 0, 0);
        else
          cof = neg(sym2_component(*g, 0, 1));
        return cof / det;
      }
    }
    if (auto id = chart_->resolve_coord(name, idx)) return kcoord(*id);
    fail(ErrorKind::UnknownCoordinate,
         "cannot resolve '" + name + "' with " + std::to_string(idx.size()) +
             " indices at position " + std::to_string(pos));
  }

  std::vector<Token> toks_;
  ChartPtr chart_;
  std::size_t i_ = 0;
  std::map<std::string, int> bound_;
};

}  // namespace

Expr parse_expr(const std::string& text, const ChartPtr& chart) {
  Lexer lex(text);
  Parser p(lex.take(), chart);
  return p.run();
}

}  // namespace fieldlab
