#include "fieldlab/expr.hpp"

#include <charconv>
#include <cmath>
#include <mutex>

#include "fieldlab/errors.hpp"

namespace fieldlab {

namespace {

std::shared_ptr<const ExprNode> make_node(ExprNode&& n) {
  return std::make_shared<const ExprNode>(std::move(n));
}

const std::shared_ptr<const ExprNode>& zero_node() {
  static const std::shared_ptr<const ExprNode> z = [] {
    ExprNode n;
    n.kind = ExprKind::Const;
    n.value = 0.0;
    return make_node(std::move(n));
  }();
  return z;
}

const std::shared_ptr<const ExprNode>& one_node() {
  static const std::shared_ptr<const ExprNode> o = [] {
    ExprNode n;
    n.kind = ExprKind::Const;
    n.value = 1.0;
    return make_node(std::move(n));
  }();
  return o;
}

}  // namespace

Expr::Expr() : n_(zero_node()) {}
ExprKind Expr::kind() const { return n_->kind; }
bool Expr::is_const() const { return n_->kind == ExprKind::Const; }
double Expr::const_value() const { return n_->value; }
bool Expr::is_zero() const { return is_const() && n_->value == 0.0; }
bool Expr::is_one() const { return is_const() && n_->value == 1.0; }

Expr kconst(double v) {
  if (v == 0.0) return Expr(zero_node());
  if (v == 1.0) return Expr(one_node());
  ExprNode n;
  n.kind = ExprKind::Const;
  n.value = v;
  return Expr(make_node(std::move(n)));
}

Expr kcoord(CoordId id) {
  ExprNode n;
  n.kind = ExprKind::Coord;
  n.coord = id;
  return Expr(make_node(std::move(n)));
}

Expr add(std::vector<Expr> terms) {
  std::vector<Expr> kids;
  kids.reserve(terms.size());
  double c = 0.0;
  for (auto& t : terms) {
    if (t.kind() == ExprKind::Sum) {
      for (const auto& k : t.node().kids) {
        if (k.is_const())
          c += k.const_value();
        else
          kids.push_back(k);
      }
    } else if (t.is_const()) {
      c += t.const_value();
    } else {
      kids.push_back(std::move(t));
    }
  }
  if (kids.empty()) return kconst(c);
  if (c != 0.0) kids.insert(kids.begin(), kconst(c));
  if (kids.size() == 1) return kids[0];
  ExprNode n;
  n.kind = ExprKind::Sum;
  n.kids = std::move(kids);
  return Expr(make_node(std::move(n)));
}

Expr mul(std::vector<Expr> factors) {
  std::vector<Expr> kids;
  kids.reserve(factors.size());
  double c = 1.0;
  bool negate = false;
  // flatten, fold constants, and pull signs out of Neg children
  std::vector<Expr> work(std::move(factors));
  for (std::size_t w = 0; w < work.size(); ++w) {
    Expr t = work[w];
    while (t.kind() == ExprKind::Neg) {
      negate = !negate;
      t = t.node().kids[0];
    }
    if (t.kind() == ExprKind::Product) {
      for (const auto& k : t.node().kids) work.push_back(k);
      continue;
    }
    if (t.is_const()) {
      c *= t.const_value();
    } else {
      kids.push_back(std::move(t));
    }
  }
  if (c == 0.0) return kconst(0.0);
  if (c < 0.0) {
    c = -c;
    negate = !negate;
  }
  Expr result;
  if (kids.empty()) {
    result = kconst(c);
  } else {
    if (c != 1.0) kids.insert(kids.begin(), kconst(c));
    if (kids.size() == 1) {
      result = kids[0];
    } else {
      ExprNode n;
      n.kind = ExprKind::Product;
      n.kids = std::move(kids);
      result = Expr(make_node(std::move(n)));
    }
  }
  return negate ? neg(result) : result;
}

Expr neg(const Expr& e) {
  if (e.is_const()) return kconst(-e.const_value());
  if (e.kind() == ExprKind::Neg) return e.node().kids[0];
  ExprNode n;
  n.kind = ExprKind::Neg;
  n.kids = {e};
  return Expr(make_node(std::move(n)));
}

Expr inv(const Expr& e) {
  if (e.is_const() && e.const_value() != 0.0) return kconst(1.0 / e.const_value());
  if (e.kind() == ExprKind::Inv) return e.node().kids[0];
  if (e.kind() == ExprKind::Neg) return neg(inv(e.node().kids[0]));
  ExprNode n;
  n.kind = ExprKind::Inv;
  n.kids = {e};
  return Expr(make_node(std::move(n)));
}

Expr ipow(const Expr& e, int k) {
  if (k == 0) return kconst(1.0);
  if (k == 1) return e;
  if (e.is_const()) {
    double c = e.const_value();
    if (c != 0.0 || k > 0) return kconst(std::pow(c, k));
  }
  if (e.kind() == ExprKind::Power) {
    long long kk = (long long)e.node().ipow * k;
    if (kk >= -1000000 && kk <= 1000000) return ipow(e.node().kids[0], (int)kk);
  }
  ExprNode n;
  n.kind = ExprKind::Power;
  n.ipow = k;
  n.kids = {e};
  return Expr(make_node(std::move(n)));
}

Expr sqrt_of(const Expr& e) {
  if (e.is_const() && e.const_value() >= 0.0) return kconst(std::sqrt(e.const_value()));
  ExprNode n;
  n.kind = ExprKind::Sqrt;
  n.kids = {e};
  return Expr(make_node(std::move(n)));
}

Expr apply(Prim p, const Expr& e) {
  if (e.is_const()) {
    double c = e.const_value();
    switch (p) {
      case Prim::Sin: return kconst(std::sin(c));
      case Prim::Cos: return kconst(std::cos(c));
      case Prim::Exp: return kconst(std::exp(c));
      case Prim::Log:
        if (c > 0.0) return kconst(std::log(c));
        break;
    }
  }
  ExprNode n;
  n.kind = ExprKind::Apply;
  n.prim = p;
  n.kids = {e};
  return Expr(make_node(std::move(n)));
}

namespace {
std::unordered_map<std::string, ExternalFn>& external_registry() {
  static std::unordered_map<std::string, ExternalFn> reg;
  return reg;
}
std::mutex& external_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

void register_external(const std::string& name, ExternalFn fn) {
  std::lock_guard<std::mutex> lock(external_mutex());
  external_registry()[name] = std::move(fn);
}

const ExternalFn* find_external(const std::string& name) {
  std::lock_guard<std::mutex> lock(external_mutex());
  auto it = external_registry().find(name);
  return it == external_registry().end() ? nullptr : &it->second;
}

Expr external(const std::string& name, std::vector<Expr> args) {
  if (!find_external(name))
    fail(ErrorKind::BadInput, "external function '" + name + "' is not registered");
  ExprNode n;
  n.kind = ExprKind::External;
  n.name = name;
  n.kids = std::move(args);
  return Expr(make_node(std::move(n)));
}

Expr diff(const Expr& e, CoordId var) {
  const ExprNode& n = e.node();
  switch (n.kind) {
    case ExprKind::Const:
      return kconst(0.0);
    case ExprKind::Coord:
      return kconst(n.coord == var ? 1.0 : 0.0);
    case ExprKind::Sum: {
      std::vector<Expr> parts;
      parts.reserve(n.kids.size());
      for (const auto& k : n.kids) parts.push_back(diff(k, var));
      return add(std::move(parts));
    }
    case ExprKind::Product: {
      std::vector<Expr> parts;
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        Expr di = diff(n.kids[i], var);
        if (di.is_zero()) continue;
        std::vector<Expr> fs;
        fs.reserve(n.kids.size());
        for (std::size_t j = 0; j < n.kids.size(); ++j)
          fs.push_back(j == i ? di : n.kids[j]);
        parts.push_back(mul(std::move(fs)));
      }
      return add(std::move(parts));
    }
    case ExprKind::Power: {
      Expr du = diff(n.kids[0], var);
      if (du.is_zero()) return kconst(0.0);
      return kconst(n.ipow) * ipow(n.kids[0], n.ipow - 1) * du;
    }
    case ExprKind::Neg:
      return neg(diff(n.kids[0], var));
    case ExprKind::Inv: {
      Expr du = diff(n.kids[0], var);
      if (du.is_zero()) return kconst(0.0);
      return neg(du * ipow(n.kids[0], -2));
    }
    case ExprKind::Sqrt: {
      Expr du = diff(n.kids[0], var);
      if (du.is_zero()) return kconst(0.0);
      return du * inv(2.0 * sqrt_of(n.kids[0]));
    }
    case ExprKind::Apply: {
      Expr du = diff(n.kids[0], var);
      if (du.is_zero()) return kconst(0.0);
      const Expr& u = n.kids[0];
      switch (n.prim) {
        case Prim::Sin: return apply(Prim::Cos, u) * du;
        case Prim::Cos: return neg(apply(Prim::Sin, u)) * du;
        case Prim::Exp: return apply(Prim::Exp, u) * du;
        case Prim::Log: return du * inv(u);
      }
      fail(ErrorKind::BadInput, "unknown primitive");
    }
    case ExprKind::External: {
      const ExternalFn* fn = find_external(n.name);
      if (!fn || !fn->partial)
        fail(ErrorKind::BadInput,
             "external function '" + n.name + "' has no registered derivative");
      std::vector<Expr> parts;
      for (std::size_t k = 0; k < n.kids.size(); ++k) {
        Expr dk = diff(n.kids[k], var);
        if (dk.is_zero()) continue;
        parts.push_back(fn->partial((int)k, n.kids) * dk);
      }
      return add(std::move(parts));
    }
  }
  fail(ErrorKind::BadInput, "unknown expression node");
}

namespace {

double eval_node(const ExprNode* n, const Valuation& at,
                 std::unordered_map<const ExprNode*, double>& memo) {
  if (n->kind == ExprKind::Const) return n->value;
  auto hit = memo.find(n);
  if (hit != memo.end()) return hit->second;
  double r = 0.0;
  switch (n->kind) {
    case ExprKind::Const:
      r = n->value;
      break;
    case ExprKind::Coord: {
      auto it = at.find(n->coord);
      if (it == at.end())
        fail(ErrorKind::MissingCoordinate,
             "no value assigned to coordinate " + default_coord_name(n->coord));
      r = it->second;
      break;
    }
    case ExprKind::Sum:
      for (const auto& k : n->kids) r += eval_node(k.raw(), at, memo);
      break;
    case ExprKind::Product:
      r = 1.0;
      for (const auto& k : n->kids) r *= eval_node(k.raw(), at, memo);
      break;
    case ExprKind::Power: {
      double u = eval_node(n->kids[0].raw(), at, memo);
      if (u == 0.0 && n->ipow < 0)
        fail(ErrorKind::DomainError, "zero raised to a negative power");
      r = std::pow(u, n->ipow);
      break;
    }
    case ExprKind::Neg:
      r = -eval_node(n->kids[0].raw(), at, memo);
      break;
    case ExprKind::Inv: {
      double u = eval_node(n->kids[0].raw(), at, memo);
      if (u == 0.0) fail(ErrorKind::DomainError, "division by zero");
      r = 1.0 / u;
      break;
    }
    case ExprKind::Sqrt: {
      double u = eval_node(n->kids[0].raw(), at, memo);
      if (u < 0.0) fail(ErrorKind::DomainError, "sqrt of a negative value");
      r = std::sqrt(u);
      break;
    }
    case ExprKind::Apply: {
      double u = eval_node(n->kids[0].raw(), at, memo);
      switch (n->prim) {
        case Prim::Sin: r = std::sin(u); break;
        case Prim::Cos: r = std::cos(u); break;
        case Prim::Exp: r = std::exp(u); break;
        case Prim::Log:
          if (u <= 0.0) fail(ErrorKind::DomainError, "log of a non-positive value");
          r = std::log(u);
          break;
      }
      break;
    }
    case ExprKind::External: {
      const ExternalFn* fn = find_external(n->name);
      if (!fn || !fn->eval)
        fail(ErrorKind::BadInput, "external function '" + n->name + "' is not registered");
      std::vector<double> args;
      args.reserve(n->kids.size());
      for (const auto& k : n->kids) args.push_back(eval_node(k.raw(), at, memo));
      r = fn->eval(args);
      break;
    }
  }
  memo.emplace(n, r);
  return r;
}

}  // namespace

double eval(const Expr& e, const Valuation& at) {
  std::unordered_map<const ExprNode*, double> memo;
  return eval_node(e.raw(), at, memo);
}

double EvalCache::eval(const Expr& e, const Valuation& at) {
  return eval_node(e.raw(), at, memo_);
}

void collect_coords(const Expr& e, std::set<CoordId>& out) {
  const ExprNode& n = e.node();
  if (n.kind == ExprKind::Coord) out.insert(n.coord);
  for (const auto& k : n.kids) collect_coords(k, out);
}

std::set<CoordId> coords_of(const Expr& e) {
  std::set<CoordId> s;
  collect_coords(e, s);
  return s;
}

bool depends_on(const Expr& e, CoordId var) {
  const ExprNode& n = e.node();
  if (n.kind == ExprKind::Coord) return n.coord == var;
  for (const auto& k : n.kids)
    if (depends_on(k, var)) return true;
  return false;
}

Expr substitute(const Expr& e,
                const std::unordered_map<CoordId, Expr, CoordIdHash>& repl) {
  const ExprNode& n = e.node();
  switch (n.kind) {
    case ExprKind::Const:
      return e;
    case ExprKind::Coord: {
      auto it = repl.find(n.coord);
      return it == repl.end() ? e : it->second;
    }
    default: {
      std::vector<Expr> kids;
      kids.reserve(n.kids.size());
      bool changed = false;
      for (const auto& k : n.kids) {
        Expr s = substitute(k, repl);
        changed = changed || s.raw() != k.raw();
        kids.push_back(std::move(s));
      }
      if (!changed) return e;
      switch (n.kind) {
        case ExprKind::Sum: return add(std::move(kids));
        case ExprKind::Product: return mul(std::move(kids));
        case ExprKind::Power: return ipow(kids[0], n.ipow);
        case ExprKind::Neg: return neg(kids[0]);
        case ExprKind::Inv: return inv(kids[0]);
        case ExprKind::Sqrt: return sqrt_of(kids[0]);
        case ExprKind::Apply: return apply(n.prim, kids[0]);
        case ExprKind::External: return external(n.name, std::move(kids));
        default: fail(ErrorKind::BadInput, "unexpected node in substitute");
      }
    }
  }
}

bool same_structure(const Expr& a, const Expr& b) {
  if (a.raw() == b.raw()) return true;
  const ExprNode& x = a.node();
  const ExprNode& y = b.node();
  if (x.kind != y.kind || x.kids.size() != y.kids.size()) return false;
  switch (x.kind) {
    case ExprKind::Const:
      if (x.value != y.value) return false;
      break;
    case ExprKind::Coord:
      if (!(x.coord == y.coord)) return false;
      break;
    case ExprKind::Power:
      if (x.ipow != y.ipow) return false;
      break;
    case ExprKind::Apply:
      if (x.prim != y.prim) return false;
      break;
    case ExprKind::External:
      if (x.name != y.name) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < x.kids.size(); ++i)
    if (!same_structure(x.kids[i], y.kids[i])) return false;
  return true;
}

std::size_t node_count(const Expr& e) {
  std::size_t c = 1;
  for (const auto& k : e.node().kids) c += node_count(k);
  return c;
}

std::string default_coord_name(CoordId id) {
  switch (id.space) {
    case Space::Base: return "x[" + std::to_string(id.a) + "]";
    case Space::Fiber: return "u[" + std::to_string(id.a) + "]";
    case Space::Jet:
      return "u[" + std::to_string(id.a) + "," + std::to_string(id.b) + "]";
    case Space::MomentumP: return "p";
    case Space::MomentumPmu:
      return "pu[" + std::to_string(id.a) + "," + std::to_string(id.b) + "]";
  }
  return "?";
}

namespace {

std::string const_repr(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general);
  return std::string(buf, res.ptr);
}

// precedence: sum < product < unary < power < atom
enum Prec { PrecSum = 0, PrecProduct = 1, PrecUnary = 2, PrecPower = 3, PrecAtom = 4 };

int prec_of(const ExprNode& n) {
  switch (n.kind) {
    case ExprKind::Sum: return PrecSum;
    case ExprKind::Neg: return PrecUnary;
    case ExprKind::Product:
    case ExprKind::Inv: return PrecProduct;
    case ExprKind::Power: return PrecPower;
    case ExprKind::Const:
      return n.value < 0.0 ? PrecUnary : PrecAtom;
    default: return PrecAtom;
  }
}

std::string print(const Expr& e, const CoordNamer& namer, int parent_prec);

std::string print_wrapped(const Expr& e, const CoordNamer& namer, int parent_prec) {
  std::string s = print(e, namer, parent_prec);
  if (prec_of(e.node()) < parent_prec) return "(" + s + ")";
  return s;
}

std::string print(const Expr& e, const CoordNamer& namer, int) {
  const ExprNode& n = e.node();
  switch (n.kind) {
    case ExprKind::Const:
      return const_repr(n.value);
    case ExprKind::Coord:
      return namer(n.coord);
    case ExprKind::Sum: {
      std::string s;
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        const Expr& k = n.kids[i];
        if (i == 0) {
          s = print_wrapped(k, namer, PrecSum);
          continue;
        }
        if (k.kind() == ExprKind::Neg) {
          s += " - " + print_wrapped(k.node().kids[0], namer, PrecProduct + 1);
        } else if (k.is_const() && k.const_value() < 0.0) {
          s += " - " + const_repr(-k.const_value());
        } else {
          s += " + " + print_wrapped(k, namer, PrecSum + 1);
        }
      }
      return s;
    }
    case ExprKind::Product: {
      std::vector<const Expr*> num;
      std::vector<const Expr*> den;
      for (const auto& k : n.kids) {
        if (k.kind() == ExprKind::Inv)
          den.push_back(&k.node().kids[0]);
        else
          num.push_back(&k);
      }
      std::string s;
      if (num.empty()) {
        s = "1";
      } else {
        for (std::size_t i = 0; i < num.size(); ++i) {
          if (i) s += "*";
          s += print_wrapped(*num[i], namer, PrecProduct + 1);
        }
      }
      for (const auto* d : den) s += "/" + print_wrapped(*d, namer, PrecPower);
      return s;
    }
    case ExprKind::Power: {
      std::string b = print_wrapped(n.kids[0], namer, PrecAtom);
      return b + "^" + std::to_string(n.ipow);
    }
    case ExprKind::Neg:
      return "-" + print_wrapped(n.kids[0], namer, PrecProduct + 1);
    case ExprKind::Inv:
      return "1/" + print_wrapped(n.kids[0], namer, PrecPower);
    case ExprKind::Sqrt:
      return "sqrt(" + print(n.kids[0], namer, PrecSum) + ")";
    case ExprKind::Apply: {
      const char* f = "?";
      switch (n.prim) {
        case Prim::Sin: f = "sin"; break;
        case Prim::Cos: f = "cos"; break;
        case Prim::Exp: f = "exp"; break;
        case Prim::Log: f = "log"; break;
      }
      return std::string(f) + "(" + print(n.kids[0], namer, PrecSum) + ")";
    }
    case ExprKind::External: {
      std::string s = n.name + "(";
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        if (i) s += ", ";
        s += print(n.kids[i], namer, PrecSum);
      }
      return s + ")";
    }
  }
  return "?";
}

}  // namespace

std::string to_string(const Expr& e, const CoordNamer& namer) {
  return print(e, namer, PrecSum);
}

}  // namespace fieldlab
