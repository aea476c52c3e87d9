#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace fieldlab {

// Coordinate address on a bundle chart. `a` is the flat fiber index for
// Fiber/Jet/MomentumPmu coordinates, the base index for Base; `b` is the
// base index of Jet/MomentumPmu coordinates.
enum class Space : std::uint8_t {
  Base,
  Fiber,
  Jet,
  MomentumP,
  MomentumPmu,
};

struct CoordId {
  Space space = Space::Base;
  std::int16_t a = 0;
  std::int16_t b = 0;
  friend bool operator==(const CoordId&, const CoordId&) = default;
  friend auto operator<=>(const CoordId&, const CoordId&) = default;
};

inline CoordId base_coord(int mu) { return {Space::Base, (std::int16_t)mu, 0}; }
inline CoordId fiber_coord(int i) { return {Space::Fiber, (std::int16_t)i, 0}; }
inline CoordId jet_coord(int i, int mu) {
  return {Space::Jet, (std::int16_t)i, (std::int16_t)mu};
}
inline CoordId momentum_p() { return {Space::MomentumP, 0, 0}; }
inline CoordId momentum_pmu(int i, int mu) {
  return {Space::MomentumPmu, (std::int16_t)i, (std::int16_t)mu};
}

struct CoordIdHash {
  std::size_t operator()(const CoordId& c) const {
    return (std::size_t(c.space) << 32) ^ (std::size_t(std::uint16_t(c.a)) << 16) ^
           std::size_t(std::uint16_t(c.b));
  }
};

using Valuation = std::unordered_map<CoordId, double, CoordIdHash>;

enum class ExprKind : std::uint8_t {
  Const,
  Coord,
  Sum,
  Product,
  Power,   // integer exponent, never 0 or 1 after folding
  Neg,
  Inv,
  Sqrt,
  Apply,   // unary primitive
  External,
};

enum class Prim : std::uint8_t { Sin, Cos, Exp, Log };

struct ExprNode;

// Immutable expression handle. Default-constructed value is the constant 0.
class Expr {
 public:
  Expr();
  explicit Expr(std::shared_ptr<const ExprNode> n) : n_(std::move(n)) {}

  const ExprNode& node() const { return *n_; }
  const ExprNode* raw() const { return n_.get(); }
  ExprKind kind() const;

  bool is_const() const;
  double const_value() const;  // requires is_const()
  bool is_zero() const;
  bool is_one() const;

 private:
  std::shared_ptr<const ExprNode> n_;
};

struct ExprNode {
  ExprKind kind;
  double value = 0.0;           // Const
  CoordId coord;                // Coord
  int ipow = 0;                 // Power
  Prim prim = Prim::Sin;        // Apply
  std::string name;             // External
  std::vector<Expr> kids;
};

// Folding constructors. All expression construction funnels through these,
// which maintain the normal form: sums/products are flattened with constants
// merged, zero/one identities applied, Neg(Neg(x)) and Inv(Inv(x)) collapsed,
// products never contain Neg children (the sign is pulled out front), and
// Power exponents are nonzero integers != 1.
Expr kconst(double v);
Expr kcoord(CoordId id);
Expr add(std::vector<Expr> terms);
Expr mul(std::vector<Expr> factors);
Expr neg(const Expr& e);
Expr inv(const Expr& e);
Expr ipow(const Expr& e, int k);
Expr sqrt_of(const Expr& e);
Expr apply(Prim p, const Expr& e);
Expr external(const std::string& name, std::vector<Expr> args);

inline Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
inline Expr operator-(const Expr& a, const Expr& b) { return add({a, neg(b)}); }
inline Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
inline Expr operator/(const Expr& a, const Expr& b) { return mul({a, inv(b)}); }
inline Expr operator-(const Expr& a) { return neg(a); }
inline Expr operator+(double a, const Expr& b) { return kconst(a) + b; }
inline Expr operator+(const Expr& a, double b) { return a + kconst(b); }
inline Expr operator-(double a, const Expr& b) { return kconst(a) - b; }
inline Expr operator-(const Expr& a, double b) { return a - kconst(b); }
inline Expr operator*(double a, const Expr& b) { return kconst(a) * b; }
inline Expr operator*(const Expr& a, double b) { return a * kconst(b); }
inline Expr operator/(double a, const Expr& b) { return kconst(a) / b; }
inline Expr operator/(const Expr& a, double b) { return a / kconst(b); }

// External scalar functions: numeric body plus symbolic partials for diff().
// partial(k, args) must return d(name)/d(arg k) as an expression in args.
struct ExternalFn {
  std::function<double(const std::vector<double>&)> eval;
  std::function<Expr(int, const std::vector<Expr>&)> partial;
};
void register_external(const std::string& name, ExternalFn fn);
const ExternalFn* find_external(const std::string& name);

Expr diff(const Expr& e, CoordId var);

// Evaluation memoizes on shared subtrees within one call. Missing
// coordinates raise MissingCoordinate; log/sqrt/x^-k domain violations raise
// DomainError. Factors are never short-circuited, so a domain error in any
// factor propagates even when another factor is zero.
double eval(const Expr& e, const Valuation& at);

class EvalCache {
 public:
  double eval(const Expr& e, const Valuation& at);
  void clear() { memo_.clear(); }

 private:
  std::unordered_map<const ExprNode*, double> memo_;
};

void collect_coords(const Expr& e, std::set<CoordId>& out);
std::set<CoordId> coords_of(const Expr& e);
bool depends_on(const Expr& e, CoordId var);

Expr substitute(const Expr& e,
                const std::unordered_map<CoordId, Expr, CoordIdHash>& repl);

bool same_structure(const Expr& a, const Expr& b);
std::size_t node_count(const Expr& e);

using CoordNamer = std::function<std::string(CoordId)>;
std::string default_coord_name(CoordId id);
std::string to_string(const Expr& e, const CoordNamer& namer = default_coord_name);

}  // namespace fieldlab
