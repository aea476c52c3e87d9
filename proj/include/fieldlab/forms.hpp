#pragma once

#include <map>
#include <vector>

#include "fieldlab/chart.hpp"
#include "fieldlab/equiv.hpp"
#include "fieldlab/errors.hpp"
#include "fieldlab/expr.hpp"
#include "fieldlab/linalg.hpp"

namespace fieldlab {

template <class S>
struct ScalarOps;

template <>
struct ScalarOps<double> {
  static double zero() { return 0.0; }
  static bool is_zero(double v) { return v == 0.0; }
  static double add(double a, double b) { return a + b; }
  static double mul(double a, double b) { return a * b; }
  static double neg(double a) { return -a; }
};

template <>
struct ScalarOps<Expr> {
  static Expr zero() { return Expr(); }
  static bool is_zero(const Expr& e) { return e.is_zero(); }
  static Expr add(const Expr& a, const Expr& b) { return a + b; }
  static Expr mul(const Expr& a, const Expr& b) { return a * b; }
  static Expr neg(const Expr& e) { return fieldlab::neg(e); }
};

// Exterior form on a layer, stored as strictly increasing coordinate-index
// tuples with scalar coefficients. Zero coefficients are dropped eagerly for
// doubles and when structurally zero for expressions.
template <class S>
class Form {
 public:
  using Index = std::vector<int>;

  Form() = default;
  Form(LayerPtr layer, int degree) : layer_(std::move(layer)), degree_(degree) {
    if (degree_ < 0 || degree_ > (layer_ ? layer_->dim() : 0))
      fail(ErrorKind::DegreeMismatch, "form degree out of range");
  }

  LayerPtr layer() const { return layer_; }
  int degree() const { return degree_; }
  const std::map<Index, S>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  // Adds coeff * dw_{idx[0]} ^ ... ^ dw_{idx[k-1]}, sorting the tuple and
  // tracking the permutation sign; tuples with a repeated index vanish.
  void add_term(Index idx, S coeff) {
    if ((int)idx.size() != degree_)
      fail(ErrorKind::DegreeMismatch, "term arity does not match form degree");
    if (ScalarOps<S>::is_zero(coeff)) return;
    bool negate = false;
    for (std::size_t i = 1; i < idx.size(); ++i) {
      for (std::size_t j = i; j > 0 && idx[j - 1] >= idx[j]; --j) {
        if (idx[j - 1] == idx[j]) return;
        std::swap(idx[j - 1], idx[j]);
        negate = !negate;
      }
    }
    for (int v : idx)
      if (v < 0 || v >= layer_->dim())
        fail(ErrorKind::DegreeMismatch, "coordinate index out of layer range");
    if (negate) coeff = ScalarOps<S>::neg(coeff);
    auto it = terms_.find(idx);
    if (it == terms_.end()) {
      terms_.emplace(std::move(idx), std::move(coeff));
    } else {
      it->second = ScalarOps<S>::add(it->second, coeff);
      if (ScalarOps<S>::is_zero(it->second)) terms_.erase(it);
    }
  }

  const S* coefficient(const Index& sorted_idx) const {
    auto it = terms_.find(sorted_idx);
    return it == terms_.end() ? nullptr : &it->second;
  }

 private:
  LayerPtr layer_;
  int degree_ = 0;
  std::map<Index, S> terms_;
};

using FormX = Form<Expr>;
using FormD = Form<double>;

template <class S>
void check_same_layer(const Form<S>& a, const Form<S>& b) {
  if (a.layer() != b.layer())
    fail(ErrorKind::LayerMismatch, "forms live on different layers");
}

template <class S>
Form<S> operator+(const Form<S>& a, const Form<S>& b) {
  check_same_layer(a, b);
  if (a.degree() != b.degree())
    fail(ErrorKind::DegreeMismatch, "cannot add forms of different degree");
  Form<S> out = a;
  for (const auto& [idx, c] : b.terms()) out.add_term(idx, c);
  return out;
}

template <class S>
Form<S> operator-(const Form<S>& a, const Form<S>& b) {
  check_same_layer(a, b);
  if (a.degree() != b.degree())
    fail(ErrorKind::DegreeMismatch, "cannot subtract forms of different degree");
  Form<S> out = a;
  for (const auto& [idx, c] : b.terms()) out.add_term(idx, ScalarOps<S>::neg(c));
  return out;
}

template <class S, class T>
Form<S> scale(const T& s, const Form<S>& a) {
  Form<S> out(a.layer(), a.degree());
  for (const auto& [idx, c] : a.terms()) out.add_term(idx, ScalarOps<S>::mul(S(s), c));
  return out;
}

template <class S>
Form<S> operator-(const Form<S>& a) {
  Form<S> out(a.layer(), a.degree());
  for (const auto& [idx, c] : a.terms()) out.add_term(idx, ScalarOps<S>::neg(c));
  return out;
}

template <class S>
Form<S> wedge(const Form<S>& a, const Form<S>& b) {
  check_same_layer(a, b);
  Form<S> out(a.layer(), a.degree() + b.degree());
  for (const auto& [ia, ca] : a.terms()) {
    for (const auto& [ib, cb] : b.terms()) {
      typename Form<S>::Index idx = ia;
      idx.insert(idx.end(), ib.begin(), ib.end());
      out.add_term(std::move(idx), ScalarOps<S>::mul(ca, cb));
    }
  }
  return out;
}

// Vector field on a layer: components over the layer's coordinates.
template <class S>
struct VectorField {
  LayerPtr layer;
  std::map<int, S> comps;

  void set(int pos, S v) {
    if (!ScalarOps<S>::is_zero(v)) comps[pos] = std::move(v);
  }
};

// (1,1)-tensor T = T^a_b dw^b (x) d/dw^a on a layer, kept sparse by rows.
template <class S>
struct LinearOperator {
  LayerPtr layer;
  // rows[a] lists (b, T^a_b)
  std::vector<std::vector<std::pair<int, S>>> rows;

  explicit LinearOperator(LayerPtr l) : layer(std::move(l)) {
    rows.resize(layer->dim());
  }
  void add_entry(int a, int b, S v) {
    if (!ScalarOps<S>::is_zero(v)) rows[a].emplace_back(b, std::move(v));
  }
};

template <class S>
Form<S> contract_vector(const Form<S>& w, const VectorField<S>& v) {
  if (w.layer() != v.layer)
    fail(ErrorKind::LayerMismatch, "vector field lives on a different layer");
  if (w.degree() == 0)
    fail(ErrorKind::DegreeMismatch, "cannot contract a 0-form");
  Form<S> out(w.layer(), w.degree() - 1);
  for (const auto& [idx, c] : w.terms()) {
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto it = v.comps.find(idx[r]);
      if (it == v.comps.end()) continue;
      typename Form<S>::Index rest;
      rest.reserve(idx.size() - 1);
      for (std::size_t j = 0; j < idx.size(); ++j)
        if (j != r) rest.push_back(idx[j]);
      S val = ScalarOps<S>::mul(c, it->second);
      if (r % 2) val = ScalarOps<S>::neg(val);
      out.add_term(std::move(rest), std::move(val));
    }
  }
  return out;
}

// Degree-preserving insertion of a (1,1)-tensor: each slot of every term is
// replaced through the tensor in turn and the results are summed. For a
// k-form w and tensor T this realizes sum_r w(..., T(slot r), ...).
template <class S>
Form<S> contract_operator(const Form<S>& w, const LinearOperator<S>& T) {
  if (w.layer() != T.layer)
    fail(ErrorKind::LayerMismatch, "operator lives on a different layer");
  Form<S> out(w.layer(), w.degree());
  for (const auto& [idx, c] : w.terms()) {
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (const auto& [b, t] : T.rows[idx[r]]) {
        typename Form<S>::Index repl = idx;
        repl[r] = b;
        out.add_term(std::move(repl), ScalarOps<S>::mul(c, t));
      }
    }
  }
  return out;
}

inline FormX exterior_d(const FormX& w) {
  FormX out(w.layer(), w.degree() + 1);
  const Layer& layer = *w.layer();
  for (const auto& [idx, c] : w.terms()) {
    for (int a = 0; a < layer.dim(); ++a) {
      Expr dc = diff(c, layer.coords[a]);
      if (dc.is_zero()) continue;
      FormX::Index ext;
      ext.reserve(idx.size() + 1);
      ext.push_back(a);
      ext.insert(ext.end(), idx.begin(), idx.end());
      out.add_term(std::move(ext), std::move(dc));
    }
  }
  return out;
}

inline FormX d_of_function(const Expr& f, const LayerPtr& layer) {
  FormX w(layer, 0);
  if (!f.is_zero()) w.add_term({}, f);
  return exterior_d(w);
}

inline FormD evaluate_form(const FormX& w, const Valuation& at) {
  FormD out(w.layer(), w.degree());
  EvalCache cache;
  for (const auto& [idx, c] : w.terms()) out.add_term(idx, cache.eval(c, at));
  return out;
}

// dx^0 ^ ... ^ dx^{n-1}; layers always put the base coordinates first.
inline FormX volume_form(const LayerPtr& layer) {
  int n = layer->chart->n();
  FormX w(layer, n);
  FormX::Index idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  w.add_term(idx, kconst(1.0));
  return w;
}

// Contraction of the volume form with d/dx^mu: the (n-1)-form that pairs
// with dx^mu to give the volume form back.
inline FormX volume_contracted(const LayerPtr& layer, int mu) {
  int n = layer->chart->n();
  if (mu < 0 || mu >= n) fail(ErrorKind::BadInput, "base index out of range");
  FormX w(layer, n - 1);
  FormX::Index idx;
  for (int i = 0; i < n; ++i)
    if (i != mu) idx.push_back(i);
  Expr sign = (mu % 2) ? kconst(-1.0) : kconst(1.0);
  w.add_term(idx, sign);
  return w;
}

// Evaluates a numeric k-form on k column vectors.
inline double form_on_vectors(const FormD& w, const Eigen::MatrixXd& vecs) {
  if (vecs.cols() != w.degree())
    fail(ErrorKind::DegreeMismatch, "number of vectors must match form degree");
  double total = 0.0;
  Eigen::MatrixXd minor(w.degree(), w.degree());
  for (const auto& [idx, c] : w.terms()) {
    for (int r = 0; r < (int)idx.size(); ++r)
      for (int j = 0; j < (int)idx.size(); ++j) minor(r, j) = vecs(idx[r], j);
    total += c * minor.determinant();
  }
  return total;
}

// Pullback along a map given per-target-coordinate expressions over the
// source layer. `images[t]` is the pullback of the target layer's t-th
// coordinate.
inline FormX pullback(const FormX& w, const LayerPtr& source,
                      const std::vector<Expr>& images) {
  const Layer& target = *w.layer();
  if ((int)images.size() != target.dim())
    fail(ErrorKind::BadInput, "pullback needs one image per target coordinate");
  std::unordered_map<CoordId, Expr, CoordIdHash> repl;
  for (int t = 0; t < target.dim(); ++t) repl[target.coords[t]] = images[t];
  // differentials of the coordinate images, as 1-forms on the source
  std::vector<FormX> dimg;
  dimg.reserve(images.size());
  for (const auto& im : images) dimg.push_back(d_of_function(im, source));
  FormX out(source, w.degree());
  for (const auto& [idx, c] : w.terms()) {
    FormX part(source, 0);
    part.add_term({}, substitute(c, repl));
    for (int t : idx) part = wedge(part, dimg[t]);
    out = out + part;
  }
  return out;
}

// From the differential of a jet-layer function F, builds
//   sum_{i,nu} (dF/dz^i_nu) (dy^i - z^i_mu dx^mu) ^ (i_{d/dx^nu} volume),
// the vertical pairing that tilts the fiber differentials by the velocity
// gradient. Adding F * volume yields the canonical n-form of the theory.
inline FormX vertical_pairing(const FormX& dF) {
  if (dF.degree() != 1)
    fail(ErrorKind::DegreeMismatch, "vertical pairing expects a 1-form");
  LayerPtr layer = dF.layer();
  const BundleChart& chart = *layer->chart;
  int n = chart.n();
  FormX out(layer, n);
  std::vector<FormX> alpha;  // dy^i - z^i_mu dx^mu, built lazily per fiber
  alpha.resize(chart.m());
  std::vector<bool> built(chart.m(), false);
  for (const auto& [idx, c] : dF.terms()) {
    CoordId w = layer->coords[idx[0]];
    if (w.space != Space::Jet) continue;
    int i = w.a, nu = w.b;
    if (!built[i]) {
      FormX a(layer, 1);
      a.add_term({layer->position(fiber_coord(i))}, kconst(1.0));
      for (int mu = 0; mu < n; ++mu)
        a.add_term({layer->position(base_coord(mu))},
                    neg(kcoord(jet_coord(i, mu))));
      alpha[i] = a;
      built[i] = true;
    }
    out = out + scale(c, wedge(alpha[i], volume_contracted(layer, nu)));
  }
  return out;
}

// Entrywise idempotency of a (1,1)-tensor, h compose h = h, checked by
// probabilistic equivalence.
inline bool is_idempotent(const LinearOperator<Expr>& h,
                          const EquivOptions& eq = {}) {
  int dim = h.layer->dim();
  std::vector<std::map<int, Expr>> sq(dim);
  for (int a = 0; a < dim; ++a) {
    for (const auto& [c, hac] : h.rows[a]) {
      for (const auto& [b, hcb] : h.rows[c]) {
        auto it = sq[a].find(b);
        if (it == sq[a].end())
          sq[a][b] = hac * hcb;
        else
          it->second = it->second + hac * hcb;
      }
    }
  }
  for (int a = 0; a < dim; ++a) {
    std::map<int, Expr> direct;
    for (const auto& [b, v] : h.rows[a]) {
      auto it = direct.find(b);
      if (it == direct.end())
        direct[b] = v;
      else
        it->second = it->second + v;
    }
    for (const auto& [b, v] : sq[a]) {
      auto it = direct.find(b);
      Expr want = it == direct.end() ? Expr() : it->second;
      if (!equiv_probabilistic(v, want, eq)) return false;
    }
    for (const auto& [b, v] : direct) {
      if (!sq[a].count(b) && !equiv_zero(v, eq)) return false;
    }
  }
  return true;
}

// Numeric nondegeneracy of a closed (k)-form at given points: the linear map
// v -> i_v(w) must have trivial kernel. Closedness is checked symbolically
// via probabilistic equivalence of dw's coefficients to zero.
struct NondegeneracyReport {
  bool closed = false;
  bool nondegenerate = false;
  std::vector<int> kernel_dims;
};

inline NondegeneracyReport check_form_kernel(const FormX& w,
                                             const std::vector<Valuation>& pts,
                                             double floor_rel = 1e-9,
                                             const EquivOptions& eq = {}) {
  NondegeneracyReport rep;
  FormX dw = exterior_d(w);
  rep.closed = true;
  for (const auto& [idx, c] : dw.terms()) {
    (void)idx;
    if (!equiv_zero(c, eq)) {
      rep.closed = false;
      break;
    }
  }
  int dim = w.layer()->dim();
  rep.nondegenerate = true;
  for (const auto& at : pts) {
    FormD num = evaluate_form(w, at);
    // rows indexed by (k-1)-tuples occurring in contractions
    std::map<std::vector<int>, int> row_of;
    struct Entry {
      int row, col;
      double val;
    };
    std::vector<Entry> entries;
    for (const auto& [idx, c] : num.terms()) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        std::vector<int> rest;
        rest.reserve(idx.size() - 1);
        for (std::size_t j = 0; j < idx.size(); ++j)
          if (j != r) rest.push_back(idx[j]);
        auto [it, fresh] = row_of.emplace(rest, (int)row_of.size());
        (void)fresh;
        double sign = (r % 2) ? -1.0 : 1.0;
        entries.push_back({it->second, idx[r], sign * c});
      }
    }
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero((int)row_of.size(), dim);
    for (const Entry& e : entries) M(e.row, e.col) += e.val;
    RankInfo info = numerical_rank(M, floor_rel);
    rep.kernel_dims.push_back(dim - info.rank);
    if (info.rank < dim) rep.nondegenerate = false;
  }
  return rep;
}

// True iff w is closed and v -> i_v(w) is injective at every point. The rank
// threshold is relative to the largest singular value with floor tol.
inline bool is_multisymplectic(const FormX& w, const std::vector<Valuation>& pts,
                               double tol = 1e-9) {
  if (w.degree() < 2)
    fail(ErrorKind::DegreeMismatch, "nondegeneracy test expects degree >= 2");
  NondegeneracyReport rep = check_form_kernel(w, pts, tol);
  if (!rep.closed) fail(ErrorKind::NotClosed, "the form is not closed");
  return rep.nondegenerate;
}

// True iff eta ^ w^k (with layer dimension 2k+1) is a volume form at every
// point, both forms being closed.
inline bool is_cosymplectic(const FormX& w, const FormX& eta,
                            const std::vector<Valuation>& pts,
                            double tol = 1e-9) {
  if (w.degree() != 2 || eta.degree() != 1)
    fail(ErrorKind::DegreeMismatch, "cosymplectic test expects a 2-form and a 1-form");
  check_same_layer(w, eta);
  int dim = w.layer()->dim();
  if (dim % 2 == 0 || dim < 3)
    fail(ErrorKind::DegreeMismatch, "cosymplectic layers have odd dimension >= 3");
  for (const FormX* f : {&w, &eta}) {
    FormX df = exterior_d(*f);
    for (const auto& [idx, c] : df.terms()) {
      (void)idx;
      if (!equiv_zero(c)) fail(ErrorKind::NotClosed, "the form is not closed");
    }
  }
  int k = (dim - 1) / 2;
  FormX top = eta;
  for (int i = 0; i < k; ++i) top = wedge(top, w);
  for (const auto& at : pts) {
    FormD num = evaluate_form(top, at);
    double v = num.terms().empty() ? 0.0 : num.terms().begin()->second;
    if (std::abs(v) <= tol) return false;
  }
  return true;
}

}  // namespace fieldlab
