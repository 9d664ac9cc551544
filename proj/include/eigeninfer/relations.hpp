#pragma once

#include <algorithm>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eigeninfer/moments.hpp"
#include "eigeninfer/series.hpp"
#include "eigeninfer/towers.hpp"

namespace eigeninfer {

// Exact-rational relation tables.
//
// Tower kinds expand one side of a moment tower in the other side's moments:
// the target M[k] is a polynomial in the source moments a1..aK and the
// rectangularity symbol (r, or t = 1/(1-r) for the dual forward kind, which
// keeps those relations polynomial).
//
// Double kinds expand the O(1) covariance of traces, C[i,j] standing for
// cov(tr S^i, tr S^j) (dual: inverse traces), as a polynomial in the S
// moments a1..a_{2k} (dual: a2..a_{2k+2} over a denominator a2^(i+j)).
// The engine is the bivariate log identity
//     C[i,j] = i j [x^i y^j] ln(1 + sum_K c_K h_K(x,y)),
//     h_K(x,y) = sum_{a+b=K} x^a y^b,
// with c_K = a_K for the normal family and c_K = a_{K+2}/a2 for the dual.
//
// Serialized form (stable: terms sorted by total degree then lexicographic
// exponents; coefficients exact rationals):
//   # relation-table kind=<kind> order=<K>
//   # vars <v0> <v1> ...
//   M[2] = 1 [0,0,1] + 1 [1,2,0]
//   C[1,2] = 2 [3,0,0,0] - 4 [1,1,0,0] + 2 [0,0,1,0] / a2^3

enum class RelationKind {
  ForwardTower,
  BackwardTower,
  DualForwardTower,
  DualBackwardTower,
  DoubleMoment,
  DualDoubleMoment,
};

struct Relation {
  int i = 0;  // tower order, or first trace power
  int j = 0;  // second trace power (double kinds), 0 for towers
  Polynomial value;
  int denominator_power = 0;  // power of a2 dividing value (dual-double only)
};

struct RelationTable {
  RelationKind kind = RelationKind::ForwardTower;
  int order = 0;
  std::vector<std::string> variables;
  std::vector<Relation> relations;
};

inline const char* relation_kind_name(RelationKind kind) {
  switch (kind) {
    case RelationKind::ForwardTower: return "forward-tower";
    case RelationKind::BackwardTower: return "backward-tower";
    case RelationKind::DualForwardTower: return "dual-forward-tower";
    case RelationKind::DualBackwardTower: return "dual-backward-tower";
    case RelationKind::DoubleMoment: return "double";
    case RelationKind::DualDoubleMoment: return "dual-double";
  }
  return "?";
}

inline bool parse_relation_kind(const std::string& name, RelationKind& out) {
  for (RelationKind k : {RelationKind::ForwardTower, RelationKind::BackwardTower,
                         RelationKind::DualForwardTower, RelationKind::DualBackwardTower,
                         RelationKind::DoubleMoment, RelationKind::DualDoubleMoment}) {
    if (name == relation_kind_name(k)) {
      out = k;
      return true;
    }
  }
  return false;
}

namespace detail {

// Dense bivariate series over Polynomial coefficients, truncated to the
// rectangle [0..nx] x [0..ny].
struct Bivariate {
  int nx = 0, ny = 0;
  std::vector<Polynomial> c;

  Bivariate(int nx_, int ny_, int nvars)
      : nx(nx_), ny(ny_),
        c(static_cast<std::size_t>((nx_ + 1) * (ny_ + 1)), Polynomial(nvars)) {}

  Polynomial& at(int i, int j) { return c[static_cast<std::size_t>(i * (ny + 1) + j)]; }
  const Polynomial& at(int i, int j) const {
    return c[static_cast<std::size_t>(i * (ny + 1) + j)];
  }
};

inline Bivariate bivariate_mul(const Bivariate& a, const Bivariate& b, int nvars) {
  Bivariate s(a.nx, a.ny, nvars);
  for (int i = 0; i <= a.nx; ++i)
    for (int j = 0; j <= a.ny; ++j) {
      if (a.at(i, j).is_zero()) continue;
      for (int p = 0; i + p <= a.nx; ++p)
        for (int q = 0; j + q <= a.ny; ++q) {
          if (b.at(p, q).is_zero()) continue;
          s.at(i + p, j + q) += a.at(i, j) * b.at(p, q);
        }
    }
  return s;
}

// ln(1 + P) for P with zero constant cell, via the alternating power sum.
inline Bivariate bivariate_log1p(const Bivariate& p, int nvars) {
  Bivariate acc(p.nx, p.ny, nvars);
  Bivariate pw = p;
  const int nmax = p.nx + p.ny;
  for (int n = 1; n <= nmax; ++n) {
    if (n > 1) pw = bivariate_mul(pw, p, nvars);
    Rational coef = frac(n % 2 == 1 ? 1 : -1, n);
    for (int i = 0; i <= p.nx; ++i)
      for (int j = 0; j <= p.ny; ++j)
        if (!pw.at(i, j).is_zero()) acc.at(i, j) += pw.at(i, j) * coef;
  }
  return acc;
}

// Log-derivative engine over generic symbols v1..v_{2k}; the caller remaps
// the symbols onto the actual moment variables afterwards.
inline std::vector<Relation> double_moment_engine(int k) {
  const int nvars = 2 * k;
  Bivariate p(k, k, nvars);
  for (int K = 1; K <= 2 * k; ++K) {
    Polynomial vK = Polynomial::variable(nvars, K - 1);
    for (int a = 0; a <= K; ++a) {
      int b = K - a;
      if (a <= k && b <= k) p.at(a, b) += vK;
    }
  }
  Bivariate l = bivariate_log1p(p, nvars);
  std::vector<Relation> rel;
  for (int i = 1; i <= k; ++i)
    for (int j = i; j <= k; ++j) {
      Relation rln;
      rln.i = i;
      rln.j = j;
      rln.value = l.at(i, j) * Rational(i * j);
      rel.push_back(std::move(rln));
    }
  return rel;
}

inline std::vector<std::string> tower_variables(int K, const char* rect_symbol) {
  std::vector<std::string> v;
  v.push_back(rect_symbol);
  for (int k = 1; k <= K; ++k) v.push_back("a" + std::to_string(k));
  return v;
}

inline RelationTable tower_table(RelationKind kind, int K) {
  const int nvars = K + 1;
  const Polynomial sym = Polynomial::variable(nvars, 0);
  Series<Polynomial> src(K, Polynomial(nvars));
  for (int k = 1; k <= K; ++k) src[k] = Polynomial::variable(nvars, k);

  Series<Polynomial> out(K, Polynomial(nvars));
  const char* rect_symbol = "r";
  switch (kind) {
    case RelationKind::ForwardTower: out = forward_tower_series(src, sym); break;
    case RelationKind::BackwardTower: out = backward_tower_series(src, sym); break;
    case RelationKind::DualForwardTower:
      out = dual_forward_series(src, sym);
      rect_symbol = "t";
      break;
    case RelationKind::DualBackwardTower: out = dual_backward_series(src, sym); break;
    default: throw std::invalid_argument("not a tower kind");
  }

  RelationTable table;
  table.kind = kind;
  table.order = K;
  table.variables = tower_variables(K, rect_symbol);
  for (int k = 1; k <= K; ++k) {
    Relation rln;
    rln.i = k;
    rln.value = out[k];
    table.relations.push_back(std::move(rln));
  }
  return table;
}

}  // namespace detail

inline RelationTable generate_relations(RelationKind kind, int order) {
  if (order < 1) throw std::invalid_argument("relation order must be >= 1");
  switch (kind) {
    case RelationKind::ForwardTower:
    case RelationKind::BackwardTower:
    case RelationKind::DualForwardTower:
    case RelationKind::DualBackwardTower:
      return detail::tower_table(kind, order);
    case RelationKind::DoubleMoment: {
      const int k = order;
      RelationTable table;
      table.kind = kind;
      table.order = k;
      for (int K = 1; K <= 2 * k; ++K) table.variables.push_back("a" + std::to_string(K));
      table.relations = detail::double_moment_engine(k);
      return table;
    }
    case RelationKind::DualDoubleMoment: {
      const int k = order;
      RelationTable table;
      table.kind = kind;
      table.order = k;
      // Variables a2..a_{2k+2}: dual moments, with a2^(i+j) as denominator.
      const int nvars = 2 * k + 1;
      for (int K = 2; K <= 2 * k + 2; ++K) table.variables.push_back("a" + std::to_string(K));
      table.relations = detail::double_moment_engine(k);
      for (Relation& rln : table.relations) {
        const int degree = rln.i + rln.j;
        // v_K -> a_{K+2} / a2. Each monomial of the generic result carries
        // total v-degree d <= degree, so a2^(degree - d) clears the fraction.
        rln.value = rln.value.remap_monomials(
            nvars, [&](const Polynomial::Exponents& e) {
              Polynomial::Exponents ne(static_cast<std::size_t>(nvars), 0);
              int inverse_power = 0;
              for (std::size_t K = 0; K < e.size(); ++K) {
                inverse_power += e[K];
                // v_{K+1} corresponds to a_{K+3}, stored at index K+1.
                ne[K + 1] += e[K];
              }
              if (inverse_power > degree)
                throw std::logic_error("dual double-moment denominator overflow");
              ne[0] += degree - inverse_power;
              return ne;
            });
        rln.denominator_power = degree;
      }
      return table;
    }
  }
  throw std::invalid_argument("unknown relation kind");
}

namespace detail {

inline void append_polynomial(std::ostringstream& os, const Polynomial& p) {
  if (p.is_zero()) {
    os << "0";
    return;
  }
  struct Term {
    Polynomial::Exponents e;
    Rational c;
    int degree;
  };
  std::vector<Term> terms;
  for (const auto& [e, c] : p.terms()) {
    int d = 0;
    for (int x : e) d += x;
    terms.push_back({e, c, d});
  }
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
    if (a.degree != b.degree) return a.degree < b.degree;
    return a.e < b.e;
  });
  bool first = true;
  for (const Term& t : terms) {
    Rational c = t.c;
    if (first) {
      first = false;
    } else if (c < 0) {
      os << " - ";
      c = -c;
    } else {
      os << " + ";
    }
    os << to_string(c) << " [";
    for (std::size_t i = 0; i < t.e.size(); ++i) {
      if (i) os << ",";
      os << t.e[i];
    }
    os << "]";
  }
}

}  // namespace detail

inline std::string serialize(const RelationTable& table) {
  std::ostringstream os;
  os << "# relation-table kind=" << relation_kind_name(table.kind)
     << " order=" << table.order << "\n# vars";
  for (const auto& v : table.variables) os << " " << v;
  os << "\n";
  const bool is_double = table.kind == RelationKind::DoubleMoment ||
                         table.kind == RelationKind::DualDoubleMoment;
  for (const Relation& rln : table.relations) {
    if (is_double)
      os << "C[" << rln.i << "," << rln.j << "] = ";
    else
      os << "M[" << rln.i << "] = ";
    detail::append_polynomial(os, rln.value);
    if (rln.denominator_power > 0) os << " / a2^" << rln.denominator_power;
    os << "\n";
  }
  return os.str();
}

// Relation tables cached per (kind, order); generation is pure, so the cache
// is safe to share across threads.
inline const RelationTable& cached_relations(RelationKind kind, int order) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, RelationTable> cache;
  std::scoped_lock lock(mu);
  auto key = std::make_pair(static_cast<int>(kind), order);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, generate_relations(kind, order)).first;
  return it->second;
}

// Flattened polynomial for fast repeated evaluation at double precision.
struct CompiledPolynomial {
  struct Term {
    double coeff;
    std::vector<std::pair<int, int>> powers;  // (variable, exponent)
  };
  int nvars = 0;
  std::vector<Term> terms;

  static CompiledPolynomial from(const Polynomial& p) {
    CompiledPolynomial cp;
    cp.nvars = p.nvars();
    for (const auto& [e, c] : p.terms()) {
      Term t;
      t.coeff = c.get_d();
      for (std::size_t i = 0; i < e.size(); ++i)
        if (e[i] != 0) t.powers.emplace_back(static_cast<int>(i), e[i]);
      cp.terms.push_back(std::move(t));
    }
    return cp;
  }

  double evaluate(std::span<const double> vals) const {
    double acc = 0.0;
    for (const Term& t : terms) {
      double prod = t.coeff;
      for (const auto& [v, e] : t.powers) {
        double base = vals[static_cast<std::size_t>(v)];
        for (int n = 0; n < e; ++n) prod *= base;
      }
      acc += prod;
    }
    return acc;
  }
};

}  // namespace eigeninfer
