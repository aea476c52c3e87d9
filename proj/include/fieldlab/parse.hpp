#pragma once

#include <string>

#include "fieldlab/chart.hpp"
#include "fieldlab/expr.hpp"

namespace fieldlab {

// Parses the scalar expression language against a chart.
//
//   expr   := ['-'] term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' ['-'] INT)?
//   base   := NUMBER | ref | '(' expr ')' | FN '(' expr ')'
//           | 'sum' '(' IDENT ',' index ',' index ',' expr ')'
//           | 'det2' '(' IDENT ')' | EXTERNAL '(' expr (',' expr)* ')'
//   ref    := IDENT ('[' index (',' index)* ']')?
//   index  := ['-'] INT | IDENT          (sum-bound variable)
//   FN     := sqrt | sin | cos | exp | log
//
// sum(i, lo, hi, body) expands inclusively at parse time; det2(g) expands to
// the determinant of a sym2 group; for a sym2 group named g, g-inverse
// components are available as ginv[a,b] in closed form. Identifiers resolve
// through the chart: tables first, then fiber/jet/momentum coordinates by
// arity. Registered external functions are callable by name.
Expr parse_expr(const std::string& text, const ChartPtr& chart);

}  // namespace fieldlab
