#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nomto/graph.hpp"

namespace nomto {

enum class ExprKind { Variable, Constant, Unary, Binary, Sum };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Immutable expression tree. A Sum is sum(weights[i] * kids[i]); every other
// kind uses `kids` according to its arity. display_digits matters on the
// root only and controls reporting, never evaluation.
struct Expr {
  ExprKind kind = ExprKind::Constant;
  std::string var;             // Variable
  double value = 0.0;          // Constant
  OpSpec op;                   // Unary / Binary
  std::vector<double> weights; // Sum
  std::vector<ExprPtr> kids;
  int display_digits = 1;
};

ExprPtr make_var(std::string name);
ExprPtr make_const(double v);
ExprPtr make_unary(const OpSpec& op, ExprPtr kid);
ExprPtr make_binary(const OpSpec& op, ExprPtr a, ExprPtr b);
// Empty sums are the constant 0.
ExprPtr make_sum(std::vector<double> weights, std::vector<ExprPtr> kids);

bool expr_equal(const ExprPtr& a, const ExprPtr& b);

// Symbolic reading of a trained graph: each node is its exact operation
// applied to the weighted sum of its live predecessors, and the output is
// the weighted sum of the last layer. Masked weights never appear.
ExprPtr extract_expression(const SymbolicGraph& g);

// Field evaluation with the redefined operator semantics, each operator
// node clamped to the projection range exactly like a graph node. Every
// free variable must be assigned; the assignment supplies the grid, so it
// cannot be empty.
DiscretizedFunction eval_expression(
    const ExprPtr& e, const std::map<std::string, DiscretizedFunction>& vars);

// Canonical algebraic cleanup: sums and products flattened, constants
// folded, like terms merged, integer powers collected. Expansion is capped;
// subtrees that would blow past the cap stay factored. Coefficients keep
// full precision; display_digits only tags the root for reporting.
ExprPtr simplify_round(const ExprPtr& e, int display_digits = 1);

// Canonical full-precision infix. parse_infix inverts it structurally.
std::string to_infix(const ExprPtr& e);
ExprPtr parse_infix(const std::string& text);

struct DisplayOptions {
  int decimals = 1;
  double drop_below = 0.05;  // addends smaller than this after rounding
};
// Rounded reporting form; terms that round below the threshold are dropped.
// The one-argument form takes decimals from the root's display_digits.
std::string to_display(const ExprPtr& e);
std::string to_display(const ExprPtr& e, const DisplayOptions& opts);

std::string expr_to_json(const ExprPtr& e);
ExprPtr expr_from_json(const std::string& text);

// Weight of the simplified sum's addend whose full-precision infix equals
// `term`; the constant addend is term "1". Zero when absent.
double coefficient_of(const ExprPtr& e, const std::string& term);

}  // namespace nomto
