#pragma once

// Closed-form coefficient expressions: m, V, beta, q, r.
//
// Grammar (standard precedence, ^ right-associative and binding tighter
// than unary minus):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          exponent must be variable-free
//   primary := number | 'x' | 'y' | 'pi' | fn '(' expr ')' | '(' expr ')'
//   fn      := sin | cos | exp | log | abs | sqrt

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eigendrift {

enum class Variable { X, Y };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Function { Sin, Cos, Exp, Log, Abs, Sqrt };

/// Raised by parse() for lexical, syntax and exponent errors.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Raised by evaluate() when a sub-expression leaves its domain.
class DomainError : public std::runtime_error {
public:
    DomainError(const std::string& what, std::string subexpression);
    const std::string& subexpression() const noexcept { return subexpression_; }

private:
    std::string subexpression_;
};

struct Node;

/// Immutable expression tree. Copies share structure; all operations are
/// pure, so an Expr may be used from any number of threads.
class Expr {
public:
    Expr();  // the constant 0
    explicit Expr(double value);

    static Expr constant(double value);
    static Expr variable(Variable v);
    static Expr unary_minus(Expr operand);
    static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
    static Expr call(Function fn, Expr arg);

    /// Exact tree equality (constants compared bitwise).
    bool structurally_equal(const Expr& other) const;

    bool is_constant() const;
    /// Value of a Constant node; throws std::logic_error otherwise.
    double constant_value() const;
    bool depends_on(Variable v) const;
    /// True when the tree contains an abs() call.
    bool has_abs() const;

    const Node& node() const { return *node_; }
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    enum class Kind { Constant, Var, Neg, Binary, Call };
    Kind kind = Kind::Constant;
    double value = 0.0;
    Variable var = Variable::X;
    BinaryOp op = BinaryOp::Add;
    Function fn = Function::Sin;
    std::shared_ptr<const Node> lhs;  // operand for Neg/Call, left for Binary
    std::shared_ptr<const Node> rhs;

    Expr left() const { return Expr(lhs); }
    Expr right() const { return Expr(rhs); }
};

Expr parse(std::string_view source);

/// Prints in a form that parse() maps back to a structurally equal tree.
std::string to_string(const Expr& e);

struct Point {
    double x = 0.0;
    double y = 0.0;
};

double evaluate(const Expr& e, Point p);
inline double evaluate(const Expr& e, double x) { return evaluate(e, Point{x, 0.0}); }

/// Symbolic derivative with constant folding. d|u| = (u/|u|)·u', which is
/// undefined exactly where u vanishes.
Expr differentiate(const Expr& e, Variable v);

// Folding constructors used by differentiate(); exposed for reuse.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);

}  // namespace eigendrift
