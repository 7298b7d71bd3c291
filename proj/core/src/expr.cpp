#include "eigendrift/expr.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace eigendrift {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

DomainError::DomainError(const std::string& what, std::string subexpression)
    : std::runtime_error(what + " in '" + subexpression + "'"),
      subexpression_(std::move(subexpression)) {}

namespace {

std::shared_ptr<const Node> make_node(Node n) { return std::make_shared<const Node>(std::move(n)); }

const std::shared_ptr<const Node>& zero_node() {
    static const auto zero = make_node(Node{});
    return zero;
}

bool is_const(const Expr& e, double v) { return e.is_constant() && e.constant_value() == v; }

}  // namespace

// ---------------------------------------------------------------------------
// construction

Expr::Expr() : node_(zero_node()) {}

Expr::Expr(double value) : Expr(constant(value)) {}

Expr Expr::constant(double value) {
    Node n;
    n.kind = Node::Kind::Constant;
    n.value = value;
    return Expr(make_node(std::move(n)));
}

Expr Expr::variable(Variable v) {
    Node n;
    n.kind = Node::Kind::Var;
    n.var = v;
    return Expr(make_node(std::move(n)));
}

Expr Expr::unary_minus(Expr operand) {
    if (operand.is_constant()) return constant(-operand.constant_value());
    Node n;
    n.kind = Node::Kind::Neg;
    n.lhs = operand.node_;
    return Expr(make_node(std::move(n)));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
    Node n;
    n.kind = Node::Kind::Binary;
    n.op = op;
    n.lhs = lhs.node_;
    n.rhs = rhs.node_;
    return Expr(make_node(std::move(n)));
}

Expr Expr::call(Function fn, Expr arg) {
    Node n;
    n.kind = Node::Kind::Call;
    n.fn = fn;
    n.lhs = arg.node_;
    return Expr(make_node(std::move(n)));
}

bool Expr::is_constant() const { return node_->kind == Node::Kind::Constant; }

double Expr::constant_value() const {
    if (!is_constant()) throw std::logic_error("constant_value() on a non-constant node");
    return node_->value;
}

namespace {

bool nodes_equal(const Node* a, const Node* b) {
    if (a == b) return true;
    if (a == nullptr || b == nullptr || a->kind != b->kind) return false;
    switch (a->kind) {
    case Node::Kind::Constant:
        return std::bit_cast<std::uint64_t>(a->value) == std::bit_cast<std::uint64_t>(b->value);
    case Node::Kind::Var:
        return a->var == b->var;
    case Node::Kind::Neg:
        return nodes_equal(a->lhs.get(), b->lhs.get());
    case Node::Kind::Binary:
        return a->op == b->op && nodes_equal(a->lhs.get(), b->lhs.get()) &&
               nodes_equal(a->rhs.get(), b->rhs.get());
    case Node::Kind::Call:
        return a->fn == b->fn && nodes_equal(a->lhs.get(), b->lhs.get());
    }
    return false;
}

template <typename Pred>
bool any_node(const Node* n, Pred pred) {
    if (n == nullptr) return false;
    if (pred(*n)) return true;
    return any_node(n->lhs.get(), pred) || any_node(n->rhs.get(), pred);
}

}  // namespace

bool Expr::structurally_equal(const Expr& other) const {
    return nodes_equal(node_.get(), other.node_.get());
}

bool Expr::depends_on(Variable v) const {
    return any_node(node_.get(), [v](const Node& n) { return n.kind == Node::Kind::Var && n.var == v; });
}

bool Expr::has_abs() const {
    return any_node(node_.get(),
                    [](const Node& n) { return n.kind == Node::Kind::Call && n.fn == Function::Abs; });
}

// ---------------------------------------------------------------------------
// folding arithmetic

Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr(a.constant_value() + b.constant_value());
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return Expr::binary(BinaryOp::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr(a.constant_value() - b.constant_value());
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return -b;
    return Expr::binary(BinaryOp::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr(a.constant_value() * b.constant_value());
    if (is_const(a, 0.0) || is_const(b, 0.0)) return Expr(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    if (is_const(a, -1.0)) return -b;
    if (is_const(b, -1.0)) return -a;
    return Expr::binary(BinaryOp::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
        return Expr(a.constant_value() / b.constant_value());
    if (is_const(a, 0.0) && !is_const(b, 0.0)) return Expr(0.0);
    if (is_const(b, 1.0)) return a;
    return Expr::binary(BinaryOp::Div, a, b);
}

Expr operator-(const Expr& a) {
    if (a.node().kind == Node::Kind::Neg) return a.node().left();
    return Expr::unary_minus(a);
}

Expr pow(const Expr& base, const Expr& exponent) {
    if (is_const(exponent, 1.0)) return base;
    if (is_const(exponent, 0.0)) return Expr(1.0);
    if (base.is_constant() && exponent.is_constant()) {
        const double v = std::pow(base.constant_value(), exponent.constant_value());
        if (std::isfinite(v)) return Expr(v);
    }
    return Expr::binary(BinaryOp::Pow, base, exponent);
}

// ---------------------------------------------------------------------------
// lexer + recursive-descent parser

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
    Tok kind;
    std::size_t offset;
    double number = 0.0;
    std::string_view text;
};

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
    auto is_alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
    while (i < s.size()) {
        const char c = s[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++i;
            continue;
        }
        if (is_digit(c) || (c == '.' && i + 1 < s.size() && is_digit(s[i + 1]))) {
            std::size_t j = i;
            while (j < s.size() && is_digit(s[j])) ++j;
            if (j < s.size() && s[j] == '.') {
                ++j;
                while (j < s.size() && is_digit(s[j])) ++j;
            }
            if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
                if (k < s.size() && is_digit(s[k])) {
                    while (k < s.size() && is_digit(s[k])) ++k;
                    j = k;
                }
            }
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + j, v);
            if (ec != std::errc() || ptr != s.data() + j) throw ParseError("malformed number", i);
            out.push_back({Tok::Number, i, v, s.substr(i, j - i)});
            i = j;
            continue;
        }
        if (is_alpha(c)) {
            std::size_t j = i;
            while (j < s.size() && (is_alpha(s[j]) || is_digit(s[j]))) ++j;
            out.push_back({Tok::Ident, i, 0.0, s.substr(i, j - i)});
            i = j;
            continue;
        }
        Tok k;
        switch (c) {
        case '+': k = Tok::Plus; break;
        case '-': k = Tok::Minus; break;
        case '*': k = Tok::Star; break;
        case '/': k = Tok::Slash; break;
        case '^': k = Tok::Caret; break;
        case '(': k = Tok::LParen; break;
        case ')': k = Tok::RParen; break;
        default: throw ParseError(std::string("unknown token '") + c + "'", i);
        }
        out.push_back({k, i, 0.0, s.substr(i, 1)});
        ++i;
    }
    out.push_back({Tok::End, s.size(), 0.0, {}});
    return out;
}

std::optional<Function> function_named(std::string_view name) {
    if (name == "sin") return Function::Sin;
    if (name == "cos") return Function::Cos;
    if (name == "exp") return Function::Exp;
    if (name == "log") return Function::Log;
    if (name == "abs") return Function::Abs;
    if (name == "sqrt") return Function::Sqrt;
    return std::nullopt;
}

class Parser {
public:
    explicit Parser(std::string_view src) : toks_(lex(src)) {}

    Expr parse_all() {
        Expr e = expr();
        if (peek().kind != Tok::End) unexpected();
        return e;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_++]; }

    [[noreturn]] void unexpected() const {
        const Token& t = peek();
        if (t.kind == Tok::End) throw ParseError("syntax error: unexpected end of input", t.offset);
        throw ParseError("syntax error: unexpected token '" + std::string(t.text) + "'", t.offset);
    }

    void expect(Tok k) {
        if (peek().kind != k) unexpected();
        ++pos_;
    }

    Expr expr() {
        Expr lhs = term();
        while (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
            const BinaryOp op = next().kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
            lhs = Expr::binary(op, lhs, term());
        }
        return lhs;
    }

    Expr term() {
        Expr lhs = unary();
        while (peek().kind == Tok::Star || peek().kind == Tok::Slash) {
            const BinaryOp op = next().kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
            lhs = Expr::binary(op, lhs, unary());
        }
        return lhs;
    }

    Expr unary() {
        if (peek().kind == Tok::Minus) {
            next();
            return Expr::unary_minus(unary());
        }
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (peek().kind == Tok::Caret) {
            const std::size_t at = next().offset;
            Expr exponent = unary();
            if (exponent.depends_on(Variable::X) || exponent.depends_on(Variable::Y))
                throw ParseError("non-constant exponent", at);
            return Expr::binary(BinaryOp::Pow, base, exponent);
        }
        return base;
    }

    Expr primary() {
        const Token& t = peek();
        switch (t.kind) {
        case Tok::Number:
            next();
            return Expr::constant(t.number);
        case Tok::LParen: {
            next();
            Expr e = expr();
            expect(Tok::RParen);
            return e;
        }
        case Tok::Ident: {
            next();
            if (t.text == "x") return Expr::variable(Variable::X);
            if (t.text == "y") return Expr::variable(Variable::Y);
            if (t.text == "pi") return Expr::constant(std::numbers::pi);
            if (auto fn = function_named(t.text)) {
                expect(Tok::LParen);
                Expr arg = expr();
                expect(Tok::RParen);
                return Expr::call(*fn, arg);
            }
            throw ParseError("unknown identifier '" + std::string(t.text) + "'", t.offset);
        }
        default:
            unexpected();
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view source) { return Parser(source).parse_all(); }

// ---------------------------------------------------------------------------
// printing

namespace {

const char* function_name(Function f) {
    switch (f) {
    case Function::Sin: return "sin";
    case Function::Cos: return "cos";
    case Function::Exp: return "exp";
    case Function::Log: return "log";
    case Function::Abs: return "abs";
    case Function::Sqrt: return "sqrt";
    }
    return "?";
}

char op_char(BinaryOp op) {
    switch (op) {
    case BinaryOp::Add: return '+';
    case BinaryOp::Sub: return '-';
    case BinaryOp::Mul: return '*';
    case BinaryOp::Div: return '/';
    case BinaryOp::Pow: return '^';
    }
    return '?';
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, std::fabs(v));
    std::string digits(buf, ptr);
    if (std::signbit(v)) return "(-" + digits + ")";
    return digits;
}

void print(const Node& n, std::string& out) {
    switch (n.kind) {
    case Node::Kind::Constant:
        out += format_number(n.value);
        return;
    case Node::Kind::Var:
        out += n.var == Variable::X ? 'x' : 'y';
        return;
    case Node::Kind::Neg:
        out += "(-";
        print(*n.lhs, out);
        out += ')';
        return;
    case Node::Kind::Binary:
        out += '(';
        print(*n.lhs, out);
        out += op_char(n.op);
        print(*n.rhs, out);
        out += ')';
        return;
    case Node::Kind::Call:
        out += function_name(n.fn);
        out += '(';
        print(*n.lhs, out);
        out += ')';
        return;
    }
}

}  // namespace

std::string to_string(const Expr& e) {
    std::string out;
    print(e.node(), out);
    return out;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

double eval(const Node& n, Point p) {
    switch (n.kind) {
    case Node::Kind::Constant:
        return n.value;
    case Node::Kind::Var:
        return n.var == Variable::X ? p.x : p.y;
    case Node::Kind::Neg:
        return -eval(*n.lhs, p);
    case Node::Kind::Binary: {
        const double a = eval(*n.lhs, p);
        const double b = eval(*n.rhs, p);
        switch (n.op) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div:
            if (b == 0.0) throw DomainError("division by zero", to_string(Expr(std::make_shared<const Node>(n))));
            return a / b;
        case BinaryOp::Pow: {
            if (a == 0.0 && b < 0.0)
                throw DomainError("division by zero", to_string(Expr(std::make_shared<const Node>(n))));
            const double v = std::pow(a, b);
            if (std::isnan(v) && !std::isnan(a) && !std::isnan(b))
                throw DomainError("negative base with fractional exponent",
                                  to_string(Expr(std::make_shared<const Node>(n))));
            return v;
        }
        }
        break;
    }
    case Node::Kind::Call: {
        const double a = eval(*n.lhs, p);
        switch (n.fn) {
        case Function::Sin: return std::sin(a);
        case Function::Cos: return std::cos(a);
        case Function::Exp: return std::exp(a);
        case Function::Abs: return std::fabs(a);
        case Function::Log:
            if (!(a > 0.0))
                throw DomainError("log of non-positive value", to_string(Expr(std::make_shared<const Node>(n))));
            return std::log(a);
        case Function::Sqrt:
            if (a < 0.0)
                throw DomainError("sqrt of negative value", to_string(Expr(std::make_shared<const Node>(n))));
            return std::sqrt(a);
        }
        break;
    }
    }
    return 0.0;
}

}  // namespace

double evaluate(const Expr& e, Point p) { return eval(e.node(), p); }

// ---------------------------------------------------------------------------
// differentiation

namespace {

Expr call(Function f, const Expr& a) {
    if (a.is_constant()) {
        double v = 0.0;
        try {
            v = evaluate(Expr::call(f, a), Point{});
        } catch (const DomainError&) {
            return Expr::call(f, a);
        }
        if (std::isfinite(v)) return Expr(v);
    }
    return Expr::call(f, a);
}

}  // namespace

Expr differentiate(const Expr& e, Variable v) {
    const Node& n = e.node();
    switch (n.kind) {
    case Node::Kind::Constant:
        return Expr(0.0);
    case Node::Kind::Var:
        return Expr(n.var == v ? 1.0 : 0.0);
    case Node::Kind::Neg:
        return -differentiate(n.left(), v);
    case Node::Kind::Binary: {
        const Expr a = n.left();
        const Expr b = n.right();
        const Expr da = differentiate(a, v);
        switch (n.op) {
        case BinaryOp::Add: return da + differentiate(b, v);
        case BinaryOp::Sub: return da - differentiate(b, v);
        case BinaryOp::Mul: return da * b + a * differentiate(b, v);
        case BinaryOp::Div: {
            const Expr db = differentiate(b, v);
            if (is_const(db, 0.0)) return da / b;
            return (da * b - a * db) / pow(b, Expr(2.0));
        }
        case BinaryOp::Pow:
            // exponent is variable-free by construction
            return b * pow(a, b - Expr(1.0)) * da;
        }
        break;
    }
    case Node::Kind::Call: {
        const Expr u = n.left();
        const Expr du = differentiate(u, v);
        if (is_const(du, 0.0)) return Expr(0.0);
        switch (n.fn) {
        case Function::Sin: return call(Function::Cos, u) * du;
        case Function::Cos: return -(call(Function::Sin, u) * du);
        case Function::Exp: return call(Function::Exp, u) * du;
        case Function::Log: return du / u;
        case Function::Sqrt: return du / (Expr(2.0) * call(Function::Sqrt, u));
        case Function::Abs: return (u / call(Function::Abs, u)) * du;
        }
        break;
    }
    }
    return Expr(0.0);
}

}  // namespace eigendrift
