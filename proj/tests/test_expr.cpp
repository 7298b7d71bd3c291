#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "eigendrift/expr.hpp"

using namespace eigendrift;

TEST(ExprParse, Precedence) {
    EXPECT_DOUBLE_EQ(evaluate(parse("1+2*3"), 0.0), 7.0);
    EXPECT_DOUBLE_EQ(evaluate(parse("2^3^2"), 0.0), 512.0);
    EXPECT_DOUBLE_EQ(evaluate(parse("-2^2"), 0.0), -4.0);
    EXPECT_DOUBLE_EQ(evaluate(parse("(-2)^2"), 0.0), 4.0);
    EXPECT_DOUBLE_EQ(evaluate(parse("2^-1"), 0.0), 0.5);
    EXPECT_DOUBLE_EQ(evaluate(parse("8/4/2"), 0.0), 1.0);
    EXPECT_DOUBLE_EQ(evaluate(parse("1-2-3"), 0.0), -4.0);
}

TEST(ExprParse, VariablesAndFunctions) {
    const Point p{0.3, 0.7};
    EXPECT_DOUBLE_EQ(evaluate(parse("x*y"), p), 0.3 * 0.7);
    EXPECT_DOUBLE_EQ(evaluate(parse("sin(pi*x)"), p), std::sin(std::numbers::pi * 0.3));
    EXPECT_DOUBLE_EQ(evaluate(parse("exp(-y)"), p), std::exp(-0.7));
    EXPECT_DOUBLE_EQ(evaluate(parse("abs(x-y)"), p), 0.4);
    EXPECT_DOUBLE_EQ(evaluate(parse("sqrt(log(2+x))"), p), std::sqrt(std::log(2.3)));
    EXPECT_DOUBLE_EQ(evaluate(parse(" 1.5e-1 * cos( y ) "), p), 0.15 * std::cos(0.7));
}

TEST(ExprParse, Errors) {
    EXPECT_THROW(parse(""), ParseError);
    EXPECT_THROW(parse("1+"), ParseError);
    EXPECT_THROW(parse("(x"), ParseError);
    EXPECT_THROW(parse("x)"), ParseError);
    EXPECT_THROW(parse("z"), ParseError);
    EXPECT_THROW(parse("tan(x)"), ParseError);
    EXPECT_THROW(parse("x ^ x"), ParseError);
    EXPECT_THROW(parse("2 $ 3"), ParseError);
    try {
        parse("1 + * 2");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
}

TEST(ExprEvaluate, DomainErrors) {
    EXPECT_THROW(evaluate(parse("1/x"), 0.0), DomainError);
    EXPECT_THROW(evaluate(parse("log(x)"), 0.0), DomainError);
    EXPECT_THROW(evaluate(parse("sqrt(x-1)"), 0.0), DomainError);
    EXPECT_THROW(evaluate(parse("(x-1)^0.5"), 0.0), DomainError);
    try {
        evaluate(parse("1 + log(x - 2)"), 1.0);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(e.subexpression().find("log"), std::string::npos);
    }
}

TEST(ExprDerivative, KnownForms) {
    const Point p{0.4, 0.9};
    EXPECT_NEAR(evaluate(differentiate(parse("x^3"), Variable::X), p), 3 * 0.16, 1e-15);
    EXPECT_NEAR(evaluate(differentiate(parse("sin(x*y)"), Variable::Y), p), 0.4 * std::cos(0.36), 1e-15);
    EXPECT_NEAR(evaluate(differentiate(parse("exp(2*x)"), Variable::X), p), 2 * std::exp(0.8), 1e-13);
    EXPECT_NEAR(evaluate(differentiate(parse("log(x)"), Variable::X), p), 2.5, 1e-15);
    EXPECT_NEAR(evaluate(differentiate(parse("sqrt(x)"), Variable::X), p), 0.5 / std::sqrt(0.4), 1e-15);
    EXPECT_NEAR(evaluate(differentiate(parse("abs(x-0.5)"), Variable::X), p), -1.0, 0.0);
    EXPECT_NEAR(evaluate(differentiate(parse("x/y"), Variable::Y), p), -0.4 / 0.81, 1e-15);
}

TEST(ExprDerivative, ConstantFolding) {
    EXPECT_TRUE(differentiate(parse("y^2"), Variable::X).is_constant());
    EXPECT_EQ(differentiate(parse("y^2"), Variable::X).constant_value(), 0.0);
    EXPECT_TRUE(differentiate(parse("3*x"), Variable::X).is_constant());
    EXPECT_EQ(differentiate(parse("3*x"), Variable::X).constant_value(), 3.0);
}

TEST(ExprDerivative, AbsUndefinedAtKink) {
    EXPECT_THROW(evaluate(differentiate(parse("abs(x-0.5)"), Variable::X), 0.5), DomainError);
}

TEST(ExprStructure, Queries) {
    const Expr e = parse("abs(x)*2");
    EXPECT_TRUE(e.has_abs());
    EXPECT_TRUE(e.depends_on(Variable::X));
    EXPECT_FALSE(e.depends_on(Variable::Y));
    EXPECT_FALSE(parse("x+1").has_abs());
    EXPECT_THROW(parse("x").constant_value(), std::logic_error);
    EXPECT_TRUE(parse("x + 1").structurally_equal(parse("x+1")));
    EXPECT_FALSE(parse("x + 1").structurally_equal(parse("1 + x")));
}

TEST(ExprPrint, RoundTripsExactConstants) {
    for (const char* s : {"0.1", "1e-300", "3.141592653589793", "123456789012345678"}) {
        const Expr e = parse(s);
        EXPECT_TRUE(parse(to_string(e)).structurally_equal(e)) << s << " -> " << to_string(e);
    }
}
