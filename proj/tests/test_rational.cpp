// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "skiptrace/rational.hpp"

using namespace skiptrace;

TEST_CASE("scale_decimal converts microsecond text to integer nanoseconds") {
  CHECK(scale_decimal("12.345", 3) == 12345);
  CHECK(scale_decimal("7", 3) == 7000);
  CHECK(scale_decimal("0.001", 3) == 1);
  CHECK(scale_decimal("-1e-3", 3) == -1);
  CHECK(scale_decimal("1e3", 3) == 1000000);
  CHECK(scale_decimal("1.5E+2", 3) == 150000);
  CHECK(scale_decimal("000.000", 3) == 0);
  CHECK(scale_decimal("1700000000000.123", 3) == 1700000000000123);
}

TEST_CASE("scale_decimal rounds half to even below the nanosecond") {
  CHECK(scale_decimal("1.0005", 3) == 1000);
  CHECK(scale_decimal("1.0015", 3) == 1002);
  CHECK(scale_decimal("1.00051", 3) == 1001);
  CHECK(scale_decimal("1.0004999", 3) == 1000);
  CHECK(scale_decimal("-2.0025", 3) == -2002);
}

TEST_CASE("scale_decimal rejects bad syntax and overflow") {
  CHECK_FALSE(scale_decimal("", 3));
  CHECK_FALSE(scale_decimal("abc", 3));
  CHECK_FALSE(scale_decimal("1.2.3", 3));
  CHECK_FALSE(scale_decimal(".", 3));
  CHECK_FALSE(scale_decimal("1e", 3));
  CHECK_FALSE(scale_decimal("99999999999999999999", 3));
}

TEST_CASE("parse_rational reads fractions and decimals exactly") {
  CHECK(parse_rational("1/4") == Rational(1, 4));
  CHECK(parse_rational("0.25") == Rational(1, 4));
  CHECK(parse_rational("3") == Rational(3));
  CHECK(parse_rational("0.1") == Rational(1, 10));
  CHECK(parse_rational("-6/8") == Rational(-3, 4));
  CHECK(parse_rational("1.5/3") == Rational(1, 2));
  CHECK_FALSE(parse_rational("1/0"));
  CHECK_FALSE(parse_rational("1/2/3"));
  CHECK_FALSE(parse_rational("x"));
}

TEST_CASE("format_decimal renders six places with half-even rounding") {
  CHECK(format_decimal(Rational(100, 70)) == "1.428571");
  CHECK(format_decimal(Rational(1000)) == "1000.000000");
  CHECK(format_decimal(Rational(-1, 3)) == "-0.333333");
  CHECK(format_decimal(Rational(1, 8), 2) == "0.12");
  CHECK(format_decimal(Rational(3, 8), 2) == "0.38");
  CHECK(format_decimal(Rational(5, 2), 0) == "2");
  CHECK(format_decimal(Rational(-1, 10000000)) == "0.000000");
}
