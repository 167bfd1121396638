// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <boost/rational.hpp>

namespace skiptrace {

// Exact ratios (means, proximity scores, speedups). Decimal text is for
// presentation only.
using Rational = boost::rational<std::int64_t>;

// Parses a decimal literal ("12.345", "-1e-3", "7") and returns the value
// multiplied by 10^shift, rounded half to even. Returns nullopt on bad
// syntax or if the result does not fit in int64.
std::optional<std::int64_t> scale_decimal(std::string_view text, int shift);

// Parses "p/q" or a decimal literal into an exact rational.
std::optional<Rational> parse_rational(std::string_view text);

// Fixed-point rendering with `places` fractional digits, round half to even.
std::string format_decimal(const Rational& value, int places = 6);

double to_double(const Rational& value);

}  // namespace skiptrace
