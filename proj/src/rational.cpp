// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/rational.hpp"

#include <cctype>
#include <charconv>
#include <limits>

namespace skiptrace {
namespace {

struct DecimalParts {
  bool negative = false;
  std::string digits;  // integer and fraction digits concatenated
  long exponent = 0;   // value = digits * 10^exponent
};

std::optional<DecimalParts> split_decimal(std::string_view text) {
  DecimalParts parts;
  std::size_t i = 0;
  if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
    parts.negative = text[i] == '-';
    ++i;
  }
  bool any_digit = false;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
    parts.digits.push_back(text[i++]);
    any_digit = true;
  }
  if (i < text.size() && text[i] == '.') {
    ++i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      parts.digits.push_back(text[i++]);
      --parts.exponent;
      any_digit = true;
    }
  }
  if (!any_digit) return std::nullopt;
  if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
    ++i;
    long exp = 0;
    auto [ptr, ec] = std::from_chars(text.data() + i + (i < text.size() && text[i] == '+'),
                                     text.data() + text.size(), exp);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    if (exp > 400 || exp < -400) return std::nullopt;
    parts.exponent += exp;
    i = text.size();
  }
  if (i != text.size()) return std::nullopt;
  auto first = parts.digits.find_first_not_of('0');
  parts.digits = first == std::string::npos ? std::string("0") : parts.digits.substr(first);
  return parts;
}

std::optional<std::int64_t> to_int64(std::string_view digits, bool negative) {
  std::uint64_t magnitude = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), magnitude);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  constexpr auto max = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
  if (magnitude > max) return std::nullopt;
  auto value = static_cast<std::int64_t>(magnitude);
  return negative ? -value : value;
}

}  // namespace

std::optional<std::int64_t> scale_decimal(std::string_view text, int shift) {
  auto parts = split_decimal(text);
  if (!parts) return std::nullopt;
  long exponent = parts->exponent + shift;
  std::string digits = parts->digits;
  if (digits == "0") return 0;
  if (exponent >= 0) {
    if (static_cast<long>(digits.size()) + exponent > 19) return std::nullopt;
    digits.append(static_cast<std::size_t>(exponent), '0');
    return to_int64(digits, parts->negative);
  }
  auto drop = static_cast<std::size_t>(-exponent);
  if (drop > digits.size()) digits.insert(0, drop - digits.size(), '0');
  std::string kept = digits.substr(0, digits.size() - drop);
  std::string dropped = digits.substr(digits.size() - drop);
  if (kept.empty()) kept = "0";
  auto value = to_int64(kept, false);
  if (!value) return std::nullopt;
  bool round_up = false;
  if (dropped[0] > '5') {
    round_up = true;
  } else if (dropped[0] == '5') {
    bool rest_nonzero = dropped.find_first_not_of('0', 1) != std::string::npos;
    round_up = rest_nonzero || (*value % 2 != 0);
  }
  if (round_up) {
    if (*value == std::numeric_limits<std::int64_t>::max()) return std::nullopt;
    ++*value;
  }
  return parts->negative ? -*value : *value;
}

std::optional<Rational> parse_rational(std::string_view text) {
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    if (text.find('/', slash + 1) != std::string_view::npos) return std::nullopt;
    auto num = parse_rational(text.substr(0, slash));
    auto den = parse_rational(text.substr(slash + 1));
    if (!num || !den || den->numerator() == 0) return std::nullopt;
    return *num / *den;
  }
  auto parts = split_decimal(text);
  if (!parts) return std::nullopt;
  if (parts->exponent >= 0) {
    auto value = scale_decimal(text, 0);
    if (!value) return std::nullopt;
    return Rational(*value);
  }
  if (parts->exponent < -18 || parts->digits.size() > 18) return std::nullopt;
  auto num = to_int64(parts->digits, parts->negative);
  if (!num) return std::nullopt;
  std::int64_t den = 1;
  for (long i = 0; i < -parts->exponent; ++i) den *= 10;
  return Rational(*num, den);
}

std::string format_decimal(const Rational& value, int places) {
  __int128 num = value.numerator();
  __int128 den = value.denominator();
  bool negative = num < 0;
  if (negative) num = -num;
  __int128 scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  __int128 scaled = num * scale;
  __int128 quotient = scaled / den;
  __int128 remainder = scaled % den;
  if (remainder * 2 > den || (remainder * 2 == den && quotient % 2 != 0)) ++quotient;

  auto to_text = [](__int128 v) {
    if (v == 0) return std::string("0");
    std::string out;
    while (v > 0) {
      out.insert(out.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
      v /= 10;
    }
    return out;
  };
  std::string whole = to_text(quotient / scale);
  std::string frac = to_text(quotient % scale);
  std::string out;
  if (negative && quotient != 0) out.push_back('-');
  out += whole;
  if (places > 0) {
    out.push_back('.');
    out.append(static_cast<std::size_t>(places) - frac.size(), '0');
    out += frac;
  }
  return out;
}

double to_double(const Rational& value) {
  return static_cast<double>(value.numerator()) / static_cast<double>(value.denominator());
}

}  // namespace skiptrace
