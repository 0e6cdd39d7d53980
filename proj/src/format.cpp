#include "pamda/format.hpp"

#include <charconv>
#include <string>

#include "pamda/errors.hpp"

namespace pamda {

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw ContractViolation("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view context) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc{} || ptr != last) {
    throw SchemaError(std::string(context) + ": invalid number '" + std::string(text) + "'");
  }
  return value;
}

long long parse_integer(std::string_view text, std::string_view context) {
  long long value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc{} || ptr != last) {
    throw SchemaError(std::string(context) + ": invalid integer '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace pamda
