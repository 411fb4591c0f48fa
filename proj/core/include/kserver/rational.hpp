#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

namespace kserver {

// All mass bookkeeping is exact: arbitrary-precision integers and rationals.
using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

// Largest integer <= x.
Int floor_rat(const Rat& x);

// Smallest integer >= x.
Int ceil_rat(const Rat& x);

// x - floor(x), always in [0, 1).
Rat frac_rat(const Rat& x);

// Exact conversion; every double is a dyadic rational.
Rat rat_from_double(double x);

double rat_to_double(const Rat& x);

// Canonical text form: "p" for integers, "p/q" otherwise.
std::string rat_to_string(const Rat& x);

// Inverse of rat_to_string; also accepts decimal literals like "0.25".
Rat rat_from_string(const std::string& text);

}  // namespace kserver
