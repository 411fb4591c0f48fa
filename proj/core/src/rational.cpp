#include "kserver/rational.hpp"

#include "kserver/error.hpp"

namespace kserver {

Int floor_rat(const Rat& x) {
  Int q = numerator(x) / denominator(x);
  if (numerator(x) < 0 && q * denominator(x) != numerator(x)) --q;
  return q;
}

Int ceil_rat(const Rat& x) { return -floor_rat(-x); }

Rat frac_rat(const Rat& x) { return x - Rat(floor_rat(x)); }

Rat rat_from_double(double x) { return Rat(x); }

double rat_to_double(const Rat& x) { return x.convert_to<double>(); }

std::string rat_to_string(const Rat& x) {
  if (denominator(x) == 1) return numerator(x).str();
  return numerator(x).str() + "/" + denominator(x).str();
}

Rat rat_from_string(const std::string& text) {
  if (text.empty()) throw Error("BadRational", "empty string");
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    Int num(text.substr(0, slash));
    Int den(text.substr(slash + 1));
    if (den == 0) throw Error("BadRational", text);
    return Rat(num, den);
  }
  const auto dot = text.find('.');
  if (dot != std::string::npos) {
    const std::string head = text.substr(0, dot);
    const std::string tail = text.substr(dot + 1);
    Int scale = 1;
    for (std::size_t i = 0; i < tail.size(); ++i) scale *= 10;
    const bool negative = !head.empty() && head[0] == '-';
    Int whole(head.empty() || head == "-" ? std::string("0") : head);
    Int fracpart(tail.empty() ? std::string("0") : tail);
    Rat magnitude = Rat(abs(whole)) + Rat(fracpart, scale);
    return negative ? -magnitude : magnitude;
  }
  return Rat(Int(text));
}

}  // namespace kserver
