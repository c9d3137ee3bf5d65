#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fusemap/common.hpp"

namespace fusemap::formula {

/// Formula language shared by the climate predictors and the health model:
/// main terms, logs, squares and pairwise products of supplied columns.
struct Term {
  enum class Kind { Main, Log, Square, Product } kind = Kind::Main;
  std::string col_a;
  std::string col_b;  // Product only

  std::string name() const {
    switch (kind) {
      case Kind::Main: return col_a;
      case Kind::Log: return "log_" + col_a;
      case Kind::Square: return col_a + "_sq";
      case Kind::Product: return col_a + "_x_" + col_b;
    }
    return col_a;
  }
};

inline Term main_term(const std::string& c) { return {Term::Kind::Main, c, ""}; }
inline Term log_term(const std::string& c) { return {Term::Kind::Log, c, ""}; }
inline Term square_term(const std::string& c) { return {Term::Kind::Square, c, ""}; }
inline Term product_term(const std::string& a, const std::string& b) {
  return {Term::Kind::Product, a, b};
}

/// Evaluate one term given a column lookup (throws ValidationError on a
/// missing column via the provider).
inline double evaluate(const Term& t, const std::function<double(const std::string&)>& col) {
  switch (t.kind) {
    case Term::Kind::Main:
      return col(t.col_a);
    case Term::Kind::Log: {
      const double v = col(t.col_a);
      if (!(v > 0.0)) throw ValidationError("log term '" + t.col_a + "': non-positive value");
      return std::log(v);
    }
    case Term::Kind::Square: {
      const double v = col(t.col_a);
      return v * v;
    }
    case Term::Kind::Product:
      return col(t.col_a) * col(t.col_b);
  }
  throw ValidationError("unknown formula term");
}

Term parse_term(const std::string& text);
std::vector<Term> parse_terms(const std::vector<std::string>& texts);

/// Named presets for the climate predictor expressions.
std::vector<Term> climate_preset(const std::string& name);

}  // namespace fusemap::formula
