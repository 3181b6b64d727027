#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

// Reverse-mode automatic differentiation on a scalar tape. The same templated
// evaluation code runs on plain double (fast path) and on ad::Var (gradient
// path); every Var arithmetic op appends at most one two-parent entry to the
// active thread-local tape.

namespace himor::ad {

class Tape {
 public:
  struct Entry {
    double w0, w1;    // local partials w.r.t. parents
    int32_t p0, p1;   // parent indices, -1 = none
  };

  int32_t leaf(double) {
    entries_.push_back({0.0, 0.0, -1, -1});
    return static_cast<int32_t>(entries_.size()) - 1;
  }
  int32_t unary(int32_t p, double w) {
    entries_.push_back({w, 0.0, p, -1});
    return static_cast<int32_t>(entries_.size()) - 1;
  }
  int32_t binary(int32_t a, double wa, int32_t b, double wb) {
    entries_.push_back({wa, wb, a, b});
    return static_cast<int32_t>(entries_.size()) - 1;
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Adjoints of every tape entry w.r.t. the scalar at `output`.
  std::vector<double> backward(int32_t output) const {
    std::vector<double> adj(entries_.size(), 0.0);
    if (output >= 0) adj[static_cast<std::size_t>(output)] = 1.0;
    for (std::size_t k = entries_.size(); k-- > 0;) {
      const Entry& e = entries_[k];
      const double a = adj[k];
      if (a == 0.0) continue;
      if (e.p0 >= 0) adj[static_cast<std::size_t>(e.p0)] += e.w0 * a;
      if (e.p1 >= 0) adj[static_cast<std::size_t>(e.p1)] += e.w1 * a;
    }
    return adj;
  }

 private:
  std::vector<Entry> entries_;
};

Tape*& active_tape();

struct Var {
  double v = 0.0;
  int32_t i = -1;  // -1 marks a constant (not on the tape)

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: constants lift implicitly
  Var(double value, int32_t index) : v(value), i(index) {}

  static Var leaf(double value) { return {value, active_tape()->leaf(value)}; }
};

inline Var make_unary(const Var& x, double value, double dx) {
  if (x.i < 0) return {value};
  return {value, active_tape()->unary(x.i, dx)};
}

inline Var make_binary(const Var& a, const Var& b, double value, double da, double db) {
  if (a.i < 0 && b.i < 0) return {value};
  if (b.i < 0) return {value, active_tape()->unary(a.i, da)};
  if (a.i < 0) return {value, active_tape()->unary(b.i, db)};
  return {value, active_tape()->binary(a.i, da, b.i, db)};
}

inline Var operator+(const Var& a, const Var& b) { return make_binary(a, b, a.v + b.v, 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return make_binary(a, b, a.v - b.v, 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return make_binary(a, b, a.v * b.v, b.v, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  return make_binary(a, b, a.v / b.v, 1.0 / b.v, -a.v / (b.v * b.v));
}
inline Var operator-(const Var& a) { return make_unary(a, -a.v, -1.0); }
inline Var operator+(const Var& a) { return a; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }
inline bool operator==(const Var& a, const Var& b) { return a.v == b.v; }
inline bool operator!=(const Var& a, const Var& b) { return a.v != b.v; }

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.v);
  return make_unary(x, s, 0.5 / s);
}
inline Var exp(const Var& x) {
  const double e = std::exp(x.v);
  return make_unary(x, e, e);
}
inline Var log(const Var& x) { return make_unary(x, std::log(x.v), 1.0 / x.v); }
inline Var abs(const Var& x) {
  return make_unary(x, std::abs(x.v), x.v >= 0.0 ? 1.0 : -1.0);
}
inline Var fabs(const Var& x) { return abs(x); }
inline Var max(const Var& a, const Var& b) { return a.v >= b.v ? a : b; }
inline Var min(const Var& a, const Var& b) { return a.v <= b.v ? a : b; }

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

inline bool isfinite(const Var& x) { return std::isfinite(x.v); }

}  // namespace himor::ad

namespace Eigen {

template <>
struct NumTraits<himor::ad::Var> : NumTraits<double> {
  typedef himor::ad::Var Real;
  typedef himor::ad::Var NonInteger;
  typedef himor::ad::Var Nested;
  typedef himor::ad::Var Literal;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3,
  };
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<himor::ad::Var, double, BinaryOp> {
  typedef himor::ad::Var ReturnType;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, himor::ad::Var, BinaryOp> {
  typedef himor::ad::Var ReturnType;
};

}  // namespace Eigen

namespace himor::ad {
inline Var operator+(const Var& a, double b) { return a + Var(b); }
inline Var operator+(double a, const Var& b) { return Var(a) + b; }
inline Var operator-(const Var& a, double b) { return a - Var(b); }
inline Var operator-(double a, const Var& b) { return Var(a) - b; }
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }
inline Var operator/(const Var& a, double b) { return a / Var(b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }
}  // namespace himor::ad
