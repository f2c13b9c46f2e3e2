#ifndef TRUNCLOG_SERIES_HPP
#define TRUNCLOG_SERIES_HPP

// Maclaurin coefficients of the analytic functions used by the functional
// calculus. Coefficients are generated with exact rational recurrences and
// only converted to double at the end.

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace trunclog {

namespace detail {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  static Rational from_wide(__int128 n, __int128 d) {
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 a = n < 0 ? -n : n;
    __int128 b = d;
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      n /= a;
      d /= a;
    }
    constexpr __int128 lim = static_cast<__int128>(INT64_MAX);
    if (n > lim || n < -lim || d > lim) throw std::overflow_error("rational coefficient overflow");
    Rational r;
    r.num = static_cast<std::int64_t>(n);
    r.den = static_cast<std::int64_t>(d);
    return r;
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return from_wide(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                     static_cast<__int128>(a.den) * b.den);
  }
  friend Rational operator-(const Rational& a) { return Rational(-a.num, a.den); }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return from_wide(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
  }
  friend bool operator==(const Rational& a, const Rational& b) { return a.num == b.num && a.den == b.den; }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline std::vector<double> to_double(const std::vector<Rational>& r) {
  std::vector<double> out;
  out.reserve(r.size());
  for (const auto& q : r) out.push_back(q.value());
  return out;
}

/// 1/k! for k = 0..count-1.
inline std::vector<Rational> exp_rational(int count) {
  std::vector<Rational> c;
  Rational term(1);
  for (int k = 0; k < count; ++k) {
    if (k > 0) term = term * Rational(1, k);
    c.push_back(term);
  }
  return c;
}

/// psi(z) = (e^z - 1)/z, coefficients 1/(k+1)!.
inline std::vector<Rational> psi_rational(int count) {
  std::vector<Rational> c;
  Rational term(1);
  for (int k = 0; k < count; ++k) {
    term = term * Rational(1, k + 1);
    c.push_back(term);
  }
  return c;
}

/// Power-series reciprocal 1/a(z), requires a[0] != 0.
inline std::vector<Rational> reciprocal_rational(const std::vector<Rational>& a) {
  if (a.empty() || a[0].num == 0) throw std::invalid_argument("series reciprocal needs a nonzero constant term");
  std::vector<Rational> b(a.size());
  const Rational inv0(a[0].den, a[0].num);
  b[0] = inv0;
  for (std::size_t n = 1; n < a.size(); ++n) {
    Rational s;
    for (std::size_t j = 1; j <= n; ++j) s = s + a[j] * b[n - j];
    b[n] = -(s * inv0);
  }
  return b;
}

}  // namespace detail

inline constexpr int kMaxKappa = 12;

/// a_k = 1/k!, k = 0..count-1.
inline std::vector<double> exp_coeffs(int count) { return detail::to_double(detail::exp_rational(count)); }

/// Coefficients of log(1 + z): a_0 = 0, a_k = (-1)^{k+1}/k.
inline std::vector<double> log1p_coeffs(int count) {
  std::vector<double> c(static_cast<std::size_t>(count), 0.0);
  for (int k = 1; k < count; ++k) c[k] = (k % 2 == 1 ? 1.0 : -1.0) / k;
  return c;
}

/// Coefficients of psi(z) = (e^z - 1)/z, i.e. 1/(k+1)!.
inline std::vector<double> psi_coeffs(int count) { return detail::to_double(detail::psi_rational(count)); }

/// First `kappa` Maclaurin coefficients of psi_-(z) = 1/psi(-z) = z/(1 - e^{-z}).
inline std::vector<double> psi_minus_coeffs(int kappa) {
  if (kappa < 1) throw std::invalid_argument("psi_minus_coeffs: kappa must be >= 1");
  auto psi = detail::psi_rational(kappa);
  for (std::size_t k = 1; k < psi.size(); k += 2) psi[k] = -psi[k];
  return detail::to_double(detail::reciprocal_rational(psi));
}

/// Cauchy product of two coefficient lists truncated to `count` terms.
inline std::vector<double> series_product(const std::vector<double>& a, const std::vector<double>& b, int count) {
  std::vector<double> c(static_cast<std::size_t>(count), 0.0);
  for (int n = 0; n < count; ++n)
    for (int j = 0; j <= n; ++j)
      if (static_cast<std::size_t>(j) < a.size() && static_cast<std::size_t>(n - j) < b.size()) c[n] += a[j] * b[n - j];
  return c;
}

}  // namespace trunclog

#endif  // TRUNCLOG_SERIES_HPP
