// Test-only numeric oracles, independent of the library's closed forms.
#pragma once

#include <cmath>
#include <functional>

namespace oracle {

using Fn = std::function<double(double)>;

/// Golden-section maximum of a unimodal function on [a, b].
inline double argmax(const Fn& f, double a, double b, double tol = 1e-10) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    } else {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    }
  }
  return 0.5 * (a + b);
}

inline double trapezoid(const Fn& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) acc += f(a + i * h);
  return acc * h;
}

inline double simpson(const Fn& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

inline double derivative(const Fn& f, double t, double h = 1e-5) {
  return (f(t + h) - f(t - h)) / (2.0 * h);
}

inline double second_derivative(const Fn& f, double t, double h = 1e-4) {
  return (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
}

inline double bisect_root(const Fn& f, double a, double b, double tol = 1e-13) {
  double fa = f(a);
  for (int i = 0; i < 200 && b - a > tol; ++i) {
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    if ((fa <= 0.0) == (fm <= 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace oracle
