#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "pointmixer/nn/tape.hpp"

namespace pmx {

struct GradCheckResult {
  double max_error = 0.0;
  std::string worst;  // parameter name and coordinate of the worst entry
  Index coordinates = 0;
};

/// A scalar-valued function of every entry in a ParamStore, recorded on the
/// supplied tape (constructed over that store).
template <typename Scalar>
using Objective = std::function<Var<Scalar>(Tape<Scalar>&)>;

/// Compares the tape gradient of `f` against central differences
/// (f(x+h) - f(x-h)) / 2h for every coordinate of `params`, and returns the
/// maximum of |analytic - numeric| / max(1, |numeric|).
/// `max_per_param` > 0 checks an evenly strided subset of each entry.
template <typename Scalar>
GradCheckResult check_gradient(const Objective<Scalar>& f, ParamStore<Scalar>& params, double h,
                               Index max_per_param = 0) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradient: h must be positive");
  auto evaluate = [&]() {
    Tape<Scalar> tape(params);
    const Var<Scalar> out = f(tape);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("check_gradient: objective must be 1x1");
    const Scalar v = out.value()(0, 0);
    if (!std::isfinite(static_cast<double>(v))) throw NonFiniteError("check_gradient: non-finite objective");
    return static_cast<double>(v);
  };

  params.zero_grad();
  {
    Tape<Scalar> tape(params);
    const Var<Scalar> out = f(tape);
    tape.backward(out, MatrixX<Scalar>::Ones(1, 1));
    tape.accumulate_into(params);
  }

  GradCheckResult result;
  for (auto& p : params) {
    const Index n = p.size();
    const Index stride = (max_per_param > 0 && n > max_per_param) ? n / max_per_param : 1;
    for (Index i = 0; i < n; i += stride) {
      Scalar& x = p.value.data()[i];
      const Scalar saved = x;
      x = static_cast<Scalar>(saved + h);
      const double plus = evaluate();
      x = static_cast<Scalar>(saved - h);
      const double minus = evaluate();
      x = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = static_cast<double>(p.grad.data()[i]);
      if (!std::isfinite(analytic)) throw NonFiniteError("check_gradient: non-finite gradient in " + p.name);
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (err >= result.max_error) {
        result.max_error = err;
        result.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace pmx
