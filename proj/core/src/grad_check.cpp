#include "icnt/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace icnt {

namespace {

template <typename T>
double objective(const GradCheckSpec<T>& spec) {
  GraphT<T> g;
  ValueT<T> y = spec.build(g);
  if (spec.seed.empty()) return static_cast<double>(y->value.item());
  if (spec.seed.shape != y->value.shape)
    throw std::invalid_argument("grad_check seed shape " + shape_str(spec.seed.shape) +
                                " does not match output " + shape_str(y->value.shape));
  double acc = 0;
  for (int64_t i = 0; i < y->value.numel(); ++i)
    acc += static_cast<double>(spec.seed.data[i]) * static_cast<double>(y->value.data[i]);
  return acc;
}

}  // namespace

template <typename T>
GradCheckReport grad_check(const GradCheckSpec<T>& spec) {
  if (spec.eps < 1e-7 || spec.eps > 1e-4)
    throw std::invalid_argument("grad_check eps must be in [1e-7, 1e-4], got " + std::to_string(spec.eps));
  for (const auto& in : spec.inputs)
    if (!all_finite(in->value)) throw std::invalid_argument("grad_check input contains non-finite values");

  for (const auto& in : spec.inputs) {
    in->requires_grad = true;
    in->grad = {};
  }

  {
    GraphT<T> g;
    ValueT<T> y = spec.build(g);
    if (y->value.numel() != 1 && spec.seed.empty())
      throw std::invalid_argument("grad_check on a non-scalar output requires a seed cotangent");
    if (spec.seed.empty())
      g.backward(y);
    else
      g.backward(y, spec.seed);
  }
  std::vector<TensorT<T>> analytic;
  analytic.reserve(spec.inputs.size());
  for (const auto& in : spec.inputs)
    analytic.push_back(in->has_grad() ? in->grad : TensorT<T>::zeros(in->value.shape));

  // Recording is pointless while only values are probed.
  for (const auto& in : spec.inputs) in->requires_grad = false;

  GradCheckReport report;
  const double eps = spec.eps;
  for (size_t k = 0; k < spec.inputs.size(); ++k) {
    auto& x = spec.inputs[k]->value;
    for (int64_t i = 0; i < x.numel(); ++i) {
      const T saved = x.data[i];
      x.data[i] = static_cast<T>(saved + eps);
      const double f_plus = objective(spec);
      x.data[i] = static_cast<T>(saved - eps);
      const double f_minus = objective(spec);
      x.data[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = static_cast<double>(analytic[k].data[i]);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = k;
        report.worst_elem = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }

  for (const auto& in : spec.inputs) {
    in->requires_grad = true;
    in->zero_grad();
  }
  return report;
}

template GradCheckReport grad_check<float>(const GradCheckSpec<float>&);
template GradCheckReport grad_check<double>(const GradCheckSpec<double>&);

}  // namespace icnt
