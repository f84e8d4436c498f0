// Fast-math translation unit: the only one in the library. Everything here
// is straight-line per-element arithmetic whose inputs are pre-guarded
// finite and in the fast range, so reassociation and the vector libm cannot
// change results beyond ordinary rounding.

#include "layers_hot.hpp"

#include "binmp/detail/channel_kernels.hpp"

namespace binmp::hot {

void sign_g_row(double b_up, double omega, double inv_sqrt_v,
                const double* w_mean, const double* x_mean, double* g_out,
                std::ptrdiff_t n) {
  const detail::SignRowConsts row = detail::make_sign_row(b_up, omega, inv_sqrt_v);
  for (std::ptrdiff_t i = 0; i < n; ++i)
    g_out[i] = detail::sign_g_element(w_mean[i], x_mean[i], row);
}

void output_g_row(double y, double omega, double inv_sqrt_v,
                  const double* w_mean, const double* x_mean, double* g_out,
                  std::ptrdiff_t n) {
  const detail::SignRowConsts row = detail::make_sign_row(0.0, omega, inv_sqrt_v);
  for (std::ptrdiff_t i = 0; i < n; ++i)
    g_out[i] = detail::output_g_element(w_mean[i], x_mean[i], y, row);
}

void kratio_shift_row(double s_base, double coef, const double* w_mean,
                      const double* x_mean, double* k_out, std::ptrdiff_t n) {
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double t = (s_base + coef * w_mean[i] * x_mean[i]) * detail::kInvSqrt2;
    double at = t >= 0.0 ? t : -t;
    double u = std::exp(-t * t);
    double half = 0.5 * u * detail::erfcx_core(at);
    double h = t >= 0.0 ? half : 1.0 - half;
    k_out[i] = detail::kInvSqrt2Pi * u / h;
  }
}

void sign_g_tail_row(double aligned_b, double sgn, double abs_omega,
                     double inv_sqrt_v, const double* w_mean,
                     const double* x_mean, double* g_out, std::ptrdiff_t n) {
  for (std::ptrdiff_t i = 0; i < n; ++i)
    g_out[i] = detail::sign_g_tail_element(w_mean[i], x_mean[i], aligned_b,
                                           sgn, abs_omega, inv_sqrt_v);
}

void output_g_tail_row(double y, double omega, double inv_sqrt_v,
                       const double* w_mean, const double* x_mean,
                       double* g_out, std::ptrdiff_t n) {
  for (std::ptrdiff_t i = 0; i < n; ++i)
    g_out[i] = detail::output_g_tail_element(w_mean[i], x_mean[i], y, omega,
                                             inv_sqrt_v);
}

}  // namespace binmp::hot
