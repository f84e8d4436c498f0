#pragma once

#include <cstddef>

// Batched element-kernel rows compiled in the fast-math translation unit so
// the exp/tanh-heavy loops vectorize. Every function here assumes the caller
// has already verified the fast-range guards (see channel_kernels.hpp):
//   - |field b_up| <= kFastFieldMax where a two-sided field enters,
//   - the largest possible scaled tail argument stays <= kFastSMax.
// Rows that fail a guard must go through the strict scalar channel API.

namespace binmp::hot {

// g_out[i] = d/d omega of the sign-channel log-partition at the cavity mean
// omega - w_mean[i] * x_mean[i], with downstream field b_up and variance
// 1 / inv_sqrt_v^2.
void sign_g_row(double b_up, double omega, double inv_sqrt_v,
                const double* w_mean, const double* x_mean, double* g_out,
                std::ptrdiff_t n);

// Same derivative for a hard +-1 label y instead of a downstream field.
void output_g_row(double y, double omega, double inv_sqrt_v,
                  const double* w_mean, const double* x_mean, double* g_out,
                  std::ptrdiff_t n);

// k_out[i] = K(s_base + coef * w_mean[i] * x_mean[i]) where K(z) is the
// Gaussian hazard ratio N(z) / H(z). Used by the per-edge class-argmax rows.
void kratio_shift_row(double s_base, double coef, const double* w_mean,
                      const double* x_mean, double* k_out, std::ptrdiff_t n);

// Deep-tail counterparts for rows whose every cavity tail argument satisfies
// s >= kZeroSMin with a common sign sgn = sign(omega). There the favored-side
// term underflows to exactly zero and the surviving opposing term has a
// stable log-space form built on the asymptotic erfcx expansion.

// Sign channel: aligned_b = sgn * b_up, abs_omega = |omega|.
void sign_g_tail_row(double aligned_b, double sgn, double abs_omega,
                     double inv_sqrt_v, const double* w_mean,
                     const double* x_mean, double* g_out, std::ptrdiff_t n);

// +-1 labelled output unit on its conflict side (y * omega < 0; every edge
// tail argument -y * t_c >= kZeroSMin / kInvSqrt2).
void output_g_tail_row(double y, double omega, double inv_sqrt_v,
                       const double* w_mean, const double* x_mean,
                       double* g_out, std::ptrdiff_t n);

}  // namespace binmp::hot
