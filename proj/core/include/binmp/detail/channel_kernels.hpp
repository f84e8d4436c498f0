#pragma once

#include <cmath>

// Inline element kernels shared by the scalar channel functions and the
// batched layer sweeps. The sweeps are compiled in a fast-math translation
// unit so these loops vectorize through the vector libm; everything here is
// therefore straight-line arithmetic with select-style conditionals only.
// Range guards (when the fast forms stay exactly representable) are hoisted
// to row level by the callers; see kFastSMax / kFastFieldMax.

namespace binmp::detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Minimax-style fit of erfcx(a) = exp(a^2) erfc(a) on a in [0, 27.2] as a
// degree-26 polynomial in z = z0 + z1 / (a + k); relative error <= 6e-16
// over the whole interval.
inline constexpr double kErfcxK = 3.75;
inline constexpr double kErfcxZ0 = 1.275735294117647059;
inline constexpr double kErfcxZ1 = -8.534007352941176471;
inline constexpr double kErfcxCoef[27] = {
    // highest degree first
    -1.990677888104982708e-13,
    -1.012892796422281331e-12,
    2.132527934363018954e-12,
    1.538552644504315483e-11,
    -1.081421024762921085e-11,
    -1.502649614243554935e-10,
    2.434767145050062189e-11,
    1.335981906820161018e-9,
    3.702760339684854344e-11,
    -1.22846944013910768e-8,
    2.15818377466202289e-9,
    1.201183532064537504e-7,
    -1.095023843178994698e-7,
    -1.174799957598740495e-6,
    2.914778251994765098e-6,
    8.534789502577912351e-6,
    -0.00005760082746174844149,
    0.00006113465303259499198,
    0.0006108597033365501433,
    -0.004027186041566463069,
    0.01467570997210410801,
    -0.03935439111853709613,
    0.08450452541897463287,
    -0.150869683115658698,
    0.2282769576891392845,
    -0.295453206224389776,
    0.1823508777335351218,
};

// erfcx on [0, 27.2] only; callers handle the asymptotic and negative ranges.
inline double erfcx_core(double a) {
  double z = kErfcxZ0 + kErfcxZ1 / (a + kErfcxK);
  double acc = kErfcxCoef[0];
  // The pragma keeps the coefficient loop branch-free so the surrounding
  // element loops can vectorize.
#pragma GCC unroll 32
  for (int j = 1; j < 27; ++j) acc = acc * z + kErfcxCoef[j];
  return acc;
}

// erfcx for a >= 27 via the asymptotic series in r = 1 / (2 a^2): with
// r <= 6.9e-4 the eighth term is already below 1e-16 relative, so seven
// double-factorial coefficients reach full precision. Branch-free.
inline double erfcx_asym(double a) {
  const double inv_sqrt_pi = 0.56418958354775628695;
  double r = 0.5 / (a * a);
  double acc = -135135.0;
  acc = acc * r + 10395.0;
  acc = acc * r - 945.0;
  acc = acc * r + 105.0;
  acc = acc * r - 15.0;
  acc = acc * r + 3.0;
  acc = acc * r - 1.0;
  acc = acc * r + 1.0;
  return inv_sqrt_pi / a * acc;
}

// Fast-path validity bounds. With |s| <= kFastSMax (s = t / sqrt(2)),
// exp(-s^2) stays a normal double, so both Gaussian tails are exactly
// representable as {E*X/2, 1 - E*X/2} without damaging cancellation. With
// |B| <= kFastFieldMax, exp(+-B) stays finite and the two-sided mixture
// denominator cannot hit 0 * inf. Outside either bound callers must use the
// log-space scalar path.
inline constexpr double kFastSMax = 26.5;
inline constexpr double kFastFieldMax = 250.0;

// Saturated-row bounds. Once every cavity tail argument in a row satisfies
// s >= kZeroSMin, the favored-side term exp(-t^2/2 + log p) vanishes below
// the smallest subnormal (exp underflows to 0 past -745.2; s^2 = t^2/2 >=
// 784). The opposing term additionally carries exp(-2F) with posterior field
// F >= B + s_lo^2 / 2, so demanding B * sign(omega) >= kZeroFieldMargin -
// s_lo^2 / 2 pushes it below underflow as well (margin 420 covers the
// inverse-Mills factor, which is at most ~e^16 here). Rows passing both
// checks have an exactly zero derivative on every edge and can be skipped
// without evaluating anything.
inline constexpr double kZeroSMin = 28.0;
inline constexpr double kZeroFieldMargin = 420.0;

// Per-row constants for a sweep over the incoming-edge index at fixed
// (output unit, sample): total preactivation mean, exp(+-B), 2 sinh(B)
// (kept separately — the subtraction e^B - e^-B is catastrophic for tiny B),
// and 1/sqrt(V).
struct SignRowConsts {
  double omega;
  double eB;
  double emB;
  double two_sinh_b;
  double inv_sqrt_v;
};

inline SignRowConsts make_sign_row(double b, double omega, double inv_sqrt_v) {
  return {omega, std::exp(b), std::exp(-b), 2.0 * std::sinh(b), inv_sqrt_v};
}

// d/d omega_c of log[ (e^B H(-t_c) + e^-B H(t_c)) / 2 ] at the cavity mean
// omega_c = omega - m*x, where t_c = omega_c / sqrt(V) and H is the upper
// normal tail. Fast path only (see bounds above).
inline double sign_g_element(double m, double x, const SignRowConsts& r) {
  double s = (r.omega - m * x) * r.inv_sqrt_v * kInvSqrt2;
  double as = s >= 0.0 ? s : -s;
  double e = std::exp(-s * s);
  double half_ecf = 0.5 * e * erfcx_core(as);
  // The select keeps whichever tail is small in its exactly-computed
  // half_ecf form; the 1 - half_ecf side is the large tail, where absolute
  // rounding of one ulp is harmless.
  double h_pos = s >= 0.0 ? half_ecf : 1.0 - half_ecf;  // H(t_c)
  double h_neg = s >= 0.0 ? 1.0 - half_ecf : half_ecf;  // H(-t_c)
  double num = r.two_sinh_b * (e * kInvSqrt2Pi);
  return num / (r.eB * h_neg + r.emB * h_pos) * r.inv_sqrt_v;
}

// Same derivative for a hard +-1 label y: y * K(-y t_c) / sqrt(V) with K the
// inverse Mills ratio. Fast path assumes |s| <= kFastSMax.
inline double output_g_element(double m, double x, double y,
                               const SignRowConsts& r) {
  double s = -y * (r.omega - m * x) * r.inv_sqrt_v * kInvSqrt2;
  double as = s >= 0.0 ? s : -s;
  double e = std::exp(-s * s);
  double half_ecf = 0.5 * e * erfcx_core(as);
  double h = s >= 0.0 ? half_ecf : 1.0 - half_ecf;  // H(-y t_c)
  return y * (e * kInvSqrt2Pi) / h * r.inv_sqrt_v;
}

// Deep-tail sign-channel derivative, valid once the cavity tail argument
// s_c = |t_c| / sqrt(2) is >= kZeroSMin with sign sgn common to the row.
// The favored-side term carries exp(-s_c^2) and underflows to exactly zero,
// leaving the opposing term, evaluated in log space:
//   g = -sgn * exp(-log(1 + e^{2 sgn F}) - log sqrt(2 pi) - L) / sqrt(V),
//   L = log(erfcx(s_c) / 2),  2 sgn F = 2 sgn B + s_c^2 - L.
// aligned_b = sgn * b_up; abs_omega = |omega|.
inline double sign_g_tail_element(double m, double x, double aligned_b,
                                  double sgn, double abs_omega,
                                  double inv_sqrt_v) {
  double a = (abs_omega - sgn * (m * x)) * inv_sqrt_v;
  double s = a * kInvSqrt2;
  double big_l = std::log(0.5 * erfcx_asym(s));
  double f2 = 2.0 * aligned_b + (s * s - big_l);
  double af2 = f2 >= 0.0 ? f2 : -f2;
  double l1pe = (f2 >= 0.0 ? f2 : 0.0) + std::log(1.0 + std::exp(-af2));
  return -sgn * inv_sqrt_v * std::exp(-l1pe - kLogSqrt2Pi - big_l);
}

// Deep-tail output derivative on the conflict side (y t_c <= -kZeroSMin *
// sqrt(2) on every edge): g = y K(|t_c|) / sqrt(V) with K through the
// asymptotic erfcx.
inline double output_g_tail_element(double m, double x, double y,
                                    double omega, double inv_sqrt_v) {
  const double sqrt_2_over_pi = 0.79788456080286535588;
  double a = -y * (omega - m * x) * inv_sqrt_v;
  return y * inv_sqrt_v * sqrt_2_over_pi / erfcx_asym(a * kInvSqrt2);
}

}  // namespace binmp::detail
