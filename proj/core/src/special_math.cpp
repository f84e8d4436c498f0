#include "binmp/special_math.hpp"

#include <cmath>
#include <stdexcept>

#include "binmp/detail/channel_kernels.hpp"

namespace binmp {

namespace {

using detail::kInvSqrt2;
using detail::kInvSqrt2Pi;
using detail::kLogSqrt2Pi;

constexpr double kLog2 = 0.69314718055994530942;
constexpr double kSqrt2OverPi = 0.79788456080286535588;

// log(1 + e^z), stable for every double z.
double log1p_exp(double z) {
  if (z > 36.0) return z + std::exp(-z);
  if (z < -36.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

void check_variance(double v) {
  if (!(v > 0.0)) throw std::domain_error("channel variance must be > 0");
}

}  // namespace

double erfcx(double x) {
  if (x >= 0.0) {
    if (x <= 27.2) return detail::erfcx_core(x);
    // Asymptotic tail: erfcx(x) ~ (1/(x sqrt(pi))) sum_k (-1)^k (2k-1)!!/(2x^2)^k.
    double u = 1.0 / (x * x);
    double s =
        1.0 +
        u * (-0.5 +
             u * (0.75 +
                  u * (-1.875 +
                       u * (6.5625 +
                            u * (-29.53125 +
                                 u * (162.421875 + u * -1055.7421875))))));
    return s / (x * 1.7724538509055160273);
  }
  // Reflection: erfcx(-a) = 2 exp(a^2) - erfcx(a); saturates to +inf once
  // exp(a^2) overflows (a > ~26.64).
  double a = -x;
  return 2.0 * std::exp(a * a) - erfcx(a);
}

GaussTail gauss_tail(double x) {
  GaussTail r;
  if (x >= 0.0) {
    double s = x * kInvSqrt2;
    if (x <= 1.0) {
      r.value = 0.5 * std::erfc(s);
      r.log_value = std::log(r.value);
    } else {
      // H(x) = exp(-x^2/2) erfcx(s) / 2; the log form has no cancellation.
      r.log_value = -0.5 * x * x + std::log(0.5 * erfcx(s));
      r.value = x <= 37.0 ? 0.5 * std::exp(-s * s) * erfcx(s)
                          : std::exp(r.log_value);
    }
  } else {
    GaussTail opp = gauss_tail(-x);
    r.value = 1.0 - opp.value;
    // Stays finite (approaches -0.0) even when the opposite tail underflows.
    r.log_value = std::log1p(-opp.value);
  }
  return r;
}

double k_ratio(double x) {
  if (x >= -37.0) {
    // N(x)/H(x) = sqrt(2/pi) / erfcx(x/sqrt(2)); the reflection inside
    // erfcx stays finite for x >= -37.
    return kSqrt2OverPi / erfcx(x * kInvSqrt2);
  }
  // Deep lower tail: H(x) = 1 to within < 1e-300, so the ratio is N(x).
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double log_k_ratio(double x) {
  return -0.5 * x * x - kLogSqrt2Pi - gauss_tail(x).log_value;
}

double sign_channel_field(double omega, double V) {
  check_variance(V);
  double t = omega / std::sqrt(V);
  return 0.5 * (gauss_tail(-t).log_value - gauss_tail(t).log_value);
}

double phi_sign(double B, double omega, double V) {
  check_variance(V);
  double t = omega / std::sqrt(V);
  double a = B + gauss_tail(-t).log_value;
  double b = -B + gauss_tail(t).log_value;
  double hi = a > b ? a : b;
  double lo = a > b ? b : a;
  return hi + log1p_exp(lo - hi) - kLog2;
}

BMoments phi_sign_B_moments(double B, double omega, double V) {
  double m = std::tanh(B + sign_channel_field(omega, V));
  return {m, (1.0 - m) * (1.0 + m)};
}

OmegaMoments phi_sign_omega_moments(double B, double omega, double V) {
  check_variance(V);
  double inv_sqrt_v = 1.0 / std::sqrt(V);
  double t = omega * inv_sqrt_v;
  double s = t * kInvSqrt2;
  double g;
  if (std::fabs(s) <= detail::kFastSMax && std::fabs(B) <= detail::kFastFieldMax) {
    g = detail::sign_g_element(0.0, 0.0, detail::make_sign_row(B, omega, inv_sqrt_v));
  } else if (std::fabs(s) >= detail::kZeroSMin) {
    // Deep one-sided tail: the favored inverse-Mills term underflows to
    // exactly zero, leaving a single log-space product (frequently itself
    // exactly zero when the field agrees with the mean).
    double sgn = omega > 0.0 ? 1.0 : -1.0;
    g = detail::sign_g_tail_element(0.0, 0.0, sgn * B, sgn, std::fabs(omega),
                                    inv_sqrt_v);
  } else {
    // Log-space fallback: g = [p+ K(-t) - p- K(t)] / sqrt(V) with the
    // activation posterior p+- = sigmoid(+-2F), F = B + u(omega, V).
    double f = B + sign_channel_field(omega, V);
    double log_p_pos = -log1p_exp(-2.0 * f);
    double log_p_neg = -log1p_exp(2.0 * f);
    g = (std::exp(log_p_pos + log_k_ratio(-t)) -
         std::exp(log_p_neg + log_k_ratio(t))) *
        inv_sqrt_v;
  }
  return {g, g * g + g * omega / V};
}

OutputMoments phi_output_binary(int y, double omega, double V) {
  check_variance(V);
  if (y != 1 && y != -1) throw std::domain_error("label must be -1 or +1");
  double inv_sqrt_v = 1.0 / std::sqrt(V);
  double z = -y * omega * inv_sqrt_v;
  OutputMoments r;
  r.value = gauss_tail(z).log_value;
  r.g = y * k_ratio(z) * inv_sqrt_v;
  r.Gamma = r.g * r.g + r.g * omega / V;
  return r;
}

PsiMoments psi_binary(double H, double theta) {
  double f = H + theta;
  double af = std::fabs(f);
  PsiMoments r;
  r.value = af + std::log1p(std::exp(-2.0 * af));
  r.mean = std::tanh(f);
  r.var = (1.0 - r.mean) * (1.0 + r.mean);
  return r;
}

}  // namespace binmp
