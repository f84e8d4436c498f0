#pragma once

// Scalar channel functions for message passing through sign activations and
// binary (+-1) weights. Everything funnels through erfcx-based log-space
// expressions so values stay finite and monotone deep in the Gaussian tails.

namespace binmp {

// exp(x^2) erfc(x) over the full double range. Decreasing; ~1/(x sqrt(pi))
// for large x; overflows to +inf for x below about -26.6.
double erfcx(double x);

// Upper tail of the standard normal, value = P(Z > x) and its log.
// log_value is finite for every finite x (it never returns -inf); value
// underflows to 0 only past x ~ 38.6.
struct GaussTail {
  double value;
  double log_value;
};
GaussTail gauss_tail(double x);

// Inverse Mills ratio N(x) / P(Z > x): monotone increasing, ~N(x) for
// x << 0 and ~x + 1/x for x >> 0.
double k_ratio(double x);
double log_k_ratio(double x);

// Effective +-1 field induced by a sign readout of a Gaussian preactivation:
// u = [log P(Z > -t) - log P(Z > t)] / 2 with t = omega / sqrt(V).
double sign_channel_field(double omega, double V);

// Log-partition of one sign-activation channel: an incoming field B on the
// (+-1) activation, a Gaussian preactivation with mean omega and variance V:
//   phi = log sum_{x=+-1} (1/2) exp(B x) P(x Z_t > 0),  Z_t ~ N(t, 1).
double phi_sign(double B, double omega, double V);

// d phi/dB and d^2 phi/dB^2: mean and variance of the channel's activation.
struct BMoments {
  double mean;  // tanh(B + u)
  double var;   // 1 - mean^2
};
BMoments phi_sign_B_moments(double B, double omega, double V);

// d phi/d omega and -d^2 phi/d omega^2 of the same channel.
struct OmegaMoments {
  double g;
  double Gamma;  // g^2 + g * omega / V
};
OmegaMoments phi_sign_omega_moments(double B, double omega, double V);

// Hard-label readout phi = log P(y Z > 0), Z ~ N(omega/sqrt(V), 1), with the
// same omega-derivative pair. y must be -1 or +1.
struct OutputMoments {
  double value;
  double g;
  double Gamma;
};
OutputMoments phi_output_binary(int y, double omega, double V);

// Log-partition of a +-1 weight with total field H + theta:
// psi = log 2 cosh(H + theta), plus its first two H-derivatives.
struct PsiMoments {
  double value;
  double mean;  // tanh(H + theta)
  double var;   // 1 - mean^2
};
PsiMoments psi_binary(double H, double theta);

}  // namespace binmp
