#pragma once

#include <cstdint>
#include <vector>

#include "binmp/data.hpp"
#include "binmp/messages.hpp"

// Evaluation primitives over trained weights or weight marginals:
// point-wise and marginal-vote test error, local-energy flatness profiles,
// and per-layer polarization / unit-overlap summaries.

namespace binmp {

struct LocalEnergyProfile {
  std::vector<double> p_grid;   // perturbation probabilities, each in [0, 1]
  std::vector<double> delta_e;  // mean error increase over masks; 0 exactly at p = 0
  std::vector<double> std_err;  // standard error of that mean (0 when n_masks < 2)
  int n_masks = 0;              // masks averaged per grid point
};

struct OverlapReport {
  // Per weight layer, averaged over units / unit pairs:
  //   q0_a  = (1/N) sum_i w_ai^2        (self-overlap, polarization)
  //   q_ab  = (1/N) sum_i w_ai w_bi     (pairwise unit overlap)
  std::vector<double> q0;
  std::vector<double> qab;  // NaN for layers with fewer than two units
};

// Elementwise sign with ties at 0 resolved to +1 (deterministic,
// seed-independent), applied per layer.
std::vector<MatW> sign_weights(const std::vector<MatW>& m);

// Misclassification fraction of the deterministic +-1 network: plain-sum
// preactivations, sign activations (sign(0) = +1), readout by sign of the
// single output (2-class, labels +-1) or first-maximum argmax (labels
// 0..K-1). W entries must be +-1-valued; the last layer's unit count must
// match the dataset's class structure.
double pointwise_error(const std::vector<MatW>& W, const Dataset& d);

// Misclassification fraction of the marginal vote: one Gaussian
// message-passing forward with weight means m and variances 1 - m^2 (no
// sampling), prediction from the sign / argmax of the output mean, ties to
// +1 / lowest index. Fully polarized m (+-1) reproduces
// pointwise_error(sign_weights(m)) exactly whenever no hidden preactivation
// lands exactly on zero.
double bayesian_error(const std::vector<MatW>& m, const Dataset& d,
                      double v_min = 1e-8);

// Flatness profile: for each p in p_grid draws n_masks +-1 masks (-1 with
// probability p, streams keyed by seed), flips W accordingly and averages
// the error increase against the unperturbed error. p = 0 contributes 0
// exactly. Throws std::invalid_argument when a p lies outside [0, 1] or
// n_masks < 1.
LocalEnergyProfile local_energy(const std::vector<MatW>& W, const Dataset& d,
                                const std::vector<double>& p_grid, int n_masks,
                                uint64_t seed);

// Exact per-layer overlap averages of magnetization or weight matrices
// ([units x inputs] each).
OverlapReport overlaps(const std::vector<MatW>& layers);

}  // namespace binmp
