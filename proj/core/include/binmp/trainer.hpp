#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "binmp/data.hpp"
#include "binmp/layers.hpp"
#include "binmp/metrics.hpp"

// The outer training loop for the message-passing algorithms: mini-batch
// scheduling, the inner sweeps, and the prior update
//     theta^{t+1} = rho_l * (theta^t + H^l)
// where H is the evidence field the inner loop accumulated on layer l
// (posterior natural parameter = prior + evidence, then raised to the
// exponent rho). Every stochastic choice (prior draws, shuffles, readout
// shifts) comes from counter-based streams keyed by the seed, so runs are
// bitwise reproducible.

namespace binmp {

struct PaspConfig {
  // Hidden layer widths; the input width comes from the dataset and the
  // output width from its class structure (1 unit for 2-class sign readout,
  // n_classes units for argmax).
  std::vector<Eigen::Index> hidden;
  // Per weight layer, or a single entry broadcast to all layers.
  std::vector<Algo> algo{Algo::BP};
  // Prior-update exponents, one per weight layer. Empty selects the
  // defaults: 1.0001 on every layer but the last, 0.9 on the last.
  std::vector<double> rho;
  // Weight-mean damping factors in [0, 1), per layer or broadcast.
  std::vector<double> alpha{0.8};
  double epsilon = 1.0;  // prior init scale, theta^0 ~ epsilon * N(0,1)
  int tau_max = 1;
  Eigen::Index batch_size = 128;
  int epochs = 1;  // per task for train_continual
  uint64_t seed = 1;
  // Internal-reinforcement intensity. Accepted for config compatibility but
  // must be 0; any other value is rejected as unimplemented.
  double r = 0.0;
  int argmax_approach = 1;  // multi-class readout variant (see OutputChannel)
  double v_min = 1e-8;
  // Also evaluate the marginal-vote (Bayesian) errors each epoch; when off,
  // those CSV columns hold NaN.
  bool compute_bayes = true;
  // true: each outer step re-centers the weight means on tanh(theta)
  // (full message reset). false: the means survive the reset and damp
  // against their previous-step values, the only setting where alpha acts
  // at tau_max = 1.
  bool damping_resets = true;
};

// Prior fields theta^0 ~ epsilon * N(0,1) for the given unit counts
// (dims = {n_0, ..., n_L}), one [n_{l+1} x n_l] matrix per weight layer.
// Bitwise reproducible per seed; epsilon = 0 gives exact zeros.
std::vector<MatW> init_priors(const std::vector<Eigen::Index>& dims,
                              double epsilon, uint64_t seed);

// The prior update alone: theta = rho_l * (theta + H) on every layer, using
// whatever H the network currently holds. Exposed so the update's exact
// linearity is assertable by injecting a synthetic H.
void pasp_prior_update(NetworkState& net, const std::vector<double>& rho);

// One outer step on one mini-batch: reset messages (keeping the damped
// means when damping_resets is false), run tau_max inner sweeps, update the
// priors. Throws what run_inner_loop throws.
void pasp_step(NetworkState& net, const SweepConfig& cfg, const SweepInputs& in,
               const std::vector<double>& rho, bool damping_resets = true);

// The rho defaults for a given number of weight layers.
std::vector<double> default_rho(size_t n_layers);

// Full training run: cfg.epochs passes over the seed-shuffled training set
// in consecutive mini-batches (final short batch kept), one pasp_step per
// batch, per-epoch metric rows per layer. The epoch's point-wise
// configuration is W = sign(m) with ties at m = 0 resolved to +1; the
// Bayesian columns use the epoch-end marginals m = tanh(theta). The seconds
// column times the batch loop (not the evaluation). Throws
// std::invalid_argument on bad configuration or dataset/architecture
// mismatch and NumericError on non-finite tensors.
RunMetrics train(const Dataset& train_set, const Dataset& test_set,
                 const PaspConfig& cfg);

// Sequential training over tasks: the priors carry over between tasks (no
// reset at boundaries), cfg.epochs each. After each task the current W is
// evaluated on every task's test split (error_matrix row). A single task
// reproduces train exactly. Tasks must agree on feature count and class
// structure.
ContinualMetrics train_continual(const std::vector<Dataset>& train_tasks,
                                 const std::vector<Dataset>& test_tasks,
                                 const PaspConfig& cfg);

// CSV names: "bp", "bpi", "mf", "amp"; heterogeneous per-layer mixes join
// with '+'.
const char* algo_name(Algo a);
std::string algo_label(const std::vector<Algo>& algos);

}  // namespace binmp
