#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "binmp/messages.hpp"

// The four message-passing layer algorithms (forward and backward sweeps)
// and the two output channels, operating on a NetworkState.
//
// Schedule per inner iteration tau (run_inner_loop):
//   forward over layers 0..L-1:  input means/variances -> weight means ->
//                                preactivation moments (omega, V);
//   backward over layers L-1..0: factor derivatives (g, Gamma) -> fields
//                                onto inputs (B) and weights (H).
// Fields read as "previous sweep" values are those left by the prior
// backward sweep, or zero right after reset_messages.
//
// Algorithm variants:
//   BP   full per-edge cavity messages; the only variant that may allocate
//        batch x n_out x n_in storage (lazily, and only when an iteration
//        can actually read nonzero edges, i.e. tau_max > 1);
//   BPI  non-cavity tensors, but the backward derivative subtracts the
//        edge's own mean product from omega before differentiating;
//   MF   fully non-cavity, derivatives at the full omega;
//   AMP  non-cavity with memory corrections: the omega update subtracts
//        terms proportional to the previous sweep's g, and the B/H updates
//        add the matching current-sweep correction terms.
// At tau = 1 from reset messages, all four produce the same forward moments,
// and BP is exactly equivalent to BPI for a whole tau_max = 1 iteration.

namespace binmp {

enum class Algo { BP, BPI, MF, AMP };

enum class OutputKind {
  SignBinary,  // one output unit, labels in {-1, +1}
  ArgMax,      // K >= 2 output units, labels in {0 .. K-1}
};

struct OutputChannel {
  OutputKind kind = OutputKind::SignBinary;
  // ArgMax only. Approach 1 linearizes around one sampled standard-normal
  // shift per sample (supplied by the caller and held fixed across sweeps);
  // approach 2 folds the label unit's variance into each competitor tail.
  int argmax_approach = 1;
};

struct SweepConfig {
  // One entry per weight layer, or a single entry broadcast to all layers.
  std::vector<Algo> algo{Algo::BP};
  std::vector<double> alpha{0.0};  // weight-mean damping, each in [0, 1)
  int tau_max = 1;
  double v_min = 1e-8;  // floor applied to every preactivation variance
  OutputChannel output;
  // Also compute the curvature fields A (onto inputs) and G (onto weights).
  // They are diagnostics for +-1 supports and feed back into nothing;
  // requires make_network(..., track_curvature = true).
  bool track_curvature = false;
  // Force the per-edge cavity path even where the fused equivalent applies
  // (testing aid; BP only).
  bool force_generic_edges = false;
};

// Per-batch data. labels/argmax_eps sizes must equal the batch width;
// argmax_eps is required only for ArgMax approach 1.
struct SweepInputs {
  const MatA* x0 = nullptr;                       // [n_in(0) x batch]
  const std::vector<int>* labels = nullptr;       // per sample
  const std::vector<double>* argmax_eps = nullptr;  // per sample
};

// Thrown when a sweep produces a non-finite tensor. The run is expected to
// fail rather than clamp.
class NumericError : public std::runtime_error {
 public:
  NumericError(Eigen::Index layer, const char* tensor, int tau)
      : std::runtime_error("non-finite values in tensor '" +
                           std::string(tensor) + "' at layer " +
                           std::to_string(layer) + ", sweep " +
                           std::to_string(tau)),
        layer(layer),
        tau(tau),
        tensor(tensor) {}

  Eigen::Index layer;
  int tau;
  const char* tensor;
};

// Clamps layer 0 to the data: xhat = xhat_prev = x0, delta = 0.
void load_input(NetworkState& net, const MatA& x0);

// One forward / backward sweep at iteration tau (1-based). forward_sweep
// assumes load_input has run for this batch; backward_sweep assumes the
// matching forward_sweep has run.
void forward_sweep(NetworkState& net, const SweepConfig& cfg, int tau);
void backward_sweep(NetworkState& net, const SweepConfig& cfg,
                    const SweepInputs& in, int tau);

// Validates the configuration, loads the batch, and runs tau_max full
// forward/backward iterations. Does NOT reset messages: the outer loop owns
// reset timing. Throws std::invalid_argument on configuration errors and
// NumericError on non-finite tensors.
void run_inner_loop(NetworkState& net, const SweepConfig& cfg,
                    const SweepInputs& in);

// Label-free forward pass with the weight means exactly as they stand
// (no damping, no mean refresh): loads the batch and computes omega / V for
// every layer. Typically called right after reset_messages, where the means
// sit at tanh(theta) and all fields are zero. Used for evaluation.
void run_forward(NetworkState& net, const MatA& x0, double v_min = 1e-8);

// Output-channel derivative fields at the full (non-cavity) omega.
// Shapes: omega, V, g, Gamma are [n_out x batch]; labels has one entry per
// sample. SignBinary requires n_out = 1 and labels in {-1, +1}.
void output_sign_moments(const std::vector<int>& labels, const MatA& omega,
                         const MatA& V, MatA& g, MatA& Gamma);

// ArgMax channel (K = rows >= 2, labels in {0..K-1}). eps supplies the
// approach-1 per-sample shifts (ignored by approach 2; may be empty then).
// Per sample the returned g sums to zero exactly in exact arithmetic.
void output_argmax_moments(const std::vector<int>& labels,
                           const std::vector<double>& eps, int approach,
                           const MatA& omega, const MatA& V, MatA& g,
                           MatA& Gamma);

}  // namespace binmp
