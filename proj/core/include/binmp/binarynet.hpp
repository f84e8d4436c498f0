#pragma once

#include <cstdint>
#include <vector>

#include "binmp/data.hpp"
#include "binmp/metrics.hpp"

// SGD baseline with binary forward passes: continuous weights kept in
// [-1, 1], sign(w) used in the forward, straight-through gradients, plain
// SGD on a cross-entropy loss, no biases or normalization layers. Parameter
// counts match the message-passing network of the same architecture.

namespace binmp {

struct BinaryNetConfig {
  std::vector<Eigen::Index> hidden;  // hidden widths; output width from the dataset
  double lr = 10.0;
  Eigen::Index batch_size = 128;
  int epochs = 1;  // per task for bn_train_continual
  uint64_t seed = 1;
  // Multi-class loss: per-class binary cross-entropy on sigmoid(logit)
  // against one-hot targets by default; softmax cross-entropy behind this
  // flag for sensitivity checks. 2-class runs use a single logit with sign
  // readout either way.
  bool softmax_ce = false;
};

struct BinaryNetState {
  std::vector<Eigen::Index> dims;  // {n_0, ..., n_L}
  std::vector<MatW> w;             // continuous weights, clipped to [-1, 1]
};

// Forward nonlinearity selector.
//   Binary     sign(.) on weights and hidden activations (ties at 0 -> +1);
//              training and evaluation mode.
//   Surrogate  hard-tanh clip(., -1, 1) in place of every sign; the
//              differentiable-almost-everywhere function whose exact
//              gradient the backward computes, used by finite-difference
//              oracles. The straight-through rule is precisely the Binary
//              forward combined with the Surrogate masks.
enum class BnMode { Binary, Surrogate };

// Xavier-uniform init, U(+-sqrt(6 / (fan_in + fan_out))) per layer, from
// counter-based streams (bitwise reproducible per seed).
BinaryNetState bn_init(const std::vector<Eigen::Index>& dims, uint64_t seed);

// Logits [K x batch]: each layer computes preactivations w_b * a / sqrt(N)
// (N = previous layer width), hidden layers apply the mode's nonlinearity,
// the last layer emits the rescaled preactivations.
MatA bn_forward(const BinaryNetState& state, const MatA& x,
                BnMode mode = BnMode::Binary);

// Mean (over the batch) cross-entropy of bn_forward's logits. 2-class
// labels are {-1, +1}; multi-class labels are {0 .. K-1}.
double bn_loss(const BinaryNetState& state, const MatA& x,
               const std::vector<int>& labels, bool softmax_ce = false,
               BnMode mode = BnMode::Binary);

// Gradient of bn_loss w.r.t. every weight. Straight-through rules: identity
// through each sign, zeroed where the matching hard-tanh saturates strictly
// (|w| > 1 for weights, |z| > 1 for hidden preactivations), so weights
// sitting exactly on the clip boundary keep their gradient and can re-enter
// the interior. In Surrogate mode the same code path is the exact gradient
// of the hard-tanh network almost everywhere.
std::vector<MatW> bn_gradient(const BinaryNetState& state, const MatA& x,
                              const std::vector<int>& labels,
                              bool softmax_ce = false,
                              BnMode mode = BnMode::Binary);

// One SGD step, w -= lr * grad, followed by the clip of every weight to
// [-1, 1].
void bn_backward_step(BinaryNetState& state, const MatA& x,
                      const std::vector<int>& labels, double lr,
                      bool softmax_ce = false, BnMode mode = BnMode::Binary);

// Full run / sequential-task run with the same schedule, metric rows and
// determinism contract as the message-passing trainer (algo column
// "binarynet"; Bayesian columns NaN; overlap columns computed on sign(w)).
RunMetrics bn_train(const Dataset& train_set, const Dataset& test_set,
                    const BinaryNetConfig& cfg);
ContinualMetrics bn_train_continual(const std::vector<Dataset>& train_tasks,
                                    const std::vector<Dataset>& test_tasks,
                                    const BinaryNetConfig& cfg);

}  // namespace binmp
