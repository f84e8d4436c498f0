#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

// State carried by the message-passing sweeps. Conventions, used everywhere:
//   - a layer maps n_in inputs to n_out outputs through +-1 weights,
//     preactivation = sum_i w_ki x_i (plain sum; the sign nonlinearity is
//     scale-free, so no width normalization enters the sweeps);
//   - weight-shaped tensors are [n_out x n_in], row-major so a sweep over
//     the input index of one output unit is contiguous;
//   - activation- and preactivation-shaped tensors are column-major with one
//     column per sample ([n_in x batch] and [n_out x batch]);
//   - per-edge tensors are indexed [unit k][sample n][input i], i contiguous.

namespace binmp {

using MatW = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatA = Eigen::MatrixXd;

// Dense [d0][d1][d2] buffer with contiguous rows along d2.
struct Tensor3 {
  std::vector<double> buf;
  Eigen::Index d0 = 0, d1 = 0, d2 = 0;

  void resize(Eigen::Index a, Eigen::Index b, Eigen::Index c) {
    d0 = a;
    d1 = b;
    d2 = c;
    buf.assign(static_cast<size_t>(a) * b * c, 0.0);
  }
  void set_zero() { std::fill(buf.begin(), buf.end(), 0.0); }
  double* row(Eigen::Index a, Eigen::Index b) {
    return buf.data() + (a * d1 + b) * d2;
  }
  const double* row(Eigen::Index a, Eigen::Index b) const {
    return buf.data() + (a * d1 + b) * d2;
  }
  double& operator()(Eigen::Index a, Eigen::Index b, Eigen::Index c) {
    return buf[(a * d1 + b) * d2 + c];
  }
  double operator()(Eigen::Index a, Eigen::Index b, Eigen::Index c) const {
    return buf[(a * d1 + b) * d2 + c];
  }
  size_t size() const { return buf.size(); }
};

// Messages attached to one layer's weights.
struct WeightMessages {
  MatW theta;   // prior field (the quantity updated by the outer loop)
  MatW H;       // accumulated likelihood field from this batch
  MatW m;       // posterior mean tanh(theta + H) (possibly damped)
  MatW m_prev;  // mean from the previous sweep (damping + memory terms)
  MatW sigma;   // posterior variance 1 - m^2
  MatW G;       // curvature field onto weights; diagnostic only for +-1
};

// Messages attached to one layer's input activations.
struct ActMessages {
  MatA B;          // field from this layer's factors onto its inputs
  MatA A;          // curvature companion of B; diagnostic only for +-1
  MatA xhat;       // input posterior means (layer 0: the data itself)
  MatA delta;      // input posterior variances
  MatA xhat_prev;  // means from the previous sweep (memory terms)
  MatA field_u;    // cached log-odds field from the layer below's moments,
                   // refreshed by every forward sweep (unused at layer 0)
};

// Per-factor preactivation statistics.
struct PreactMessages {
  MatA omega;  // mean of the weighted sum
  MatA V;      // variance of the weighted sum (floored)
  MatA g;      // first omega-derivative of the factor log-partition,
               // always evaluated at the full (non-cavity) omega
  MatA Gamma;  // minus the second omega-derivative, at the full omega
};

// Per-edge factor contributions, needed only by the full cavity algorithm
// when edges carry information between sweeps. Each entry stores the edge's
// own summand, so the cavity value is the matching total minus the entry:
//   h_edge[k][n][i] = xhat_edge * g_edge   (weight side)
//   b_edge[k][n][i] = m_edge * g_edge      (input side)
// b_edge stays empty on layer 0: its inputs are clamped to the data, so a
// field onto them is never read.
struct EdgeMessages {
  Tensor3 h_edge;    // [n_out][batch][n_in]
  Tensor3 b_edge;    // [n_out][batch][n_in]
  bool live = false; // true once a backward sweep has written the tensors;
                     // cleared by reset_messages, letting sweeps prove the
                     // cavity state is exactly zero
};

struct LayerShape {
  Eigen::Index n_in = 0, n_out = 0;
};

struct LayerState {
  LayerShape shape;
  WeightMessages w;
  ActMessages a;
  PreactMessages p;
  std::optional<EdgeMessages> edges;
};

struct NetworkState {
  std::vector<LayerState> layers;
  Eigen::Index batch = 0;

  Eigen::Index depth() const { return static_cast<Eigen::Index>(layers.size()); }
};

// Builds a network for the given unit counts (dims = {n_0, ..., n_L}), with
// all weight priors at zero. Per-sample tensors stay empty until
// resize_batch.
NetworkState make_network(const std::vector<Eigen::Index>& dims,
                          bool track_curvature = false);

// (Re)sizes every per-sample tensor for a batch of the given width.
// Edge tensors are allocated only where a layer already carries them.
void resize_batch(NetworkState& net, Eigen::Index batch);

// Enables per-edge cavity storage on one layer, or on every layer
// (allocated at the current batch width if one is set). Layer 0 gets no
// b_edge tensor; see EdgeMessages.
void enable_edge_messages(NetworkState& net, Eigen::Index layer);
void enable_edge_messages(NetworkState& net);

// Start-of-outer-step reset: zeroes every accumulated field and every
// memory tensor, and re-centers the weight posteriors on the prior,
// m = m_prev = tanh(theta), sigma = 1 - m^2.
void reset_messages(NetworkState& net);

// Same field/memory reset, but with keep_weight_means the current means m
// survive as the damping anchor of the next step's first mean update
// (m_prev = m, sigma refreshed from it) instead of re-centering on the
// prior. At tau_max = 1 this is the only way mean damping can act at all:
// re-centered means make the first (and only) update a fixed point of the
// damping recursion.
void reset_messages(NetworkState& net, bool keep_weight_means);

// Damped mean update for one layer: m = alpha * m_prev + (1 - alpha) *
// tanh(theta + H), then sigma = 1 - m^2. Does not advance m_prev; sweeps
// decide when a sweep boundary has passed.
void update_weight_means(WeightMessages& w, double alpha);

}  // namespace binmp
