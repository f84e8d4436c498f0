#include "binmp/layers.hpp"

#include <cmath>
#include <cstdlib>
#include <utility>

#include "binmp/detail/channel_kernels.hpp"
#include "binmp/special_math.hpp"
#include "layers_hot.hpp"

namespace binmp {
namespace {

using detail::kFastFieldMax;
using detail::kFastSMax;
using detail::kInvSqrt2;
using detail::kZeroFieldMargin;
using detail::kZeroSMin;

Algo layer_algo(const SweepConfig& cfg, size_t l) {
  return cfg.algo.size() == 1 ? cfg.algo[0] : cfg.algo[l];
}

double layer_alpha(const SweepConfig& cfg, size_t l) {
  return cfg.alpha.size() == 1 ? cfg.alpha[0] : cfg.alpha[l];
}

template <typename Derived>
void check_finite(const Eigen::MatrixBase<Derived>& x, Eigen::Index layer,
                  const char* tensor, int tau) {
  if (!x.allFinite()) throw NumericError(layer, tensor, tau);
}

// The per-edge cavity path is required once stored edges can be nonzero (a
// later sweep will read them) or when explicitly forced. Otherwise the edge
// tensors are exactly zero and the fused path below is algebraically
// identical while touching no 3D storage.
bool bp_wants_generic(const LayerState& s, const SweepConfig& cfg) {
  return cfg.force_generic_edges || cfg.tau_max > 1 ||
         (s.edges && s.edges->live);
}

// ---------------------------------------------------------------------------
// Forward sweep pieces
// ---------------------------------------------------------------------------

// Refresh the input-side means/variances of layer l >= 1 from the moments of
// the layer below (current sweep) and the field B left by the previous
// backward sweep. Also caches the channel field u for the cavity path.
void update_activations(const LayerState& below, LayerState& s) {
  const Eigen::Index ni = s.shape.n_in, nb = s.a.xhat.cols();
  s.a.xhat_prev = s.a.xhat;
  for (Eigen::Index n = 0; n < nb; ++n) {
    for (Eigen::Index i = 0; i < ni; ++i) {
      const double u = sign_channel_field(below.p.omega(i, n), below.p.V(i, n));
      const double x = std::tanh(s.a.B(i, n) + u);
      s.a.field_u(i, n) = u;
      s.a.xhat(i, n) = x;
      s.a.delta(i, n) = (1.0 - x) * (1.0 + x);
    }
  }
}

// Preactivation variance, identical for every algorithm: V = m^2 * delta +
// sigma * (xhat^2 + delta), floored. All factors are the current sweep's
// non-cavity tensors.
void compute_variance(LayerState& s, double v_min) {
  const MatA xx =
      (s.a.xhat.array().square() + s.a.delta.array()).matrix();
  s.p.V.noalias() = s.w.m.cwiseProduct(s.w.m) * s.a.delta;
  s.p.V.noalias() += s.w.sigma * xx;
  s.p.V = s.p.V.cwiseMax(v_min);
}

// Full-cavity forward mean: omega_kn = sum_i tanh(theta + H - h_edge) *
// x_edge, with x_edge the input mean with the edge's own return field
// removed (clamped data at layer 0).
void bp_generic_forward_omega(LayerState& s, Eigen::Index layer) {
  EdgeMessages& e = *s.edges;
  const Eigen::Index ni = s.shape.n_in, no = s.shape.n_out,
                     nb = s.a.xhat.cols();
  MatA bu;
  if (layer > 0) bu = s.a.B + s.a.field_u;
  Eigen::VectorXd base_w(ni);
  for (Eigen::Index k = 0; k < no; ++k) {
    for (Eigen::Index i = 0; i < ni; ++i)
      base_w[i] = s.w.theta(k, i) + s.w.H(k, i);
    for (Eigen::Index n = 0; n < nb; ++n) {
      const double* h_row = e.h_edge.row(k, n);
      double acc = 0.0;
      if (layer == 0) {
        const double* x_col = s.a.xhat.col(n).data();
        for (Eigen::Index i = 0; i < ni; ++i)
          acc += std::tanh(base_w[i] - h_row[i]) * x_col[i];
      } else {
        const double* b_row = e.b_edge.row(k, n);
        const double* bu_col = bu.col(n).data();
        for (Eigen::Index i = 0; i < ni; ++i)
          acc += std::tanh(base_w[i] - h_row[i]) *
                 std::tanh(bu_col[i] - b_row[i]);
      }
      s.p.omega(k, n) = acc;
    }
  }
}

void forward_layer(NetworkState& net, Eigen::Index l, const SweepConfig& cfg,
                   int tau) {
  LayerState& s = net.layers[l];
  const Algo algo = layer_algo(cfg, static_cast<size_t>(l));

  if (l > 0) update_activations(net.layers[l - 1], s);

  s.w.m_prev = s.w.m;
  update_weight_means(s.w, layer_alpha(cfg, static_cast<size_t>(l)));

  compute_variance(s, cfg.v_min);

  switch (algo) {
    case Algo::BPI:
    case Algo::MF:
      s.p.omega.noalias() = s.w.m * s.a.xhat;
      break;
    case Algo::AMP: {
      // Memory corrections built from the previous sweep's g (still stored
      // in p.g: the forward runs before the backward overwrites it) and the
      // previous sweep's means. All zero right after a reset.
      s.p.omega.noalias() = s.w.m * s.a.xhat;
      MatA t1 = s.w.sigma * s.a.xhat.cwiseProduct(s.a.xhat_prev);
      t1.noalias() += s.w.m.cwiseProduct(s.w.m_prev) * s.a.delta;
      MatA t2 = s.w.sigma.cwiseProduct(s.w.m_prev) *
                s.a.xhat_prev.cwiseProduct(s.a.delta);
      s.p.omega.array() -= s.p.g.array() * t1.array();
      s.p.omega.array() += s.p.g.array().square() * t2.array();
      break;
    }
    case Algo::BP:
      if (bp_wants_generic(s, cfg)) {
        enable_edge_messages(net, l);
        bp_generic_forward_omega(s, l);
      } else {
        // Stored edges are exactly zero, so every cavity mean equals its
        // non-cavity value and the full sum collapses to the plain product.
        s.p.omega.noalias() = s.w.m * s.a.xhat;
      }
      break;
  }

  if (l > 0) check_finite(s.a.xhat, l, "xhat", tau);
  check_finite(s.p.omega, l, "omega", tau);
  check_finite(s.p.V, l, "V", tau);
}

// ---------------------------------------------------------------------------
// Output channels (full-omega derivative fields)
// ---------------------------------------------------------------------------

void validate_sign_labels(const std::vector<int>& labels, Eigen::Index rows,
                          Eigen::Index cols) {
  if (rows != 1)
    throw std::invalid_argument(
        "sign output channel needs exactly one output unit");
  if (static_cast<Eigen::Index>(labels.size()) != cols)
    throw std::invalid_argument("labels size must match the batch");
  for (int y : labels)
    if (y != 1 && y != -1)
      throw std::domain_error("sign output labels must be +-1");
}

void validate_argmax_inputs(const std::vector<int>& labels,
                            const std::vector<double>& eps, int approach,
                            Eigen::Index rows, Eigen::Index cols) {
  if (rows < 2)
    throw std::domain_error("argmax output channel needs at least 2 classes");
  if (static_cast<Eigen::Index>(labels.size()) != cols)
    throw std::invalid_argument("labels size must match the batch");
  for (int y : labels)
    if (y < 0 || y >= rows)
      throw std::domain_error("argmax label out of class range");
  if (approach != 1 && approach != 2)
    throw std::invalid_argument("argmax approach must be 1 or 2");
  if (approach == 1 && static_cast<Eigen::Index>(eps.size()) != cols)
    throw std::invalid_argument(
        "argmax approach 1 needs one sampled shift per sample");
}

// Per-sample shifted-tail bases shared by the 2D moments and the per-edge
// rows. For the label row k* the entries carry no meaning and are set so a
// stray read is harmless.
struct ArgmaxBases {
  Eigen::VectorXd s;  // tail argument per competitor row
  Eigen::VectorXd c;  // the scale 1/sqrt(V) (approach 1) or
                      // 1/sqrt(V + V_label) (approach 2) per row
};

void argmax_bases(const MatA& omega, const MatA& V, Eigen::Index n, int k_star,
                  int approach, double eps_n, ArgmaxBases& out) {
  const Eigen::Index K = omega.rows();
  out.s.resize(K);
  out.c.resize(K);
  if (approach == 1) {
    const double anchor = omega(k_star, n) + eps_n * std::sqrt(V(k_star, n));
    for (Eigen::Index k = 0; k < K; ++k) {
      const double c = 1.0 / std::sqrt(V(k, n));
      out.c[k] = c;
      out.s[k] = -(anchor - omega(k, n)) * c;
    }
  } else {
    const double v_star = V(k_star, n);
    const double w_star = omega(k_star, n);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double c = 1.0 / std::sqrt(V(k, n) + v_star);
      out.c[k] = c;
      out.s[k] = -(w_star - omega(k, n)) * c;
    }
  }
  out.s[k_star] = 0.0;
}

}  // namespace

void output_sign_moments(const std::vector<int>& labels, const MatA& omega,
                         const MatA& V, MatA& g, MatA& Gamma) {
  validate_sign_labels(labels, omega.rows(), omega.cols());
  const Eigen::Index nb = omega.cols();
  g.resize(1, nb);
  Gamma.resize(1, nb);
  for (Eigen::Index n = 0; n < nb; ++n) {
    const OutputMoments mo =
        phi_output_binary(labels[static_cast<size_t>(n)], omega(0, n), V(0, n));
    g(0, n) = mo.g;
    Gamma(0, n) = mo.Gamma;
  }
}

void output_argmax_moments(const std::vector<int>& labels,
                           const std::vector<double>& eps, int approach,
                           const MatA& omega, const MatA& V, MatA& g,
                           MatA& Gamma) {
  validate_argmax_inputs(labels, eps, approach, omega.rows(), omega.cols());
  const Eigen::Index K = omega.rows(), nb = omega.cols();
  g.resize(K, nb);
  Gamma.resize(K, nb);
  ArgmaxBases bases;
  for (Eigen::Index n = 0; n < nb; ++n) {
    const int k_star = labels[static_cast<size_t>(n)];
    argmax_bases(omega, V, n, k_star, approach,
                 approach == 1 ? eps[static_cast<size_t>(n)] : 0.0, bases);
    double g_star = 0.0, gamma_star = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (k == k_star) continue;
      const double kr = k_ratio(bases.s[k]);
      const double gk = -bases.c[k] * kr;
      // -d g_k / d omega_k; the hazard-ratio derivative K' = K (K - s).
      const double gam = kr * (kr - bases.s[k]) * bases.c[k] * bases.c[k];
      g(k, n) = gk;
      Gamma(k, n) = gam;
      g_star -= gk;
      gamma_star += gam;
    }
    g(k_star, n) = g_star;
    Gamma(k_star, n) = gamma_star;
  }
}

namespace {

// ---------------------------------------------------------------------------
// Backward sweep pieces
// ---------------------------------------------------------------------------

bool sign_row_is_fast(double b_up, double omega, double inv_sqrt_v) {
  // Cavity subtractions shift omega by at most |m * xhat| <= 1.
  return std::abs(b_up) <= kFastFieldMax &&
         (std::abs(omega) + 1.0) * inv_sqrt_v * kInvSqrt2 <= kFastSMax;
}

// Fills g_row with the per-edge derivative of the downstream sign channel at
// the cavity means omega - w_mean[i] * x_mean[i]. Returns false when the row
// is identically zero, in which case g_row is left untouched and the caller
// can skip its accumulations. Saturated networks (V at its floor, |omega|
// large) put almost every row deep in one Gaussian tail: there the favored
// term underflows to zero outright, and the row either vanishes entirely
// (the upward field does not fight the evidence) or reduces to the log-space
// tail kernel. Only rows straddling the tail boundary pay the strict scalar
// price.
bool sign_g_edge_row(double b_up, double omega, double v, double inv_sqrt_v,
                     const double* w_mean, const double* x_mean, double* g_row,
                     Eigen::Index ni) {
  if (sign_row_is_fast(b_up, omega, inv_sqrt_v)) {
    hot::sign_g_row(b_up, omega, inv_sqrt_v, w_mean, x_mean, g_row, ni);
    return true;
  }
  const double a = std::abs(omega);
  const double s_lo = (a - 1.0) * inv_sqrt_v * kInvSqrt2;
  if (a > 1.0 && s_lo >= kZeroSMin) {
    const double sgn = omega > 0.0 ? 1.0 : -1.0;
    const double aligned_b = sgn * b_up;
    if (aligned_b >= kZeroFieldMargin - 0.5 * s_lo * s_lo) return false;
    hot::sign_g_tail_row(aligned_b, sgn, a, inv_sqrt_v, w_mean, x_mean, g_row,
                         ni);
    return true;
  }
  for (Eigen::Index i = 0; i < ni; ++i)
    g_row[i] =
        phi_sign_omega_moments(b_up, omega - w_mean[i] * x_mean[i], v).g;
  return true;
}

// Same for a +-1 labelled output unit: the derivative is y K(-y t_c) / sqrt(V)
// and the inverse Mills ratio K vanishes once the label's tail argument is
// past the underflow bound on every edge; on the conflict side the asymptotic
// tail kernel applies instead.
bool output_g_edge_row(int y, double omega, double v, double inv_sqrt_v,
                       const double* w_mean, const double* x_mean,
                       double* g_row, Eigen::Index ni) {
  if (sign_row_is_fast(0.0, omega, inv_sqrt_v)) {
    hot::output_g_row(static_cast<double>(y), omega, inv_sqrt_v, w_mean,
                      x_mean, g_row, ni);
  } else if ((y * omega - 1.0) * inv_sqrt_v * kInvSqrt2 >= kZeroSMin) {
    return false;
  } else if ((-y * omega - 1.0) * inv_sqrt_v * kInvSqrt2 >= kZeroSMin) {
    hot::output_g_tail_row(static_cast<double>(y), omega, inv_sqrt_v, w_mean,
                           x_mean, g_row, ni);
  } else {
    for (Eigen::Index i = 0; i < ni; ++i)
      g_row[i] =
          phi_output_binary(y, omega - w_mean[i] * x_mean[i], v).g;
  }
  return true;
}

// Per-edge derivative rows of the argmax channel for one sample. The edge
// product w_mean[i] * x_mean[i] is subtracted from the row's own omega; for
// the label row that shift moves the anchor, so every competitor tail moves.
struct ArgmaxRowCtx {
  ArgmaxBases bases;
  std::vector<char> row_fast;
  // A competitor's tail ratio K underflows to exactly zero on every edge
  // once its largest possible argument s_k + c_k sits past the underflow
  // bound (t-units: exp(-t^2/2) = 0 for t <= -38.7). Such rows, and a label
  // row whose competitors all vanish, can be skipped outright.
  std::vector<char> row_zero;
  bool all_zero = false;
  Eigen::VectorXd k_buf;

  void prepare(const MatA& omega, const MatA& V, Eigen::Index n, int k_star,
               int approach, double eps_n, Eigen::Index ni) {
    argmax_bases(omega, V, n, k_star, approach, eps_n, bases);
    const Eigen::Index K = omega.rows();
    row_fast.assign(static_cast<size_t>(K), 1);
    row_zero.assign(static_cast<size_t>(K), 0);
    all_zero = true;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (k == k_star) continue;
      row_zero[static_cast<size_t>(k)] =
          bases.s[k] + bases.c[k] <= -(kZeroSMin / kInvSqrt2);
      if (!row_zero[static_cast<size_t>(k)]) all_zero = false;
      row_fast[static_cast<size_t>(k)] =
          (std::abs(bases.s[k]) + bases.c[k]) * kInvSqrt2 <= kFastSMax;
    }
    if (k_buf.size() < ni) k_buf.resize(ni);
  }

  // Row for a competitor class k != k_star. Returns false for a zero row,
  // leaving g_row untouched.
  bool competitor_row(Eigen::Index k, const double* w_mean,
                      const double* x_mean, double* g_row, Eigen::Index ni) {
    if (row_zero[static_cast<size_t>(k)]) return false;
    const double c = bases.c[k], s = bases.s[k];
    if (row_fast[static_cast<size_t>(k)]) {
      hot::kratio_shift_row(s, -c, w_mean, x_mean, k_buf.data(), ni);
      for (Eigen::Index i = 0; i < ni; ++i) g_row[i] = -c * k_buf[i];
    } else {
      for (Eigen::Index i = 0; i < ni; ++i)
        g_row[i] = -c * k_ratio(s - c * w_mean[i] * x_mean[i]);
    }
    return true;
  }

  // Row for the label class: the shift enters every competitor tail with the
  // opposite sign. Returns false when every competitor row vanishes.
  bool label_row(Eigen::Index K, int k_star, const double* w_mean,
                 const double* x_mean, double* g_row, Eigen::Index ni) {
    if (all_zero) return false;
    for (Eigen::Index i = 0; i < ni; ++i) g_row[i] = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (k == k_star || row_zero[static_cast<size_t>(k)]) continue;
      const double c = bases.c[k], s = bases.s[k];
      if (row_fast[static_cast<size_t>(k)]) {
        hot::kratio_shift_row(s, c, w_mean, x_mean, k_buf.data(), ni);
        for (Eigen::Index i = 0; i < ni; ++i) g_row[i] += c * k_buf[i];
      } else {
        for (Eigen::Index i = 0; i < ni; ++i)
          g_row[i] += c * k_ratio(s + c * w_mean[i] * x_mean[i]);
      }
    }
    return true;
  }
};

// Context describing what sits downstream of a layer during the backward
// sweep: either the next layer's input field, or the output channel.
struct Downstream {
  const MatA* b_up = nullptr;  // hidden: field onto this layer's outputs
  const OutputChannel* out = nullptr;  // top: channel descriptor
  const std::vector<int>* labels = nullptr;
  const std::vector<double>* eps = nullptr;
};

// Full-omega derivative fields g / Gamma for this layer's factors. These are
// the non-cavity values every algorithm stores; the per-edge paths evaluate
// their own shifted copies on the fly.
void compute_factor_moments(LayerState& s, const Downstream& down) {
  const Eigen::Index no = s.shape.n_out, nb = s.a.xhat.cols();
  if (down.out == nullptr) {
    for (Eigen::Index n = 0; n < nb; ++n) {
      for (Eigen::Index k = 0; k < no; ++k) {
        const OmegaMoments mo = phi_sign_omega_moments(
            (*down.b_up)(k, n), s.p.omega(k, n), s.p.V(k, n));
        s.p.g(k, n) = mo.g;
        s.p.Gamma(k, n) = mo.Gamma;
      }
    }
  } else if (down.out->kind == OutputKind::SignBinary) {
    output_sign_moments(*down.labels, s.p.omega, s.p.V, s.p.g, s.p.Gamma);
  } else {
    static const std::vector<double> no_eps;
    output_argmax_moments(*down.labels, down.eps ? *down.eps : no_eps,
                          down.out->argmax_approach, s.p.omega, s.p.V, s.p.g,
                          s.p.Gamma);
  }
}

// Non-cavity field updates (mean-field): H = g xhat^T, B = m^T g.
void mf_backward_fields(LayerState& s, Eigen::Index layer) {
  s.w.H.noalias() = s.p.g * s.a.xhat.transpose();
  if (layer > 0) s.a.B.noalias() = s.w.m.transpose() * s.p.g;
}

// Memory-corrected field updates: the plain products plus the current
// sweep's correction terms, all built from full-omega g / Gamma.
void amp_backward_fields(LayerState& s, Eigen::Index layer) {
  const MatA gg = s.p.g.cwiseProduct(s.p.g);
  const MatA g_gamma = s.p.g.cwiseProduct(s.p.Gamma);
  const MatA xx = s.a.xhat.cwiseProduct(s.a.xhat);

  MatW h_corr = s.p.Gamma * xx.transpose();
  h_corr.noalias() -= gg * s.a.delta.transpose();
  MatW h_corr2 = g_gamma * s.a.delta.cwiseProduct(s.a.xhat).transpose();
  s.w.H.noalias() = s.p.g * s.a.xhat.transpose();
  s.w.H += s.w.m.cwiseProduct(h_corr);
  s.w.H -= s.w.m.cwiseProduct(s.w.m).cwiseProduct(h_corr2);

  if (layer > 0) {
    MatA b_corr = s.w.m.cwiseProduct(s.w.m).transpose() * s.p.Gamma;
    b_corr.noalias() -= s.w.sigma.transpose() * gg;
    const MatA b_corr2 = s.w.sigma.cwiseProduct(s.w.m).transpose() * g_gamma;
    s.a.B.noalias() = s.w.m.transpose() * s.p.g;
    s.a.B += s.a.xhat.cwiseProduct(b_corr);
    s.a.B -= xx.cwiseProduct(b_corr2);
  }
}

// Shared row loop for the single-subtraction path (BPI) and the exact
// cavity path at provably zero edges (BP with tau_max = 1). Accumulates
// H = sum_n xhat * g_edge and B = sum_k m * g_edge from per-edge derivatives
// g_edge evaluated at omega - m_ki xhat_in.
void edge_row_backward_fused(LayerState& s, Eigen::Index layer,
                             const Downstream& down) {
  const Eigen::Index ni = s.shape.n_in, no = s.shape.n_out,
                     nb = s.a.xhat.cols();
  const bool write_b = layer > 0;
  if (write_b) s.a.B.setZero();
  Eigen::VectorXd g_row(ni), h_acc(ni);
  ArgmaxRowCtx argmax;
  const bool is_argmax = down.out && down.out->kind == OutputKind::ArgMax;

  for (Eigen::Index k = 0; k < no; ++k) {
    h_acc.setZero();
    const double* m_row = s.w.m.row(k).data();
    for (Eigen::Index n = 0; n < nb; ++n) {
      const double* x_col = s.a.xhat.col(n).data();
      const double v = s.p.V(k, n);
      const double inv_sqrt_v = 1.0 / std::sqrt(v);
      const double w_kn = s.p.omega(k, n);
      bool live;
      if (down.out == nullptr) {
        live = sign_g_edge_row((*down.b_up)(k, n), w_kn, v, inv_sqrt_v, m_row,
                               x_col, g_row.data(), ni);
      } else if (!is_argmax) {
        live = output_g_edge_row((*down.labels)[static_cast<size_t>(n)], w_kn,
                                 v, inv_sqrt_v, m_row, x_col, g_row.data(), ni);
      } else {
        const int k_star = (*down.labels)[static_cast<size_t>(n)];
        argmax.prepare(s.p.omega, s.p.V, n, k_star, down.out->argmax_approach,
                       down.out->argmax_approach == 1
                           ? (*down.eps)[static_cast<size_t>(n)]
                           : 0.0,
                       ni);
        if (k == k_star)
          live = argmax.label_row(no, k_star, m_row, x_col, g_row.data(), ni);
        else
          live = argmax.competitor_row(k, m_row, x_col, g_row.data(), ni);
      }
      if (!live) continue;  // zero row: nothing to accumulate
      for (Eigen::Index i = 0; i < ni; ++i) h_acc[i] += x_col[i] * g_row[i];
      if (write_b) {
        double* b_col = s.a.B.col(n).data();
        for (Eigen::Index i = 0; i < ni; ++i) b_col[i] += m_row[i] * g_row[i];
      }
    }
    s.w.H.row(k) = h_acc.transpose();
  }
}

// Exact cavity path with stored edges: recomputes the per-edge means the
// forward used (theta + H and B + u snapshots predate this sweep's writes),
// evaluates the per-edge derivative at the cavity omega, stores each edge's
// new contribution, and accumulates the full fields.
void edge_row_backward_generic(LayerState& s, Eigen::Index layer,
                               const Downstream& down) {
  EdgeMessages& e = *s.edges;
  const Eigen::Index ni = s.shape.n_in, no = s.shape.n_out,
                     nb = s.a.xhat.cols();
  const bool write_b = layer > 0;
  MatA bu;
  if (write_b) bu = s.a.B + s.a.field_u;  // snapshot before B is overwritten
  if (write_b) s.a.B.setZero();
  Eigen::VectorXd g_row(ni), h_acc(ni), base_w(ni), m_edge(ni), x_edge(ni);
  ArgmaxRowCtx argmax;
  const bool is_argmax = down.out && down.out->kind == OutputKind::ArgMax;

  for (Eigen::Index k = 0; k < no; ++k) {
    for (Eigen::Index i = 0; i < ni; ++i)
      base_w[i] = s.w.theta(k, i) + s.w.H(k, i);
    h_acc.setZero();
    for (Eigen::Index n = 0; n < nb; ++n) {
      double* h_row = e.h_edge.row(k, n);
      double* b_row = write_b ? e.b_edge.row(k, n) : nullptr;
      for (Eigen::Index i = 0; i < ni; ++i)
        m_edge[i] = std::tanh(base_w[i] - h_row[i]);
      if (write_b) {
        const double* bu_col = bu.col(n).data();
        for (Eigen::Index i = 0; i < ni; ++i)
          x_edge[i] = std::tanh(bu_col[i] - b_row[i]);
      } else {
        x_edge = s.a.xhat.col(n);
      }
      const double v = s.p.V(k, n);
      const double inv_sqrt_v = 1.0 / std::sqrt(v);
      const double w_kn = s.p.omega(k, n);
      bool live;
      if (down.out == nullptr) {
        live = sign_g_edge_row((*down.b_up)(k, n), w_kn, v, inv_sqrt_v,
                               m_edge.data(), x_edge.data(), g_row.data(), ni);
      } else if (!is_argmax) {
        live = output_g_edge_row((*down.labels)[static_cast<size_t>(n)], w_kn,
                                 v, inv_sqrt_v, m_edge.data(), x_edge.data(),
                                 g_row.data(), ni);
      } else {
        const int k_star = (*down.labels)[static_cast<size_t>(n)];
        argmax.prepare(s.p.omega, s.p.V, n, k_star, down.out->argmax_approach,
                       down.out->argmax_approach == 1
                           ? (*down.eps)[static_cast<size_t>(n)]
                           : 0.0,
                       ni);
        if (k == k_star)
          live = argmax.label_row(no, k_star, m_edge.data(), x_edge.data(),
                                  g_row.data(), ni);
        else
          live = argmax.competitor_row(k, m_edge.data(), x_edge.data(),
                                       g_row.data(), ni);
      }
      if (!live) {
        // Zero row: the stored edge contributions must still be updated,
        // since the next sweep's cavity subtractions read them.
        for (Eigen::Index i = 0; i < ni; ++i) h_row[i] = 0.0;
        if (write_b)
          for (Eigen::Index i = 0; i < ni; ++i) b_row[i] = 0.0;
        continue;
      }
      for (Eigen::Index i = 0; i < ni; ++i) {
        const double contrib_h = x_edge[i] * g_row[i];
        h_row[i] = contrib_h;
        h_acc[i] += contrib_h;
      }
      if (write_b) {
        double* b_col = s.a.B.col(n).data();
        for (Eigen::Index i = 0; i < ni; ++i) {
          const double contrib_b = m_edge[i] * g_row[i];
          b_row[i] = contrib_b;
          b_col[i] += contrib_b;
        }
      }
    }
    s.w.H.row(k) = h_acc.transpose();
  }
  e.live = true;
}

// Diagnostic curvature fields, evaluated from the full-omega g / Gamma:
//   A_in = sum_k (m^2 + sigma) Gamma - sigma g^2
//   G_ki = sum_n (xhat^2 + delta) Gamma - delta g^2
void curvature_fields(LayerState& s) {
  const MatA gg = s.p.g.cwiseProduct(s.p.g);
  s.a.A.noalias() =
      (s.w.m.cwiseProduct(s.w.m) + s.w.sigma).transpose() * s.p.Gamma;
  s.a.A.noalias() -= s.w.sigma.transpose() * gg;
  s.w.G.noalias() =
      s.p.Gamma * (s.a.xhat.cwiseProduct(s.a.xhat) + s.a.delta).transpose();
  s.w.G.noalias() -= gg * s.a.delta.transpose();
}

void backward_layer(NetworkState& net, Eigen::Index l, const SweepConfig& cfg,
                    const SweepInputs& in, int tau) {
  LayerState& s = net.layers[l];
  const Algo algo = layer_algo(cfg, static_cast<size_t>(l));
  const bool top = (l == net.depth() - 1);

  Downstream down;
  if (top) {
    down.out = &cfg.output;
    down.labels = in.labels;
    down.eps = in.argmax_eps;
  } else {
    down.b_up = &net.layers[l + 1].a.B;
  }

  compute_factor_moments(s, down);

  switch (algo) {
    case Algo::MF:
      mf_backward_fields(s, l);
      break;
    case Algo::AMP:
      amp_backward_fields(s, l);
      break;
    case Algo::BPI:
      edge_row_backward_fused(s, l, down);
      break;
    case Algo::BP:
      if (bp_wants_generic(s, cfg)) {
        enable_edge_messages(net, l);
        edge_row_backward_generic(s, l, down);
      } else {
        edge_row_backward_fused(s, l, down);
      }
      break;
  }

  if (cfg.track_curvature) curvature_fields(s);

  check_finite(s.p.g, l, "g", tau);
  check_finite(s.p.Gamma, l, "Gamma", tau);
  check_finite(s.w.H, l, "H", tau);
  if (l > 0) check_finite(s.a.B, l, "B", tau);
}

void validate_config(const NetworkState& net, const SweepConfig& cfg,
                     const SweepInputs& in) {
  const size_t depth = net.layers.size();
  if (cfg.algo.size() != 1 && cfg.algo.size() != depth)
    throw std::invalid_argument("algo list must have 1 or depth entries");
  if (cfg.alpha.size() != 1 && cfg.alpha.size() != depth)
    throw std::invalid_argument("alpha list must have 1 or depth entries");
  for (double a : cfg.alpha)
    if (!(a >= 0.0 && a < 1.0))
      throw std::invalid_argument("alpha must lie in [0, 1)");
  if (cfg.tau_max < 1) throw std::invalid_argument("tau_max must be >= 1");
  if (!(cfg.v_min > 0.0))
    throw std::invalid_argument("v_min must be positive");
  if (in.x0 == nullptr || in.labels == nullptr)
    throw std::invalid_argument("inner loop needs inputs and labels");
  if (cfg.track_curvature && net.layers[0].w.G.size() == 0)
    throw std::invalid_argument(
        "curvature tracking needs a network built with track_curvature");

  const Eigen::Index nb = in.x0->cols();
  if (nb <= 0) throw std::invalid_argument("batch must be nonempty");
  if (in.x0->rows() != net.layers[0].shape.n_in)
    throw std::invalid_argument("input width does not match the network");

  const LayerState& topl = net.layers.back();
  if (cfg.output.kind == OutputKind::SignBinary) {
    validate_sign_labels(*in.labels, topl.shape.n_out, nb);
  } else {
    static const std::vector<double> no_eps;
    validate_argmax_inputs(*in.labels,
                           in.argmax_eps ? *in.argmax_eps : no_eps,
                           cfg.output.argmax_approach, topl.shape.n_out, nb);
  }
}

}  // namespace

void load_input(NetworkState& net, const MatA& x0) {
  LayerState& s = net.layers.front();
  if (x0.rows() != s.shape.n_in)
    throw std::invalid_argument("input width does not match the network");
  if (net.batch != x0.cols()) resize_batch(net, x0.cols());
  if (x0.cwiseAbs().maxCoeff() > 1.0 + 1e-12)
    throw std::invalid_argument(
        "inputs must be means of +-1 variables, |x| <= 1");
  s.a.xhat = x0;
  s.a.xhat_prev = x0;
  s.a.delta.setZero();
}

void forward_sweep(NetworkState& net, const SweepConfig& cfg, int tau) {
  for (Eigen::Index l = 0; l < net.depth(); ++l)
    forward_layer(net, l, cfg, tau);
}

void backward_sweep(NetworkState& net, const SweepConfig& cfg,
                    const SweepInputs& in, int tau) {
  for (Eigen::Index l = net.depth() - 1; l >= 0; --l)
    backward_layer(net, l, cfg, in, tau);
}

void run_inner_loop(NetworkState& net, const SweepConfig& cfg,
                    const SweepInputs& in) {
  validate_config(net, cfg, in);
  load_input(net, *in.x0);
  for (int tau = 1; tau <= cfg.tau_max; ++tau) {
    forward_sweep(net, cfg, tau);
    backward_sweep(net, cfg, in, tau);
  }
}

void run_forward(NetworkState& net, const MatA& x0, double v_min) {
  load_input(net, x0);
  for (Eigen::Index l = 0; l < net.depth(); ++l) {
    LayerState& s = net.layers[l];
    if (l > 0) update_activations(net.layers[l - 1], s);
    compute_variance(s, v_min);
    s.p.omega.noalias() = s.w.m * s.a.xhat;
    check_finite(s.p.omega, l, "omega", 0);
    check_finite(s.p.V, l, "V", 0);
  }
}

}  // namespace binmp
