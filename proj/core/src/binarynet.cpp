#include "binmp/binarynet.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "binmp/detail/rng.hpp"
#include "binmp/evalkit.hpp"

namespace binmp {

namespace {

constexpr uint64_t kTagXavier = 0x31;
constexpr uint64_t kTagShuffle = 0x12;

double clock_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

MatW binarize_w(const MatW& w, BnMode mode) {
  if (mode == BnMode::Binary) {
    return (w.array() >= 0.0).select(MatW::Ones(w.rows(), w.cols()),
                                     -MatW::Ones(w.rows(), w.cols()));
  }
  return w.array().min(1.0).max(-1.0).matrix();
}

MatA binarize_a(const MatA& z, BnMode mode) {
  if (mode == BnMode::Binary) {
    return (z.array() >= 0.0).select(MatA::Ones(z.rows(), z.cols()),
                                     -MatA::Ones(z.rows(), z.cols()));
  }
  return z.array().min(1.0).max(-1.0).matrix();
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  return z > 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

void check_labels(const BinaryNetState& state, const MatA& x,
                  const std::vector<int>& labels) {
  if (x.rows() != state.dims.front()) {
    throw std::invalid_argument("input has " + std::to_string(x.rows()) +
                                " features, network expects " +
                                std::to_string(state.dims.front()));
  }
  if (static_cast<Eigen::Index>(labels.size()) != x.cols()) {
    throw std::invalid_argument("label count does not match batch width");
  }
  const Eigen::Index k = state.dims.back();
  for (int y : labels) {
    if (k == 1 ? (y != -1 && y != 1) : (y < 0 || y >= k)) {
      throw std::invalid_argument("label " + std::to_string(y) +
                                  " invalid for this readout");
    }
  }
}

// Forward pass storing the per-layer inputs and preactivations the backward
// needs. acts[l] feeds layer l; z[l] is its scaled preactivation.
struct ForwardTrace {
  std::vector<MatA> acts;
  std::vector<MatA> z;
};

ForwardTrace bn_forward_trace(const BinaryNetState& state, const MatA& x, BnMode mode) {
  const size_t depth = state.w.size();
  ForwardTrace tr;
  tr.acts.resize(depth);
  tr.z.resize(depth);
  tr.acts[0] = x;
  for (size_t l = 0; l < depth; ++l) {
    const double inv_sqrt_n = 1.0 / std::sqrt(double(state.dims[l]));
    tr.z[l].noalias() = binarize_w(state.w[l], mode) * tr.acts[l];
    tr.z[l] *= inv_sqrt_n;
    if (l + 1 < depth) tr.acts[l + 1] = binarize_a(tr.z[l], mode);
  }
  return tr;
}

// dLoss/dlogits for the mean-over-batch loss, [K x nb].
MatA loss_delta(const MatA& logits, const std::vector<int>& labels, bool softmax_ce) {
  const Eigen::Index k = logits.rows(), nb = logits.cols();
  MatA delta(k, nb);
  if (k == 1) {
    for (Eigen::Index n = 0; n < nb; ++n) {
      const double target = labels[size_t(n)] > 0 ? 1.0 : 0.0;
      delta(0, n) = (sigmoid(logits(0, n)) - target) / double(nb);
    }
    return delta;
  }
  if (softmax_ce) {
    for (Eigen::Index n = 0; n < nb; ++n) {
      const double zmax = logits.col(n).maxCoeff();
      double norm = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) norm += std::exp(logits(j, n) - zmax);
      for (Eigen::Index j = 0; j < k; ++j) {
        const double p = std::exp(logits(j, n) - zmax) / norm;
        delta(j, n) = (p - (j == labels[size_t(n)] ? 1.0 : 0.0)) / double(nb);
      }
    }
    return delta;
  }
  for (Eigen::Index n = 0; n < nb; ++n) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double target = j == labels[size_t(n)] ? 1.0 : 0.0;
      delta(j, n) = (sigmoid(logits(j, n)) - target) / double(nb);
    }
  }
  return delta;
}

// Shared epoch loop for bn_train / bn_train_continual, mirroring the
// message-passing trainer's schedule and metric rows.
void bn_run_epochs(BinaryNetState& state, const BinaryNetConfig& cfg,
                   const Dataset& train_set, const Dataset& test_set,
                   int epoch_base, RunMetrics& out) {
  const Eigen::Index n = train_set.n_samples();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MatA xb;
  std::vector<int> yb;
  std::vector<double> prev_unused;

  for (int e = 1; e <= cfg.epochs; ++e) {
    const int epoch = epoch_base + e;
    const double t0 = clock_seconds();
    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[size_t(i)] = i;
    for (Eigen::Index j = n - 1; j > 0; --j) {
      const uint64_t w = detail::mix_stream(cfg.seed, kTagShuffle, uint64_t(epoch), uint64_t(j));
      std::swap(order[size_t(j)], order[size_t(w % uint64_t(j + 1))]);
    }
    for (Eigen::Index pos = 0; pos < n; pos += cfg.batch_size) {
      const Eigen::Index nb = std::min<Eigen::Index>(cfg.batch_size, n - pos);
      xb.resize(train_set.n_features(), nb);
      yb.resize(size_t(nb));
      for (Eigen::Index i = 0; i < nb; ++i) {
        const Eigen::Index src = order[size_t(pos + i)];
        xb.col(i) = train_set.inputs.col(src);
        yb[size_t(i)] = train_set.labels[size_t(src)];
      }
      bn_backward_step(state, xb, yb, cfg.lr, cfg.softmax_ce);
    }
    const double seconds = clock_seconds() - t0;

    const auto W = sign_weights(state.w);
    const double train_err = pointwise_error(W, train_set);
    const double test_err = pointwise_error(W, test_set);
    const auto ovl = overlaps(W);
    for (size_t l = 0; l < W.size(); ++l) {
      EpochRow row;
      row.epoch = epoch;
      row.algo = "binarynet";
      row.train_err = train_err;
      row.test_err = test_err;
      row.bayes_train_err = nan;
      row.bayes_test_err = nan;
      row.layer = int(l);
      row.q0 = ovl.q0[l];
      row.qab = ovl.qab[l];
      row.seconds = seconds;
      out.rows.push_back(row);
    }
  }
  out.final_theta = state.w;
  out.final_W = sign_weights(state.w);
}

std::vector<Eigen::Index> bn_dims(const Dataset& d, const BinaryNetConfig& cfg) {
  if (cfg.lr <= 0.0) throw std::invalid_argument("lr must be > 0");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (d.n_classes < 2) throw std::invalid_argument("dataset needs >= 2 classes");
  std::vector<Eigen::Index> dims;
  dims.push_back(d.n_features());
  for (Eigen::Index h : cfg.hidden) {
    if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
    dims.push_back(h);
  }
  dims.push_back(d.n_classes == 2 ? 1 : d.n_classes);
  return dims;
}

}  // namespace

BinaryNetState bn_init(const std::vector<Eigen::Index>& dims, uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("need at least one weight layer");
  BinaryNetState state;
  state.dims = dims;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    MatW w(dims[l + 1], dims[l]);
    const double bound = std::sqrt(6.0 / double(dims[l] + dims[l + 1]));
    double* data = w.data();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      data[i] = bound * (2.0 * detail::u01(detail::mix_stream(seed, kTagXavier, l,
                                                              uint64_t(i))) -
                         1.0);
    }
    state.w.push_back(std::move(w));
  }
  return state;
}

MatA bn_forward(const BinaryNetState& state, const MatA& x, BnMode mode) {
  if (x.rows() != state.dims.front()) {
    throw std::invalid_argument("input has " + std::to_string(x.rows()) +
                                " features, network expects " +
                                std::to_string(state.dims.front()));
  }
  return bn_forward_trace(state, x, mode).z.back();
}

double bn_loss(const BinaryNetState& state, const MatA& x,
               const std::vector<int>& labels, bool softmax_ce, BnMode mode) {
  check_labels(state, x, labels);
  const MatA logits = bn_forward(state, x, mode);
  const Eigen::Index k = logits.rows(), nb = logits.cols();
  double loss = 0.0;
  if (k == 1) {
    for (Eigen::Index n = 0; n < nb; ++n) {
      const double target = labels[size_t(n)] > 0 ? 1.0 : 0.0;
      loss += softplus(logits(0, n)) - target * logits(0, n);
    }
  } else if (softmax_ce) {
    for (Eigen::Index n = 0; n < nb; ++n) {
      const double zmax = logits.col(n).maxCoeff();
      double norm = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) norm += std::exp(logits(j, n) - zmax);
      loss += zmax + std::log(norm) - logits(labels[size_t(n)], n);
    }
  } else {
    for (Eigen::Index n = 0; n < nb; ++n) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const double target = j == labels[size_t(n)] ? 1.0 : 0.0;
        loss += softplus(logits(j, n)) - target * logits(j, n);
      }
    }
  }
  return loss / double(nb);
}

std::vector<MatW> bn_gradient(const BinaryNetState& state, const MatA& x,
                              const std::vector<int>& labels, bool softmax_ce,
                              BnMode mode) {
  check_labels(state, x, labels);
  const size_t depth = state.w.size();
  const ForwardTrace tr = bn_forward_trace(state, x, mode);
  std::vector<MatW> grads(depth);

  MatA delta = loss_delta(tr.z.back(), labels, softmax_ce);
  for (size_t l = depth; l-- > 0;) {
    const double inv_sqrt_n = 1.0 / std::sqrt(double(state.dims[l]));
    delta *= inv_sqrt_n;  // through the preactivation rescaling
    grads[l].noalias() = delta * tr.acts[l].transpose();
    // Straight-through weight rule: zero strictly outside the clip range,
    // so boundary weights stay trainable.
    grads[l] = (state.w[l].array().abs() > 1.0)
                   .select(MatW::Zero(grads[l].rows(), grads[l].cols()), grads[l]);
    if (l > 0) {
      MatA da;
      da.noalias() = binarize_w(state.w[l], mode).transpose() * delta;
      // Straight-through activation rule (hard-tanh): zero where the
      // preactivation saturates.
      delta = (tr.z[l - 1].array().abs() > 1.0)
                  .select(MatA::Zero(da.rows(), da.cols()), da);
    }
  }
  return grads;
}

void bn_backward_step(BinaryNetState& state, const MatA& x,
                      const std::vector<int>& labels, double lr,
                      bool softmax_ce, BnMode mode) {
  const auto grads = bn_gradient(state, x, labels, softmax_ce, mode);
  for (size_t l = 0; l < state.w.size(); ++l) {
    state.w[l] -= lr * grads[l];
    state.w[l] = state.w[l].array().min(1.0).max(-1.0).matrix();
  }
}

RunMetrics bn_train(const Dataset& train_set, const Dataset& test_set,
                    const BinaryNetConfig& cfg) {
  const auto dims = bn_dims(train_set, cfg);
  if (test_set.n_features() != train_set.n_features() ||
      test_set.n_classes != train_set.n_classes) {
    throw std::invalid_argument("train/test sets disagree on shape or classes");
  }
  BinaryNetState state = bn_init(dims, cfg.seed);
  RunMetrics out;
  bn_run_epochs(state, cfg, train_set, test_set, /*epoch_base=*/0, out);
  return out;
}

ContinualMetrics bn_train_continual(const std::vector<Dataset>& train_tasks,
                                    const std::vector<Dataset>& test_tasks,
                                    const BinaryNetConfig& cfg) {
  if (train_tasks.empty() || train_tasks.size() != test_tasks.size()) {
    throw std::invalid_argument("need matching non-empty train/test task lists");
  }
  const auto dims = bn_dims(train_tasks.front(), cfg);
  for (size_t t = 0; t < train_tasks.size(); ++t) {
    if (train_tasks[t].n_features() != train_tasks.front().n_features() ||
        test_tasks[t].n_features() != train_tasks.front().n_features() ||
        train_tasks[t].n_classes != train_tasks.front().n_classes ||
        test_tasks[t].n_classes != train_tasks.front().n_classes) {
      throw std::invalid_argument("task " + std::to_string(t + 1) +
                                  " disagrees on shape or classes");
    }
  }
  BinaryNetState state = bn_init(dims, cfg.seed);
  const int n_tasks = int(train_tasks.size());
  ContinualMetrics out;
  out.error_matrix.setZero(n_tasks, n_tasks);
  for (int t = 0; t < n_tasks; ++t) {
    RunMetrics task_metrics;
    bn_run_epochs(state, cfg, train_tasks[size_t(t)], test_tasks[size_t(t)],
                  /*epoch_base=*/t * cfg.epochs, task_metrics);
    for (int k = 0; k < n_tasks; ++k) {
      out.error_matrix(t, k) =
          pointwise_error(task_metrics.final_W, test_tasks[size_t(k)]);
    }
    out.per_task.push_back(std::move(task_metrics));
  }
  out.final_theta = out.per_task.back().final_theta;
  out.final_W = out.per_task.back().final_W;
  return out;
}

}  // namespace binmp
