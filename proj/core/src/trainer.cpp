#include "binmp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "binmp/detail/rng.hpp"
#include "binmp/evalkit.hpp"

namespace binmp {

namespace {

constexpr uint64_t kTagInit = 0x11;
constexpr uint64_t kTagShuffle = 0x12;
constexpr uint64_t kTagReadoutShift = 0x13;

double clock_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Everything train / train_continual derive from (config, dataset) once the
// pair has been validated.
struct TrainPlan {
  std::vector<Eigen::Index> dims;
  std::vector<double> rho;
  SweepConfig scfg;
  std::string label;
  bool argmax = false;
};

void check_dataset(const Dataset& d, const char* which) {
  if (d.n_samples() == 0 || d.n_features() == 0) {
    throw std::invalid_argument(std::string(which) + " set is empty");
  }
  if (static_cast<Eigen::Index>(d.labels.size()) != d.n_samples()) {
    throw std::invalid_argument(std::string(which) + " set has " +
                                std::to_string(d.labels.size()) + " labels for " +
                                std::to_string(d.n_samples()) + " samples");
  }
  if (d.n_classes < 2) {
    throw std::invalid_argument(std::string(which) + " set needs >= 2 classes");
  }
}

TrainPlan make_plan(const Dataset& train_set, const PaspConfig& cfg) {
  if (cfg.r != 0.0) {
    throw std::invalid_argument(
        "internal reinforcement is unimplemented: r must be 0, got " +
        std::to_string(cfg.r));
  }
  if (cfg.epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  check_dataset(train_set, "train");

  TrainPlan plan;
  plan.dims.push_back(train_set.n_features());
  for (Eigen::Index h : cfg.hidden) {
    if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
    plan.dims.push_back(h);
  }
  plan.argmax = train_set.n_classes != 2;
  plan.dims.push_back(plan.argmax ? train_set.n_classes : 1);

  const size_t depth = plan.dims.size() - 1;
  plan.rho = cfg.rho.empty() ? default_rho(depth) : cfg.rho;
  if (plan.rho.size() != depth) {
    throw std::invalid_argument("rho has " + std::to_string(plan.rho.size()) +
                                " entries for " + std::to_string(depth) + " layers");
  }

  plan.scfg.algo = cfg.algo;
  plan.scfg.alpha = cfg.alpha;
  plan.scfg.tau_max = cfg.tau_max;
  plan.scfg.v_min = cfg.v_min;
  plan.scfg.output.kind = plan.argmax ? OutputKind::ArgMax : OutputKind::SignBinary;
  plan.scfg.output.argmax_approach = cfg.argmax_approach;
  plan.label = algo_label(cfg.algo);
  return plan;
}

std::vector<Eigen::Index> shuffled_order(Eigen::Index n, uint64_t seed,
                                         uint64_t epoch_key) {
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[size_t(i)] = i;
  for (Eigen::Index j = n - 1; j > 0; --j) {
    const uint64_t w = detail::mix_stream(seed, kTagShuffle, epoch_key, uint64_t(j));
    std::swap(order[size_t(j)], order[size_t(w % uint64_t(j + 1))]);
  }
  return order;
}

std::vector<MatW> current_marginals(const NetworkState& net) {
  std::vector<MatW> m;
  m.reserve(size_t(net.depth()));
  for (const auto& s : net.layers) {
    m.push_back(s.w.theta.array().tanh().matrix());
  }
  return m;
}

// Shared epoch loop. epoch_base offsets the RNG stream keys and the
// reported epoch numbers so sequential tasks continue where the previous
// one stopped (and a single task matches train bit for bit).
void run_epochs(NetworkState& net, const TrainPlan& plan, const PaspConfig& cfg,
                const Dataset& train_set, const Dataset& test_set,
                int epoch_base, uint64_t* step_counter, RunMetrics& out) {
  const Eigen::Index n = train_set.n_samples();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MatA xb;
  std::vector<int> yb;
  std::vector<double> eps;
  std::vector<double> prev_q0;

  SweepInputs in;
  in.x0 = &xb;
  in.labels = &yb;
  const bool wants_eps = plan.argmax && cfg.argmax_approach == 1;
  if (wants_eps) in.argmax_eps = &eps;

  for (int e = 1; e <= cfg.epochs; ++e) {
    const int epoch = epoch_base + e;
    const double t0 = clock_seconds();
    const auto order = shuffled_order(n, cfg.seed, uint64_t(epoch));
    for (Eigen::Index pos = 0; pos < n; pos += cfg.batch_size) {
      const Eigen::Index nb = std::min<Eigen::Index>(cfg.batch_size, n - pos);
      xb.resize(train_set.n_features(), nb);
      yb.resize(size_t(nb));
      if (wants_eps) eps.resize(size_t(nb));
      for (Eigen::Index i = 0; i < nb; ++i) {
        const Eigen::Index src = order[size_t(pos + i)];
        xb.col(i) = train_set.inputs.col(src);
        yb[size_t(i)] = train_set.labels[size_t(src)];
        if (wants_eps) {
          eps[size_t(i)] = detail::n01(
              detail::mix_stream(cfg.seed, kTagReadoutShift, *step_counter, 2 * uint64_t(i)),
              detail::mix_stream(cfg.seed, kTagReadoutShift, *step_counter, 2 * uint64_t(i) + 1));
        }
      }
      pasp_step(net, plan.scfg, in, plan.rho, cfg.damping_resets);
      ++*step_counter;
    }
    const double seconds = clock_seconds() - t0;

    const auto m = current_marginals(net);
    const auto W = sign_weights(m);
    const double train_err = pointwise_error(W, train_set);
    const double test_err = pointwise_error(W, test_set);
    const double bayes_train = cfg.compute_bayes ? bayesian_error(m, train_set, cfg.v_min) : nan;
    const double bayes_test = cfg.compute_bayes ? bayesian_error(m, test_set, cfg.v_min) : nan;
    const auto ovl = overlaps(m);

    for (size_t l = 0; l < m.size(); ++l) {
      EpochRow row;
      row.epoch = epoch;
      row.algo = plan.label;
      row.train_err = train_err;
      row.test_err = test_err;
      row.bayes_train_err = bayes_train;
      row.bayes_test_err = bayes_test;
      row.layer = int(l);
      row.q0 = ovl.q0[l];
      row.qab = ovl.qab[l];
      row.seconds = seconds;
      out.rows.push_back(row);
      if (!prev_q0.empty() && plan.rho[l] > 1.0 && ovl.q0[l] < prev_q0[l]) {
        out.notes.push_back("epoch " + std::to_string(epoch) + " layer " +
                            std::to_string(l) + ": mean polarization decreased (" +
                            std::to_string(prev_q0[l]) + " -> " +
                            std::to_string(ovl.q0[l]) + ") despite rho > 1");
      }
    }
    prev_q0 = ovl.q0;
  }

  out.final_theta.clear();
  for (const auto& s : net.layers) out.final_theta.push_back(s.w.theta);
  out.final_W = sign_weights(current_marginals(net));
}

}  // namespace

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::BP: return "bp";
    case Algo::BPI: return "bpi";
    case Algo::MF: return "mf";
    case Algo::AMP: return "amp";
  }
  return "?";
}

std::string algo_label(const std::vector<Algo>& algos) {
  if (algos.empty()) return "";
  std::string label = algo_name(algos.front());
  bool uniform = true;
  for (Algo a : algos) uniform = uniform && a == algos.front();
  if (!uniform) {
    for (size_t l = 1; l < algos.size(); ++l) {
      label += '+';
      label += algo_name(algos[l]);
    }
  }
  return label;
}

std::vector<double> default_rho(size_t n_layers) {
  std::vector<double> rho(n_layers, 1.0001);
  if (!rho.empty()) rho.back() = 0.9;
  return rho;
}

std::vector<MatW> init_priors(const std::vector<Eigen::Index>& dims,
                              double epsilon, uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("need at least one weight layer");
  if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
  std::vector<MatW> theta;
  theta.reserve(dims.size() - 1);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    MatW t(dims[l + 1], dims[l]);
    double* data = t.data();
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      data[i] = epsilon * detail::n01(
                              detail::mix_stream(seed, kTagInit, l, 2 * uint64_t(i)),
                              detail::mix_stream(seed, kTagInit, l, 2 * uint64_t(i) + 1));
    }
    theta.push_back(std::move(t));
  }
  return theta;
}

void pasp_prior_update(NetworkState& net, const std::vector<double>& rho) {
  if (rho.size() != size_t(net.depth())) {
    throw std::invalid_argument("rho has " + std::to_string(rho.size()) +
                                " entries for " + std::to_string(net.depth()) +
                                " layers");
  }
  for (Eigen::Index l = 0; l < net.depth(); ++l) {
    WeightMessages& w = net.layers[l].w;
    w.theta = rho[size_t(l)] * (w.theta + w.H);
  }
}

void pasp_step(NetworkState& net, const SweepConfig& cfg, const SweepInputs& in,
               const std::vector<double>& rho, bool damping_resets) {
  reset_messages(net, /*keep_weight_means=*/!damping_resets);
  run_inner_loop(net, cfg, in);
  pasp_prior_update(net, rho);
}

RunMetrics train(const Dataset& train_set, const Dataset& test_set,
                 const PaspConfig& cfg) {
  const TrainPlan plan = make_plan(train_set, cfg);
  check_dataset(test_set, "test");
  if (test_set.n_features() != train_set.n_features() ||
      test_set.n_classes != train_set.n_classes) {
    throw std::invalid_argument("train/test sets disagree on shape or classes");
  }

  NetworkState net = make_network(plan.dims);
  const auto theta0 = init_priors(plan.dims, cfg.epsilon, cfg.seed);
  for (size_t l = 0; l < theta0.size(); ++l) net.layers[l].w.theta = theta0[l];
  reset_messages(net);

  RunMetrics out;
  uint64_t step = 0;
  run_epochs(net, plan, cfg, train_set, test_set, /*epoch_base=*/0, &step, out);
  return out;
}

ContinualMetrics train_continual(const std::vector<Dataset>& train_tasks,
                                 const std::vector<Dataset>& test_tasks,
                                 const PaspConfig& cfg) {
  if (train_tasks.empty() || train_tasks.size() != test_tasks.size()) {
    throw std::invalid_argument("need matching non-empty train/test task lists");
  }
  const TrainPlan plan = make_plan(train_tasks.front(), cfg);
  for (size_t t = 0; t < train_tasks.size(); ++t) {
    check_dataset(train_tasks[t], "train");
    check_dataset(test_tasks[t], "test");
    if (train_tasks[t].n_features() != train_tasks.front().n_features() ||
        test_tasks[t].n_features() != train_tasks.front().n_features() ||
        train_tasks[t].n_classes != train_tasks.front().n_classes ||
        test_tasks[t].n_classes != train_tasks.front().n_classes) {
      throw std::invalid_argument("task " + std::to_string(t + 1) +
                                  " disagrees on shape or classes");
    }
  }

  NetworkState net = make_network(plan.dims);
  const auto theta0 = init_priors(plan.dims, cfg.epsilon, cfg.seed);
  for (size_t l = 0; l < theta0.size(); ++l) net.layers[l].w.theta = theta0[l];
  reset_messages(net);

  const int n_tasks = int(train_tasks.size());
  ContinualMetrics out;
  out.error_matrix.setZero(n_tasks, n_tasks);
  uint64_t step = 0;
  for (int t = 0; t < n_tasks; ++t) {
    RunMetrics task_metrics;
    run_epochs(net, plan, cfg, train_tasks[size_t(t)], test_tasks[size_t(t)],
               /*epoch_base=*/t * cfg.epochs, &step, task_metrics);
    const auto W = task_metrics.final_W;
    for (int k = 0; k < n_tasks; ++k) {
      out.error_matrix(t, k) = pointwise_error(W, test_tasks[size_t(k)]);
    }
    for (auto& note : task_metrics.notes) out.notes.push_back(std::move(note));
    task_metrics.notes.clear();
    out.per_task.push_back(std::move(task_metrics));
  }
  out.final_theta = out.per_task.back().final_theta;
  out.final_W = out.per_task.back().final_W;
  return out;
}

}  // namespace binmp
