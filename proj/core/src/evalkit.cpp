#include "binmp/evalkit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "binmp/detail/rng.hpp"
#include "binmp/layers.hpp"

namespace binmp {

namespace {

constexpr Eigen::Index kEvalChunk = 2048;

// Validates the net/dataset pairing shared by both error metrics and
// returns the output unit count.
Eigen::Index check_readout(const std::vector<MatW>& layers, const Dataset& d) {
  if (layers.empty()) throw std::invalid_argument("no weight layers given");
  if (layers.front().cols() != d.n_features()) {
    throw std::invalid_argument("first layer expects " +
                                std::to_string(layers.front().cols()) +
                                " inputs, dataset has " +
                                std::to_string(d.n_features()) + " features");
  }
  for (size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].cols() != layers[l - 1].rows()) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  " input width mismatch");
    }
  }
  const Eigen::Index k = layers.back().rows();
  if (d.n_classes == 2 ? k != 1 : k != d.n_classes) {
    throw std::invalid_argument("readout width " + std::to_string(k) +
                                " does not match " + std::to_string(d.n_classes) +
                                "-class labels");
  }
  if (static_cast<Eigen::Index>(d.labels.size()) != d.n_samples()) {
    throw std::invalid_argument("dataset has " + std::to_string(d.labels.size()) +
                                " labels for " + std::to_string(d.n_samples()) +
                                " samples");
  }
  return k;
}

// Counts misclassified columns of the output means `z` ([K x nb]) against
// the labels starting at sample offset n0. Ties: sign(0) = +1, argmax keeps
// the lowest index.
Eigen::Index count_errors(const MatA& z, const Dataset& d, Eigen::Index n0) {
  Eigen::Index wrong = 0;
  if (z.rows() == 1) {
    for (Eigen::Index n = 0; n < z.cols(); ++n) {
      const int pred = z(0, n) >= 0.0 ? +1 : -1;
      wrong += (pred != d.labels[size_t(n0 + n)]);
    }
  } else {
    for (Eigen::Index n = 0; n < z.cols(); ++n) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < z.rows(); ++k) {
        if (z(k, n) > z(best, n)) best = k;
      }
      wrong += (best != d.labels[size_t(n0 + n)]);
    }
  }
  return wrong;
}

}  // namespace

std::vector<MatW> sign_weights(const std::vector<MatW>& m) {
  std::vector<MatW> W;
  W.reserve(m.size());
  for (const auto& layer : m) {
    W.push_back((layer.array() >= 0.0).select(MatW::Ones(layer.rows(), layer.cols()),
                                              -MatW::Ones(layer.rows(), layer.cols())));
  }
  return W;
}

double pointwise_error(const std::vector<MatW>& W, const Dataset& d) {
  check_readout(W, d);
  const Eigen::Index n = d.n_samples();
  Eigen::Index wrong = 0;
  MatA act, z;
  for (Eigen::Index n0 = 0; n0 < n; n0 += kEvalChunk) {
    const Eigen::Index nb = std::min(kEvalChunk, n - n0);
    act = d.inputs.middleCols(n0, nb);
    for (size_t l = 0; l + 1 < W.size(); ++l) {
      z.noalias() = W[l] * act;
      act = (z.array() >= 0.0).select(MatA::Ones(z.rows(), nb), -MatA::Ones(z.rows(), nb));
    }
    z.noalias() = W.back() * act;
    wrong += count_errors(z, d, n0);
  }
  return double(wrong) / double(n);
}

double bayesian_error(const std::vector<MatW>& m, const Dataset& d, double v_min) {
  check_readout(m, d);
  for (const auto& layer : m) {
    if ((layer.array().abs() > 1.0).any()) {
      throw std::invalid_argument("weight means must lie in [-1, 1]");
    }
  }

  std::vector<Eigen::Index> dims;
  dims.push_back(m.front().cols());
  for (const auto& layer : m) dims.push_back(layer.rows());
  NetworkState net = make_network(dims);
  for (size_t l = 0; l < m.size(); ++l) {
    net.layers[l].w.m = m[l];
    net.layers[l].w.sigma = (1.0 - m[l].array().square()).matrix();
  }

  const Eigen::Index n = d.n_samples();
  Eigen::Index wrong = 0;
  for (Eigen::Index n0 = 0; n0 < n; n0 += kEvalChunk) {
    const Eigen::Index nb = std::min(kEvalChunk, n - n0);
    run_forward(net, d.inputs.middleCols(n0, nb), v_min);
    wrong += count_errors(net.layers.back().p.omega, d, n0);
  }
  return double(wrong) / double(n);
}

LocalEnergyProfile local_energy(const std::vector<MatW>& W, const Dataset& d,
                                const std::vector<double>& p_grid, int n_masks,
                                uint64_t seed) {
  check_readout(W, d);
  for (double p : p_grid) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("perturbation probability " + std::to_string(p) +
                                  " outside [0, 1]");
    }
  }
  if (n_masks < 1) throw std::invalid_argument("n_masks must be >= 1");

  constexpr uint64_t kTagMask = 0x21;
  const double base = pointwise_error(W, d);

  LocalEnergyProfile prof;
  prof.p_grid = p_grid;
  prof.n_masks = n_masks;
  std::vector<MatW> flipped = W;
  for (size_t pi = 0; pi < p_grid.size(); ++pi) {
    const double p = p_grid[pi];
    if (p == 0.0) {
      // Identity masks: every sample of the difference is exactly zero.
      prof.delta_e.push_back(0.0);
      prof.std_err.push_back(0.0);
      continue;
    }
    double sum = 0.0, sumsq = 0.0;
    for (int j = 0; j < n_masks; ++j) {
      for (size_t l = 0; l < W.size(); ++l) {
        const double* src = W[l].data();
        double* dst = flipped[l].data();
        const Eigen::Index count = W[l].size();
        for (Eigen::Index t = 0; t < count; ++t) {
          const uint64_t w = detail::mix_stream(
              seed, kTagMask, (uint64_t(pi) << 32) | uint64_t(j),
              (uint64_t(l) << 48) | uint64_t(t));
          dst[t] = detail::u01(w) < p ? -src[t] : src[t];
        }
      }
      const double delta = pointwise_error(flipped, d) - base;
      sum += delta;
      sumsq += delta * delta;
    }
    const double mean = sum / n_masks;
    double se = 0.0;
    if (n_masks > 1) {
      const double var = std::max(0.0, (sumsq - n_masks * mean * mean) / (n_masks - 1));
      se = std::sqrt(var / n_masks);
    }
    prof.delta_e.push_back(mean);
    prof.std_err.push_back(se);
  }
  return prof;
}

OverlapReport overlaps(const std::vector<MatW>& layers) {
  OverlapReport rep;
  for (const auto& M : layers) {
    const Eigen::Index units = M.rows(), n = M.cols();
    if (units == 0 || n == 0) throw std::invalid_argument("empty layer matrix");
    Eigen::MatrixXd gram = (M * M.transpose()) / double(n);
    rep.q0.push_back(gram.trace() / double(units));
    if (units < 2) {
      rep.qab.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      const double off = gram.sum() - gram.trace();
      rep.qab.push_back(off / (double(units) * double(units - 1)));
    }
  }
  return rep;
}

}  // namespace binmp
