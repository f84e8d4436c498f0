#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "binmp/binarynet.hpp"
#include "binmp/messages.hpp"
#include "doctest.h"
#include "synthetic_data.hpp"

using namespace binmp;
using testdata::make_anchor_data;
using testdata::make_teacher_data;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Independent scalar forward: plain loops, sign ties to +1.
MatA scalar_forward(const BinaryNetState& state, const MatA& x, BnMode mode) {
  MatA a = x;
  for (size_t l = 0; l < state.w.size(); ++l) {
    const MatW& w = state.w[l];
    const double inv = 1.0 / std::sqrt(double(w.cols()));
    MatA z(w.rows(), a.cols());
    for (Eigen::Index n = 0; n < a.cols(); ++n)
      for (Eigen::Index k = 0; k < w.rows(); ++k) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < w.cols(); ++i) {
          const double wb = mode == BnMode::Binary
                                ? (w(k, i) >= 0.0 ? 1.0 : -1.0)
                                : std::clamp(w(k, i), -1.0, 1.0);
          acc += wb * a(i, n);
        }
        z(k, n) = acc * inv;
      }
    if (l + 1 < state.w.size()) {
      for (Eigen::Index n = 0; n < z.cols(); ++n)
        for (Eigen::Index k = 0; k < z.rows(); ++k)
          z(k, n) = mode == BnMode::Binary
                        ? (z(k, n) >= 0.0 ? 1.0 : -1.0)
                        : std::clamp(z(k, n), -1.0, 1.0);
    }
    a = z;
  }
  return a;
}

BinaryNetState random_state(const std::vector<Eigen::Index>& dims,
                            unsigned seed, double scale = 0.8) {
  BinaryNetState s;
  s.dims = dims;
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> val(-scale, scale);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    MatW w(dims[l + 1], dims[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = val(gen);
    s.w.push_back(w);
  }
  return s;
}

MatA random_inputs(Eigen::Index f, Eigen::Index n, unsigned seed,
                   double scale = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> pix(-scale, scale);
  MatA x(f, n);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = pix(gen);
  return x;
}

bool rows_equal_ignoring_seconds(const std::vector<EpochRow>& a,
                                 const std::vector<EpochRow>& b) {
  if (a.size() != b.size()) return false;
  auto same = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch || a[i].algo != b[i].algo ||
        a[i].layer != b[i].layer)
      return false;
    if (!same(a[i].train_err, b[i].train_err) ||
        !same(a[i].test_err, b[i].test_err) || !same(a[i].q0, b[i].q0) ||
        !same(a[i].qab, b[i].qab))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("initialization is Xavier-bounded and reproducible") {
  const std::vector<Eigen::Index> dims{20, 10, 5};
  const auto a = bn_init(dims, 3);
  REQUIRE(a.w.size() == 2);
  CHECK(a.w[0].rows() == 10);
  CHECK(a.w[0].cols() == 20);
  CHECK(a.w[0].array().abs().maxCoeff() <= std::sqrt(6.0 / 30.0));
  CHECK(a.w[1].array().abs().maxCoeff() <= std::sqrt(6.0 / 15.0));
  // The bound is nearly attained, so the scale is right (not, say, halved).
  CHECK(a.w[0].array().abs().maxCoeff() > 0.9 * std::sqrt(6.0 / 30.0));

  const auto b = bn_init(dims, 3);
  CHECK((a.w[0].array() == b.w[0].array()).all());
  CHECK((a.w[1].array() == b.w[1].array()).all());
  const auto c = bn_init(dims, 4);
  CHECK_FALSE((a.w[0].array() == c.w[0].array()).all());
  CHECK_FALSE((a.w[0].topLeftCorner(5, 5).array() ==
               a.w[1].topLeftCorner(5, 5).array())
                  .all());
}

TEST_CASE("forward matches an independent scalar implementation") {
  const auto state = random_state({4, 3, 2}, 7);
  const MatA x = random_inputs(4, 5, 8);
  for (BnMode mode : {BnMode::Binary, BnMode::Surrogate}) {
    const MatA got = bn_forward(state, x, mode);
    const MatA want = scalar_forward(state, x, mode);
    REQUIRE(got.rows() == 2);
    REQUIRE(got.cols() == 5);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("tiny chains have closed-form logits") {
  BinaryNetState s;
  s.dims = {1, 1};
  s.w = {MatW::Constant(1, 1, 0.5)};
  MatA x = MatA::Constant(1, 1, 1.0);
  CHECK(bn_forward(s, x)(0, 0) == 1.0);  // sign(0.5) * 1 / sqrt(1)

  BinaryNetState deep;
  deep.dims = {1, 1, 1};
  deep.w = {MatW::Constant(1, 1, -0.3), MatW::Constant(1, 1, 0.2)};
  // hidden: sign(-1 * 1) = -1; logit: sign(0.2) * (-1) = -1.
  CHECK(bn_forward(deep, x)(0, 0) == -1.0);
}

TEST_CASE("sign flips propagate oddly through the chain") {
  const auto state = random_state({3, 2, 1}, 9);
  const MatA x = random_inputs(3, 6, 10);
  const MatA base = bn_forward(state, x);

  // Flipping every layer's weights leaves the composition invariant.
  BinaryNetState flipped = state;
  for (auto& w : flipped.w) w = -w;
  CHECK((bn_forward(flipped, x) - base).cwiseAbs().maxCoeff() == 0.0);

  // A single-layer net is exactly odd in its weights.
  BinaryNetState shallow;
  shallow.dims = {3, 2};
  shallow.w = {state.w[0].topRows(2)};
  BinaryNetState neg = shallow;
  neg.w[0] = -neg.w[0];
  CHECK((bn_forward(neg, x) + bn_forward(shallow, x)).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("forward depends on the weights only through their signs") {
  const auto state = random_state({5, 4, 3}, 11);
  const MatA x = random_inputs(5, 7, 12);
  BinaryNetState scaled = state;
  std::mt19937 gen(13);
  std::uniform_real_distribution<double> shrink(0.05, 0.95);
  for (auto& w : scaled.w)
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] *= shrink(gen);
  CHECK((bn_forward(scaled, x).array() == bn_forward(state, x).array()).all());
}

TEST_CASE("surrogate gradients match finite differences of the loss") {
  const double h = 1e-5;
  auto check_fd = [&](BinaryNetState state, const MatA& x,
                      const std::vector<int>& labels, bool softmax) {
    const auto grads =
        bn_gradient(state, x, labels, softmax, BnMode::Surrogate);
    REQUIRE(grads.size() == state.w.size());
    for (size_t l = 0; l < state.w.size(); ++l) {
      for (Eigen::Index i = 0; i < state.w[l].size(); ++i) {
        const double saved = state.w[l].data()[i];
        state.w[l].data()[i] = saved + h;
        const double up = bn_loss(state, x, labels, softmax, BnMode::Surrogate);
        state.w[l].data()[i] = saved - h;
        const double dn = bn_loss(state, x, labels, softmax, BnMode::Surrogate);
        state.w[l].data()[i] = saved;
        const double fd = (up - dn) / (2.0 * h);
        CAPTURE(l);
        CAPTURE(i);
        REQUIRE(std::abs(grads[l].data()[i] - fd) <= 1e-7);
      }
    }
  };

  // Small weights and inputs keep every hidden preactivation well inside the
  // hard-tanh linear region, so the loss is smooth at the test point.
  const auto state2 = random_state({2, 2, 1}, 21, 0.45);
  const MatA x2 = random_inputs(2, 4, 22, 0.8);
  check_fd(state2, x2, {+1, -1, -1, +1}, false);

  const auto state3 = random_state({3, 4, 3}, 23, 0.3);
  const MatA x3 = random_inputs(3, 6, 24, 0.7);
  check_fd(state3, x3, {0, 1, 2, 0, 1, 2}, false);
  check_fd(state3, x3, {0, 1, 2, 0, 1, 2}, true);
}

TEST_CASE("straight-through masks follow the strict saturation rule") {
  SUBCASE("weights on the clip boundary keep their gradient") {
    BinaryNetState s;
    s.dims = {1, 1};
    s.w = {MatW::Constant(1, 1, 1.0)};
    MatA x = MatA::Constant(1, 1, 0.7);
    const auto g = bn_gradient(s, x, {+1});
    const double expect = (sigmoid(0.7) - 1.0) * 0.7;  // dL/dz * x / sqrt(1)
    CHECK(g[0](0, 0) == doctest::Approx(expect).epsilon(1e-12));

    s.w[0](0, 0) = 1.5;  // strictly outside: masked to zero
    CHECK(bn_gradient(s, x, {+1})[0](0, 0) == 0.0);
  }
  SUBCASE("saturated hidden preactivations block the downward flow") {
    BinaryNetState s;
    s.dims = {2, 1, 1};
    s.w = {(MatW(1, 2) << 0.5, 0.5).finished(), MatW::Constant(1, 1, 0.5)};
    MatA x(2, 1);
    x << 1.0, 1.0;  // hidden z = 2 / sqrt(2) > 1: saturated
    const auto g = bn_gradient(s, x, {+1});
    CHECK(g[0](0, 0) == 0.0);
    CHECK(g[0](0, 1) == 0.0);
    CHECK(g[1](0, 0) != 0.0);  // the readout still learns

    x << 0.5, 0.5;  // hidden z = 1 / sqrt(2) < 1: flows again
    const auto g2 = bn_gradient(s, x, {+1});
    CHECK(g2[0](0, 0) != 0.0);
  }
}

TEST_CASE("updates clip weights to the unit box") {
  SUBCASE("a push through the wall lands exactly on it") {
    BinaryNetState s;
    s.dims = {1, 1};
    s.w = {MatW::Constant(1, 1, 0.95)};
    MatA x = MatA::Constant(1, 1, 0.8);
    // label +1 and z > 0: gradient is negative, a big step goes beyond +1.
    bn_backward_step(s, x, {+1}, 1e3);
    CHECK(s.w[0](0, 0) == 1.0);
  }
  SUBCASE("the box invariant survives wild steps") {
    auto s = random_state({6, 4, 3}, 31);
    const MatA x = random_inputs(6, 8, 32);
    const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
    for (int step = 0; step < 20; ++step) {
      bn_backward_step(s, x, labels, 500.0);
      for (const auto& w : s.w) REQUIRE(w.array().abs().maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("parameter counts match the message-passing network") {
  const std::vector<Eigen::Index> dims{17, 9, 4};
  const auto s = bn_init(dims, 1);
  const auto net = make_network(dims);
  REQUIRE(Eigen::Index(s.w.size()) == net.depth());
  Eigen::Index bn_params = 0, mp_params = 0;
  for (size_t l = 0; l < s.w.size(); ++l) {
    CHECK(s.w[l].rows() == net.layers[Eigen::Index(l)].w.theta.rows());
    CHECK(s.w[l].cols() == net.layers[Eigen::Index(l)].w.theta.cols());
    bn_params += s.w[l].size();
    mp_params += net.layers[Eigen::Index(l)].w.theta.size();
  }
  CHECK(bn_params == mp_params);
  CHECK(bn_params == 17 * 9 + 9 * 4);
}

TEST_CASE("training runs learn, stay in range, and are deterministic") {
  const auto train_set = make_teacher_data(256, 16, 11, 12);
  const auto test_set = make_teacher_data(128, 16, 11, 13);

  BinaryNetConfig cfg;
  cfg.hidden = {8};
  cfg.lr = 1.0;
  cfg.epochs = 8;
  cfg.batch_size = 32;
  cfg.seed = 3;

  const auto a = bn_train(train_set, test_set, cfg);
  REQUIRE(a.rows.size() == 16);  // epochs x weight layers
  for (const auto& row : a.rows) {
    CHECK(row.algo == "binarynet");
    CHECK(std::isnan(row.bayes_train_err));
    CHECK(std::isnan(row.bayes_test_err));
    CHECK(row.q0 == 1.0);  // overlaps are measured on the sign configuration
  }
  CHECK(a.rows.back().train_err <= 0.15);
  for (const auto& w : a.final_theta)
    CHECK(w.array().abs().maxCoeff() <= 1.0);
  for (const auto& w : a.final_W)
    CHECK((w.array().abs() == 1.0).all());

  const auto b = bn_train(train_set, test_set, cfg);
  CHECK(rows_equal_ignoring_seconds(a.rows, b.rows));
  for (size_t l = 0; l < a.final_theta.size(); ++l)
    CHECK((a.final_theta[l].array() == b.final_theta[l].array()).all());

  SUBCASE("multi-class runs with both loss variants") {
    const auto anchors = make_anchor_data(120, 12, 3, 41, 42);
    BinaryNetConfig mc;
    mc.hidden = {6};
    mc.lr = 1.0;
    mc.epochs = 2;
    mc.batch_size = 24;
    const auto percls = bn_train(anchors, anchors, mc);
    CHECK(std::isfinite(percls.rows.back().train_err));
    mc.softmax_ce = true;
    const auto softmax = bn_train(anchors, anchors, mc);
    CHECK(std::isfinite(softmax.rows.back().train_err));
    CHECK(percls.final_W[1].rows() == 3);
  }
}

TEST_CASE("a single task through the continual loop reproduces bn_train") {
  const auto train_set = make_teacher_data(160, 12, 71, 72);
  const auto test_set = make_teacher_data(80, 12, 71, 73);
  BinaryNetConfig cfg;
  cfg.hidden = {6};
  cfg.lr = 1.0;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.seed = 6;

  const auto direct = bn_train(train_set, test_set, cfg);
  const auto cont = bn_train_continual({train_set}, {test_set}, cfg);
  REQUIRE(cont.per_task.size() == 1);
  CHECK(rows_equal_ignoring_seconds(direct.rows, cont.per_task[0].rows));
  for (size_t l = 0; l < direct.final_theta.size(); ++l)
    CHECK((direct.final_theta[l].array() == cont.final_theta[l].array()).all());
  CHECK(cont.error_matrix(0, 0) == direct.rows.back().test_err);
}

TEST_CASE("bad configurations and labels are rejected") {
  const auto data = make_teacher_data(32, 6, 61, 62);
  BinaryNetConfig cfg;
  cfg.hidden = {3};

  SUBCASE("config bounds") {
    BinaryNetConfig bad = cfg;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bn_train(data, data, bad), std::invalid_argument);
    bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bn_train(data, data, bad), std::invalid_argument);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bn_train(data, data, bad), std::invalid_argument);
    bad = cfg;
    bad.hidden = {0};
    CHECK_THROWS_AS(bn_train(data, data, bad), std::invalid_argument);
  }
  SUBCASE("two-class labels must be +-1") {
    const auto s = bn_init({6, 3, 1}, 1);
    MatA x = random_inputs(6, 2, 63);
    CHECK_THROWS_AS(bn_loss(s, x, {0, 1}), std::invalid_argument);
    CHECK_NOTHROW(bn_loss(s, x, {-1, +1}));
  }
  SUBCASE("multi-class labels must be in range") {
    const auto s = bn_init({6, 3, 4}, 1);
    MatA x = random_inputs(6, 2, 64);
    CHECK_THROWS_AS(bn_loss(s, x, {0, 4}), std::invalid_argument);
    CHECK_THROWS_AS(bn_gradient(s, x, {0}), std::invalid_argument);
  }
  SUBCASE("feature mismatch") {
    const auto s = bn_init({5, 3, 1}, 1);
    MatA x = random_inputs(6, 2, 65);
    CHECK_THROWS_AS(bn_forward(s, x), std::invalid_argument);
  }
}
