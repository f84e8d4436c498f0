#include "binmp/messages.hpp"

#include <stdexcept>

namespace binmp {

NetworkState make_network(const std::vector<Eigen::Index>& dims,
                          bool track_curvature) {
  if (dims.size() < 2) throw std::invalid_argument("need at least one layer");
  NetworkState net;
  net.layers.resize(dims.size() - 1);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    LayerState& s = net.layers[l];
    s.shape = {dims[l], dims[l + 1]};
    if (s.shape.n_in <= 0 || s.shape.n_out <= 0)
      throw std::invalid_argument("layer widths must be positive");
    auto& w = s.w;
    w.theta = MatW::Zero(s.shape.n_out, s.shape.n_in);
    w.H = w.theta;
    w.m = w.theta;
    w.m_prev = w.theta;
    w.sigma = MatW::Ones(s.shape.n_out, s.shape.n_in);
    if (track_curvature) w.G = w.theta;
  }
  return net;
}

void resize_batch(NetworkState& net, Eigen::Index batch) {
  if (batch <= 0) throw std::invalid_argument("batch must be positive");
  if (net.batch == batch) return;
  net.batch = batch;
  for (Eigen::Index l = 0; l < net.depth(); ++l) {
    LayerState& s = net.layers[l];
    const Eigen::Index ni = s.shape.n_in, no = s.shape.n_out;
    s.a.B.setZero(ni, batch);
    if (s.w.G.size() > 0) s.a.A.setZero(ni, batch);
    s.a.xhat.setZero(ni, batch);
    s.a.delta.setZero(ni, batch);
    s.a.xhat_prev.setZero(ni, batch);
    s.a.field_u.setZero(ni, batch);
    s.p.omega.setZero(no, batch);
    s.p.V.setZero(no, batch);
    s.p.g.setZero(no, batch);
    s.p.Gamma.setZero(no, batch);
    if (s.edges) {
      s.edges->h_edge.resize(no, batch, ni);
      if (l > 0) s.edges->b_edge.resize(no, batch, ni);
      s.edges->live = false;
    }
  }
}

void enable_edge_messages(NetworkState& net, Eigen::Index layer) {
  LayerState& s = net.layers.at(static_cast<size_t>(layer));
  if (s.edges) return;
  s.edges.emplace();
  if (net.batch > 0) {
    s.edges->h_edge.resize(s.shape.n_out, net.batch, s.shape.n_in);
    if (layer > 0) s.edges->b_edge.resize(s.shape.n_out, net.batch, s.shape.n_in);
  }
}

void enable_edge_messages(NetworkState& net) {
  for (Eigen::Index l = 0; l < net.depth(); ++l) enable_edge_messages(net, l);
}

void reset_messages(NetworkState& net) { reset_messages(net, false); }

void reset_messages(NetworkState& net, bool keep_weight_means) {
  for (LayerState& s : net.layers) {
    s.w.H.setZero();
    if (!keep_weight_means) s.w.m = s.w.theta.array().tanh().matrix();
    s.w.m_prev = s.w.m;
    s.w.sigma = (1.0 - s.w.m.array().square()).matrix();
    if (s.w.G.size() > 0) s.w.G.setZero();
    if (s.a.B.size() > 0) {
      s.a.B.setZero();
      if (s.a.A.size() > 0) s.a.A.setZero();
      s.a.xhat_prev.setZero();
      s.a.field_u.setZero();
      s.p.g.setZero();
      s.p.Gamma.setZero();
    }
    if (s.edges) {
      s.edges->h_edge.set_zero();
      s.edges->b_edge.set_zero();
      s.edges->live = false;
    }
  }
}

void update_weight_means(WeightMessages& w, double alpha) {
  MatW fresh = (w.theta + w.H).array().tanh().matrix();
  if (alpha != 0.0) {
    w.m = alpha * w.m_prev + (1.0 - alpha) * fresh;
  } else {
    w.m = std::move(fresh);
  }
  w.sigma = ((1.0 - w.m.array()) * (1.0 + w.m.array())).matrix();
}

}  // namespace binmp
