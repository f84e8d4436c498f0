#include "binmp/metrics.hpp"

#include <cstdio>

namespace binmp {

namespace {

void append_num(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

}  // namespace

std::string to_csv(const std::vector<EpochRow>& rows) {
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.epoch);
    out += ',';
    out += r.algo;
    out += ',';
    append_num(out, r.train_err);
    out += ',';
    append_num(out, r.test_err);
    out += ',';
    append_num(out, r.bayes_train_err);
    out += ',';
    append_num(out, r.bayes_test_err);
    out += ',';
    out += std::to_string(r.layer);
    out += ',';
    append_num(out, r.q0);
    out += ',';
    append_num(out, r.qab);
    out += ',';
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
    out += buf;
    out += '\n';
  }
  return out;
}

std::string to_csv(const RunMetrics& metrics) { return to_csv(metrics.rows); }

std::string matrix_csv(const ContinualMetrics& metrics) {
  std::string out = "after_task,eval_task,test_err\n";
  for (Eigen::Index j = 0; j < metrics.error_matrix.rows(); ++j) {
    for (Eigen::Index k = 0; k < metrics.error_matrix.cols(); ++k) {
      out += std::to_string(j + 1);
      out += ',';
      out += std::to_string(k + 1);
      out += ',';
      append_num(out, metrics.error_matrix(j, k));
      out += '\n';
    }
  }
  return out;
}

}  // namespace binmp
