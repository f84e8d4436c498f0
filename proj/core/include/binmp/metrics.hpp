#pragma once

#include <string>
#include <vector>

#include "binmp/messages.hpp"

// Training metric records shared by the message-passing trainer and the
// SGD baseline, and their fixed CSV renderings.

namespace binmp {

// One row per (epoch, weight layer). The error columns repeat across a
// given epoch's layer rows; q0 / qab are that layer's mean polarization and
// mean pairwise unit overlap (qab is NaN for single-unit layers).
// Bayesian columns are NaN when the marginal vote was not evaluated.
struct EpochRow {
  int epoch = 0;
  std::string algo;
  double train_err = 0.0;
  double test_err = 0.0;
  double bayes_train_err = 0.0;
  double bayes_test_err = 0.0;
  int layer = 0;
  double q0 = 0.0;
  double qab = 0.0;
  double seconds = 0.0;  // wall time of the epoch (same value on its rows)
};

struct RunMetrics {
  std::vector<EpochRow> rows;
  // Final state: the natural-parameter tensors the run optimizes (prior
  // fields for message passing; continuous weights for the SGD baseline)
  // and the corresponding +-1 point-wise configuration.
  std::vector<MatW> final_theta;
  std::vector<MatW> final_W;
  // Soft-assertion log (e.g. a polarization dip on a layer configured to
  // polarize); never fails a run.
  std::vector<std::string> notes;
};

struct ContinualMetrics {
  // Per-epoch rows for each task, evaluated on that task's own splits.
  // Epoch numbers continue across tasks, so a one-task run matches train.
  std::vector<RunMetrics> per_task;
  // error_matrix(j, k): test error on task k right after training task j.
  MatA error_matrix;
  std::vector<MatW> final_theta;
  std::vector<MatW> final_W;
  std::vector<std::string> notes;
};

inline constexpr const char* kMetricsCsvHeader =
    "epoch,algo,train_err,test_err,bayes_train_err,bayes_test_err,layer,q0,"
    "qab,seconds";

// Renders rows under kMetricsCsvHeader. Numeric columns use a fixed "%.12g"
// format (seconds "%.3f"), so identical metric values render to identical
// bytes.
std::string to_csv(const RunMetrics& metrics);
std::string to_csv(const std::vector<EpochRow>& rows);

// Renders the task matrix as "after_task,eval_task,test_err" rows
// (1-based task indices, row-major).
std::string matrix_csv(const ContinualMetrics& metrics);

}  // namespace binmp
