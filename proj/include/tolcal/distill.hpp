#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "tolcal/core.hpp"
#include "tolcal/metrics.hpp"

namespace tolcal {

// K-class probability vector.
struct SoftTarget {
  std::vector<double> probs;
  int k() const noexcept { return static_cast<int>(probs.size()); }
};

// Linear multinomial student: logits = weights * [x; 1].
struct StudentModel {
  int k = 0;
  int d = 0;
  std::vector<double> weights;  // row-major k x (d + 1), bias in the last column

  StudentModel() = default;
  StudentModel(int classes, int dims);  // zero weights

  std::span<const double> row(int cls) const {
    return {weights.data() + static_cast<std::size_t>(cls) * (d + 1), static_cast<std::size_t>(d + 1)};
  }
  std::span<double> row(int cls) {
    return {weights.data() + static_cast<std::size_t>(cls) * (d + 1), static_cast<std::size_t>(d + 1)};
  }
  bool operator==(const StudentModel&) const = default;
};

struct TrainConfig {
  int epochs = 30;
  // The encoder recipe uses 2e-5; the linear student uses it scaled by 100.
  double learning_rate = 2e-3;
  int batch_size = 16;
  double temperature = 1.0;
  double grad_clip = 1.0;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

// k == 11 uses the 0, 10, ..., 100 grid (half-up rounding of y / 10);
// other k use equal-width bins floor(y * k / 100) clamped to k - 1.
int score_to_class(double y, int k);
// Score a class stands for: 10 * j for k == 11, the bin centre otherwise.
double class_center(int cls, int k);

// The target class receives `confidence`; the other k - 1 share the rest.
SoftTarget soft_target(double y_pred, double confidence, int k);

// sum_j t_j ln(t_j / s_j) with 0 ln 0 = 0.
double kl_soft_loss(std::span<const double> student_probs, const SoftTarget& target);

// Numerically stable softmax of logits / temperature.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

std::vector<double> student_logits(const StudentModel& model, std::span<const double> features);

// Mean KL over the rows, and its gradient with respect to the weights.
double student_loss(const StudentModel& model, const std::vector<std::vector<double>>& features,
                    std::span<const SoftTarget> targets, double temperature);
std::vector<double> student_gradient(const StudentModel& model, const std::vector<std::vector<double>>& features,
                                     std::span<const SoftTarget> targets, double temperature);

struct TrainResult {
  StudentModel model;
  std::vector<double> epoch_loss;  // mean training KL after each epoch
};

// Minibatch gradient descent on the mean KL soft-label loss with per-batch
// L2 gradient clipping. Returns the final-epoch model; bit-reproducible for a
// fixed seed and configuration.
TrainResult train_student(const std::vector<std::vector<double>>& features, std::span<const SoftTarget> targets,
                          const TrainConfig& cfg);

struct StudentPrediction {
  double y_pred = 0.0;
  double confidence = 0.0;
  std::vector<double> probs;
};

StudentPrediction student_predict(const StudentModel& model, std::span<const double> features);

// 11 classes for the FOMC stance data, 10 otherwise.
int default_class_count(std::string_view dataset_name);

struct DistillReport {
  int k = 0;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  MetricReport teacher;
  MetricReport student;
  double delta_t_ece = 0.0;  // student - teacher
  double delta_brier = 0.0;
  std::vector<double> epoch_loss;
  StudentModel model;
};

// Seeded split, soft targets from the teacher's (y_pred, confidence), student
// training, and teacher-vs-student metrics on the held-out rows. k <= 0
// selects default_class_count(dataset.name()).
DistillReport distill_pipeline(const Dataset& dataset, const std::vector<std::vector<double>>& features, int k,
                               const TrainConfig& cfg, const ToleranceConfig& tol);

}  // namespace tolcal
