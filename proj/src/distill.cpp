#include "tolcal/distill.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include "tolcal/kernels.hpp"

namespace tolcal {

StudentModel::StudentModel(int classes, int dims)
    : k(classes), d(dims), weights(static_cast<std::size_t>(classes) * static_cast<std::size_t>(dims + 1), 0.0) {
  if (classes < 2 || dims < 0) fail(ErrorKind::invalid_input, "student needs k >= 2 and d >= 0");
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::invalid_input, "epochs must be positive");
  if (!(learning_rate > 0.0)) fail(ErrorKind::invalid_input, "learning_rate must be positive");
  if (batch_size < 1) fail(ErrorKind::invalid_input, "batch_size must be positive");
  if (!(temperature > 0.0)) fail(ErrorKind::invalid_input, "temperature must be positive");
  if (!(grad_clip > 0.0)) fail(ErrorKind::invalid_input, "grad_clip must be positive");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    fail(ErrorKind::invalid_input, "split_fraction must lie in (0, 1)");
}

int score_to_class(double y, int k) {
  if (k < 2) fail(ErrorKind::invalid_input, "class count must be at least 2");
  if (!std::isfinite(y) || y < 0.0 || y > kScaleMax)
    fail(ErrorKind::invalid_input, "score " + format_number(y) + " outside [0, 100]");
  if (k == 11) return static_cast<int>(std::floor(y / 10.0 + 0.5));
  const int cls = static_cast<int>(std::floor(y * k / kScaleMax));
  return std::clamp(cls, 0, k - 1);
}

double class_center(int cls, int k) {
  if (k < 2 || cls < 0 || cls >= k) fail(ErrorKind::invalid_input, "class index out of range");
  if (k == 11) return 10.0 * cls;
  return (cls + 0.5) * kScaleMax / k;
}

SoftTarget soft_target(double y_pred, double confidence, int k) {
  if (!std::isfinite(confidence) || confidence < 0.0 || confidence > 1.0)
    fail(ErrorKind::invalid_input, "confidence " + format_number(confidence) + " outside [0, 1]");
  const int cls = score_to_class(y_pred, k);
  SoftTarget t;
  t.probs.assign(static_cast<std::size_t>(k), (1.0 - confidence) / (k - 1));
  t.probs[static_cast<std::size_t>(cls)] = confidence;
  return t;
}

double kl_soft_loss(std::span<const double> student_probs, const SoftTarget& target) {
  if (student_probs.size() != target.probs.size())
    fail(ErrorKind::invalid_input, "kl_soft_loss: class counts differ");
  double loss = 0.0;
  for (std::size_t j = 0; j < student_probs.size(); ++j) {
    if (!(student_probs[j] > 0.0)) fail(ErrorKind::invalid_input, "kl_soft_loss: student probability must be > 0");
    const double t = target.probs[j];
    if (t > 0.0) loss += t * (std::log(t) - std::log(student_probs[j]));
  }
  return std::max(loss, 0.0);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp((logits[j] - top) / temperature);
    total += out[j];
  }
  for (auto& v : out) v /= total;
  return out;
}

std::vector<double> student_logits(const StudentModel& model, std::span<const double> features) {
  if (static_cast<int>(features.size()) != model.d)
    fail(ErrorKind::invalid_input, "feature dimension " + std::to_string(features.size()) + " does not match " +
                                       std::to_string(model.d));
  std::vector<double> logits(static_cast<std::size_t>(model.k));
  for (int j = 0; j < model.k; ++j) {
    const auto w = model.row(j);
    logits[static_cast<std::size_t>(j)] = kernels::dot(w.first(static_cast<std::size_t>(model.d)), features) + w.back();
  }
  return logits;
}

namespace {

void check_training_inputs(const std::vector<std::vector<double>>& features, std::span<const SoftTarget> targets) {
  if (features.size() != targets.size())
    fail(ErrorKind::invalid_input, "features and targets differ in length");
  if (features.empty()) fail(ErrorKind::empty_input, "no training rows");
  const auto d = features.front().size();
  const int k = targets.front().k();
  if (k < 2) fail(ErrorKind::invalid_input, "targets need at least two classes");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) fail(ErrorKind::invalid_input, "feature row " + std::to_string(i) + " has wrong dimension");
    if (targets[i].k() != k) fail(ErrorKind::invalid_input, "targets do not share a class count");
  }
}

// Adds the gradient of row i's KL to `grad` with weight `scale`; returns the loss.
double accumulate_row(const StudentModel& model, std::span<const double> x, const SoftTarget& target,
                      double temperature, double scale, std::vector<double>& grad, std::vector<double>& xt) {
  const auto logits = student_logits(model, x);
  const auto probs = softmax(logits, temperature);
  std::copy(x.begin(), x.end(), xt.begin());
  xt.back() = 1.0;
  const auto width = static_cast<std::size_t>(model.d + 1);
  for (int j = 0; j < model.k; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const double coeff = scale * (probs[ju] - target.probs[ju]) / temperature;
    kernels::axpy(coeff, xt, std::span<double>(grad.data() + ju * width, width));
  }
  return kl_soft_loss(probs, target);
}

}  // namespace

double student_loss(const StudentModel& model, const std::vector<std::vector<double>>& features,
                    std::span<const SoftTarget> targets, double temperature) {
  check_training_inputs(features, targets);
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i)
    total += kl_soft_loss(softmax(student_logits(model, features[i]), temperature), targets[i]);
  return total / static_cast<double>(features.size());
}

std::vector<double> student_gradient(const StudentModel& model, const std::vector<std::vector<double>>& features,
                                     std::span<const SoftTarget> targets, double temperature) {
  check_training_inputs(features, targets);
  std::vector<double> grad(model.weights.size(), 0.0);
  std::vector<double> xt(static_cast<std::size_t>(model.d + 1));
  const double scale = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i)
    accumulate_row(model, features[i], targets[i], temperature, scale, grad, xt);
  return grad;
}

TrainResult train_student(const std::vector<std::vector<double>>& features, std::span<const SoftTarget> targets,
                          const TrainConfig& cfg) {
  cfg.validate();
  check_training_inputs(features, targets);
  if (features.size() < static_cast<std::size_t>(cfg.batch_size))
    fail(ErrorKind::invalid_input, "need at least batch_size training rows");

  TrainResult result;
  result.model = StudentModel(targets.front().k(), static_cast<int>(features.front().size()));
  auto& model = result.model;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(model.weights.size());
  std::vector<double> xt(static_cast<std::size_t>(model.d + 1));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = start; b < stop; ++b)
        accumulate_row(model, features[order[b]], targets[order[b]], cfg.temperature, scale, grad, xt);
      const double norm = std::sqrt(kernels::dot(grad, grad));
      const double clip = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      kernels::axpy(-cfg.learning_rate * clip, grad, model.weights);
    }
    result.epoch_loss.push_back(student_loss(model, features, targets, cfg.temperature));
  }
  return result;
}

StudentPrediction student_predict(const StudentModel& model, std::span<const double> features) {
  StudentPrediction out;
  out.probs = softmax(student_logits(model, features));
  const auto best = static_cast<int>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  out.confidence = out.probs[static_cast<std::size_t>(best)];
  out.y_pred = class_center(best, model.k);
  return out;
}

int default_class_count(std::string_view dataset_name) {
  std::string lower(dataset_name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower == "fomc" ? 11 : 10;
}

DistillReport distill_pipeline(const Dataset& dataset, const std::vector<std::vector<double>>& features, int k,
                               const TrainConfig& cfg, const ToleranceConfig& tol) {
  cfg.validate();
  tol.validate();
  require_non_empty(dataset, "distill_pipeline");
  if (features.size() != dataset.size())
    fail(ErrorKind::invalid_input, "features have " + std::to_string(features.size()) + " rows for " +
                                       std::to_string(dataset.size()) + " records");
  if (k <= 0) k = default_class_count(dataset.name());

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.split_fraction * static_cast<double>(order.size())));
  if (n_train == 0 || n_train >= order.size())
    fail(ErrorKind::insufficient_data, "split leaves an empty train or eval set");

  std::vector<std::vector<double>> train_x;
  std::vector<SoftTarget> train_t;
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto& r = dataset[order[i]];
    train_x.push_back(features[order[i]]);
    train_t.push_back(soft_target(r.y_pred, r.confidence, k));
  }
  auto trained = train_student(train_x, train_t, cfg);

  std::vector<MeasurementRecord> teacher_eval, student_eval;
  for (std::size_t i = n_train; i < order.size(); ++i) {
    const auto& r = dataset[order[i]];
    teacher_eval.push_back(r);
    const auto pred = student_predict(trained.model, features[order[i]]);
    MeasurementRecord s;
    s.id = r.id;
    s.y_true = r.y_true;
    s.y_pred = pred.y_pred;
    s.confidence = std::clamp(pred.confidence, 0.0, 1.0);
    student_eval.push_back(std::move(s));
  }

  DistillReport report;
  report.k = k;
  report.n_train = n_train;
  report.n_eval = order.size() - n_train;
  report.teacher = metric_report(Dataset(dataset.name() + "-teacher", std::move(teacher_eval)), tol);
  report.student = metric_report(Dataset(dataset.name() + "-student", std::move(student_eval)), tol);
  report.delta_t_ece = report.student.t_ece - report.teacher.t_ece;
  report.delta_brier = report.student.brier - report.teacher.brier;
  report.epoch_loss = std::move(trained.epoch_loss);
  report.model = std::move(trained.model);
  return report;
}

}  // namespace tolcal
