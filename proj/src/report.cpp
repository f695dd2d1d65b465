#include "tolcal/report.hpp"

#include <cmath>

namespace tolcal {

using nlohmann::json;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string(what) + ": " + e.what());
  }
}

}  // namespace

json to_json(const ReliabilityBin& bin) {
  return {{"lower", bin.lower},
          {"upper", bin.upper},
          {"count", bin.count},
          {"mean_confidence", bin.mean_confidence},
          {"tolerance_accuracy", bin.tolerance_accuracy}};
}

json to_json(const MetricReport& report) {
  json doc;
  doc["t_ece"] = report.t_ece;
  doc["brier"] = report.brier;
  doc["mh"] = report.mh ? json(*report.mh) : json(nullptr);
  if (!report.mh) doc["mh_error"] = report.mh_error;
  doc["n"] = report.n;
  doc["bins"] = json::array();
  for (const auto& bin : report.bins) doc["bins"].push_back(to_json(bin));
  return doc;
}

json to_json(const CalibratorModel& model) {
  json params;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PlattParams>) {
          params = {{"a", p.a}, {"b", p.b}};
        } else if constexpr (std::is_same_v<P, BetaParams>) {
          params = {{"a", p.a}, {"b", p.b}, {"c", p.c}};
        } else if constexpr (std::is_same_v<P, IsotonicParams>) {
          params["knots"] = json::array();
          for (const auto& k : p.knots) params["knots"].push_back({k.confidence, k.calibrated});
        } else {
          params = {{"temperature", p.temperature}};
        }
      },
      model.params());
  const auto& info = model.fit_info();
  return {{"kind", to_string(model.kind())},
          {"params", params},
          {"fit", {{"iterations", info.iterations}, {"gradient_norm", info.gradient_norm}, {"converged", info.converged}}}};
}

CalibratorModel calibrator_from_json(const json& doc) {
  return guarded("calibrator model", [&] {
    const auto kind = parse_calibrator_kind(doc.at("kind").get<std::string>());
    const auto& p = doc.at("params");
    FitInfo info;
    if (auto it = doc.find("fit"); it != doc.end()) {
      info.iterations = it->value("iterations", 0);
      info.gradient_norm = it->value("gradient_norm", 0.0);
      info.converged = it->value("converged", true);
    }
    switch (kind) {
      case CalibratorKind::platt:
        return CalibratorModel(PlattParams{p.at("a").get<double>(), p.at("b").get<double>()}, info);
      case CalibratorKind::beta:
        return CalibratorModel(BetaParams{p.at("a").get<double>(), p.at("b").get<double>(), p.at("c").get<double>()},
                               info);
      case CalibratorKind::isotonic: {
        IsotonicParams iso;
        for (const auto& k : p.at("knots")) iso.knots.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
        return CalibratorModel(std::move(iso), info);
      }
      case CalibratorKind::temperature:
        break;
    }
    return CalibratorModel(TemperatureParams{p.at("temperature").get<double>()}, info);
  });
}

json to_json(const MethodEvaluation& evaluation) {
  json doc;
  doc["method"] = evaluation.method;
  doc["ok"] = evaluation.ok;
  if (!evaluation.ok) {
    doc["error"] = evaluation.error;
    return doc;
  }
  doc["t_ece"] = evaluation.t_ece;
  doc["brier"] = evaluation.brier;
  doc["spread"] = evaluation.spread;
  doc["nll"] = evaluation.nll;
  doc["resolution_collapse"] = evaluation.resolution_collapse;
  return doc;
}

json to_json(const CalibrationComparison& comparison) {
  json doc;
  doc["methods"] = json::array();
  doc["resolution_collapse"] = json::array();
  for (const auto& m : comparison.methods) {
    doc["methods"].push_back(to_json(m));
    if (m.ok && m.resolution_collapse) doc["resolution_collapse"].push_back(m.method);
  }
  return doc;
}

json to_json(const StudentModel& model) { return {{"k", model.k}, {"d", model.d}, {"weights", model.weights}}; }

StudentModel student_from_json(const json& doc) {
  return guarded("student model", [&] {
    StudentModel model(doc.at("k").get<int>(), doc.at("d").get<int>());
    auto weights = doc.at("weights").get<std::vector<double>>();
    if (weights.size() != model.weights.size())
      fail(ErrorKind::parse, "student model: expected " + std::to_string(model.weights.size()) + " weights, got " +
                                 std::to_string(weights.size()));
    for (double w : weights)
      if (!std::isfinite(w)) fail(ErrorKind::parse, "student model: non-finite weight");
    model.weights = std::move(weights);
    return model;
  });
}

json to_json(const RegressionResult& result) {
  return {{"beta", result.beta},   {"intercept", result.intercept},   {"se", result.se_beta},
          {"t", number(result.t_stat)}, {"r_squared", result.r_squared}, {"n", result.n}};
}

json to_json(const DistillReport& report) {
  return {{"k", report.k},
          {"n_train", report.n_train},
          {"n_eval", report.n_eval},
          {"teacher", {{"t_ece", report.teacher.t_ece}, {"brier", report.teacher.brier}}},
          {"student", {{"t_ece", report.student.t_ece}, {"brier", report.student.brier}}},
          {"delta", {{"t_ece", report.delta_t_ece}, {"brier", report.delta_brier}}},
          {"epoch_loss", report.epoch_loss}};
}

json to_json(const AttenuationResult& result) {
  return {{"truth", to_json(result.truth)},
          {"unfiltered", to_json(result.unfiltered)},
          {"filtered", to_json(result.filtered)},
          {"sentences", result.sentences},
          {"kept_sentences", result.kept_sentences},
          {"model_t_ece", result.model_t_ece}};
}

}  // namespace tolcal
