#pragma once

// JSON forms of the reports and fitted models. Non-finite numbers (an exact
// OLS fit's t statistic) serialize as null.

#include "json.hpp"
#include "tolcal/calibrators.hpp"
#include "tolcal/distill.hpp"
#include "tolcal/metrics.hpp"
#include "tolcal/regress.hpp"

namespace tolcal {

nlohmann::json to_json(const ReliabilityBin& bin);
// {t_ece, brier, mh (null when undefined), mh_error?, n, bins[]}
nlohmann::json to_json(const MetricReport& report);

// {kind, params{...}} with knots[] for isotonic.
nlohmann::json to_json(const CalibratorModel& model);
CalibratorModel calibrator_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const MethodEvaluation& evaluation);
// {methods[], resolution_collapse[]} where the second lists flagged methods.
nlohmann::json to_json(const CalibrationComparison& comparison);

// {k, d, weights[]} with weights row-major k x (d + 1).
nlohmann::json to_json(const StudentModel& model);
StudentModel student_from_json(const nlohmann::json& doc);

// {beta, intercept, se, t, r_squared, n}
nlohmann::json to_json(const RegressionResult& result);

// {k, n_train, n_eval, teacher{t_ece, brier}, student{t_ece, brier},
//  delta{t_ece, brier}, epoch_loss[]}
nlohmann::json to_json(const DistillReport& report);

nlohmann::json to_json(const AttenuationResult& result);

}  // namespace tolcal
