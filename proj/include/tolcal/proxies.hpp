#pragma once

#include <span>
#include <string_view>

#include "tolcal/core.hpp"

namespace tolcal {

enum class ProxyMethod { verbal, resampling, logit_geom, p_true };

const char* to_string(ProxyMethod method);
ProxyMethod parse_proxy_method(std::string_view text);

struct ProxyOutput {
  double measurement = 0.0;
  double confidence = 0.0;
  ProxyMethod method = ProxyMethod::verbal;
};

// Densest window of width 2*epsilon. Windows are anchored at each sorted
// sample value [s, s + 2*epsilon]; ties go to the smallest anchor. The
// confidence is the in-window share and the measurement the in-window mean.
ProxyOutput resampling_confidence(std::span<const double> samples, double epsilon);

// exp(mean(log p)), computed in log space.
double logit_geometric_mean(std::span<const double> token_probs);

// Softmax probability of the "True" token over {True, False}.
double p_true_confidence(double logit_true, double logit_false);

// Replaces each record's confidence (and for resampling, its y_pred) with the
// proxy output. Throws missing_evidence listing every record id that lacks
// the evidence the method needs.
Dataset attach_proxy(const Dataset& dataset, ProxyMethod method, const ToleranceConfig& cfg);

}  // namespace tolcal
