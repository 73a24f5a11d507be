#pragma once

#include "dcha/model.hpp"
#include "dcha/train.hpp"

namespace dcha {

struct PerCaseResult {
  std::string case_id;
  double p_cc = 0, p_mlo = 0, p_avg = 0;
  int label = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double auc = 0.0;
  std::vector<PerCaseResult> per_case;
};

// Average of the two view probabilities; decision by strict > 0.5.
std::pair<double, int> predict_case(DchaModel& model, const DualViewCase& cs);

// Mann-Whitney AUC with ties counted 0.5; requires both classes present.
double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels);

MetricsReport evaluate(DchaModel& model, const std::vector<DualViewCase>& cases);

void write_metrics(const std::string& path, const MetricsReport& report);
std::string summary_line(const MetricsReport& report);

}  // namespace dcha
