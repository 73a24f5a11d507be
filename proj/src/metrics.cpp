#include "dcha/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dcha {

std::pair<double, int> predict_case(DchaModel& model, const DualViewCase& cs) {
  Tape tape;
  Binder bind(tape, /*with_grad=*/false);
  Tensor icc = tape.tensor({1, cs.img_cc.h, cs.img_cc.w}, cs.img_cc.v);
  Tensor imlo = tape.tensor({1, cs.img_mlo.h, cs.img_mlo.w}, cs.img_mlo.v);
  ForwardOutput out = model_forward(icc, imlo, model, bind);
  double p = 0.5 * (out.cc.p.item() + out.mlo.p.item());
  return {p, p > 0.5 ? 1 : 0};
}

double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size() && !scores.empty(), "args",
          "scores and labels must be equal-length and nonempty");
  std::size_t pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, "args", "labels must be 0/1");
    pos += std::size_t(l);
  }
  std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, "args", "AUC needs both classes present");

  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // mid-rank sum over positives
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    double mid_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) rank_sum += mid_rank;
    i = j;
  }
  return (rank_sum - 0.5 * double(pos) * double(pos + 1)) / (double(pos) * double(neg));
}

MetricsReport evaluate(DchaModel& model, const std::vector<DualViewCase>& cases) {
  require(!cases.empty(), "args", "evaluation set is empty");
  MetricsReport rep;
  rep.per_case.resize(cases.size());
  parallel_for(int(cases.size()), [&](int i) {
    const DualViewCase& cs = cases[std::size_t(i)];
    Tape tape;
    Binder bind(tape, false);
    Tensor icc = tape.tensor({1, cs.img_cc.h, cs.img_cc.w}, cs.img_cc.v);
    Tensor imlo = tape.tensor({1, cs.img_mlo.h, cs.img_mlo.w}, cs.img_mlo.v);
    ForwardOutput out = model_forward(icc, imlo, model, bind);
    PerCaseResult& r = rep.per_case[std::size_t(i)];
    r.case_id = cs.case_id;
    r.p_cc = out.cc.p.item();
    r.p_mlo = out.mlo.p.item();
    r.p_avg = 0.5 * (r.p_cc + r.p_mlo);
    r.label = cs.label;
  });

  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (const auto& r : rep.per_case) {
    scores.push_back(r.p_avg);
    labels.push_back(r.label);
    correct += (r.p_avg > 0.5 ? 1 : 0) == r.label;
  }
  rep.accuracy = double(correct) / double(cases.size());
  rep.auc = compute_auc(scores, labels);
  return rep;
}

void write_metrics(const std::string& path, const MetricsReport& report) {
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "io", "cannot open metrics report for writing: " + path);
  os << "case_id,p_cc,p_mlo,p_avg,label\n" << std::setprecision(17);
  for (const auto& r : report.per_case)
    os << r.case_id << "," << r.p_cc << "," << r.p_mlo << "," << r.p_avg << "," << r.label
       << "\n";
  os << summary_line(report) << "\n";
  require(bool(os), "io", "write failure on metrics report: " + path);
}

std::string summary_line(const MetricsReport& report) {
  std::ostringstream os;
  os << "accuracy=" << report.accuracy << " auc=" << report.auc;
  return os.str();
}

}  // namespace dcha
