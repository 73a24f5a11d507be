#include "dcha/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace dcha {

void TrainConfig::validate() const {
  require(lr0 > 0.0, "config", "lr0 must be positive");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "config", "lr_decay must be in (0,1]");
  require(epochs >= 1, "config", "epochs must be >= 1");
  require(batch_size >= 1, "config", "batch_size must be >= 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "config",
          "adam betas must be in [0,1)");
  require(eps > 0.0, "config", "adam eps must be positive");
}

void adam_step(const std::vector<std::pair<std::string, Array*>>& params,
               const std::map<std::string, std::vector<double>>& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
  ++state.t;
  double c1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  double c2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (const auto& [path, arr] : params) {
    auto& m1 = state.m1[path];
    auto& m2 = state.m2[path];
    if (m1.empty()) {
      m1.assign(arr->size(), 0.0);
      m2.assign(arr->size(), 0.0);
    }
    auto git = grads.find(path);
    const std::vector<double>* g = git == grads.end() ? nullptr : &git->second;
    if (g) {
      require(g->size() == arr->size(), "optimizer", "gradient size mismatch for " + path);
      for (double v : *g)
        require(std::isfinite(v), "optimizer", "non-finite gradient for " + path);
    }
    for (std::size_t i = 0; i < arr->size(); ++i) {
      double gi = g ? (*g)[i] : 0.0;
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * gi;
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * gi * gi;
      arr->data[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.eps);
    }
  }
}

LossBreakdown case_loss(DchaModel& model, const DualViewCase& cs,
                        std::map<std::string, std::vector<double>>* grads, double scale) {
  require(cs.img_cc.h == cs.img_mlo.h && cs.img_cc.w == cs.img_mlo.w, "shape",
          "view images of a case must share dimensions");
  Tape tape;
  Binder bind(tape, grads != nullptr);
  Tensor icc = tape.tensor({1, cs.img_cc.h, cs.img_cc.w}, cs.img_cc.v);
  Tensor imlo = tape.tensor({1, cs.img_mlo.h, cs.img_mlo.w}, cs.img_mlo.v);
  ForwardOutput out = model_forward(icc, imlo, model, bind);
  TotalLoss tl =
      total_loss(out.cc.r, out.mlo.r, out.cc.p, out.mlo.p, cs.label, model.cfg.use_corr);
  LossBreakdown vals = tl.values();
  if (grads) {
    tape.backward(tl.total);
    std::unordered_map<const Array*, std::vector<double>> by_array;
    bind.accumulate_grads(by_array, scale);
    visit_params(model, [&](const std::string& path, Array& a) {
      auto it = by_array.find(&a);
      if (it == by_array.end()) return;
      auto& dst = (*grads)[path];
      if (dst.empty()) dst.assign(a.size(), 0.0);
      for (std::size_t i = 0; i < it->second.size(); ++i) dst[i] += it->second[i];
    });
  }
  return vals;
}

LossTrace train(DchaModel& model, const std::vector<DualViewCase>& cases,
                const TrainConfig& cfg) {
  cfg.validate();
  require(!cases.empty(), "args", "training set is empty");
  namespace fs = std::filesystem;
  if (!cfg.checkpoint_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.checkpoint_dir, ec);
    require(!ec, "io", "cannot create checkpoint dir " + cfg.checkpoint_dir);
  }

  std::vector<std::pair<std::string, Array*>> params;
  visit_params(model, [&](const std::string& path, Array& a) { params.emplace_back(path, &a); });

  AdamState state;
  LossTrace trace;
  const int n = int(cases.size());
  Rng shuffle_rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr0 * std::pow(cfg.lr_decay, double(epoch));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng epoch_rng = shuffle_rng.child(std::uint64_t(epoch));
    epoch_rng.shuffle(order);

    LossBreakdown epoch_sum;
    for (int start = 0; start < n; start += cfg.batch_size) {
      int bn = std::min(cfg.batch_size, n - start);
      std::vector<LossBreakdown> losses(bn);
      std::vector<std::map<std::string, std::vector<double>>> gmaps(bn);
      parallel_for(bn, [&](int i) {
        const DualViewCase* cs = &cases[std::size_t(order[start + i])];
        DualViewCase local;
        if (cfg.augment) {
          local = *cs;
          Rng arng = Rng(cfg.seed ^ 0x5ca1ab1eull)
                         .child(std::uint64_t(epoch) * std::uint64_t(n) +
                                std::uint64_t(order[start + i]));
          augment_case(local, arng, cfg.augment_cfg);
          cs = &local;
        }
        losses[std::size_t(i)] = case_loss(model, *cs, &gmaps[std::size_t(i)], 1.0 / bn);
      });

      std::map<std::string, std::vector<double>> grads;
      for (int i = 0; i < bn; ++i) {
        const auto& lb = losses[std::size_t(i)];
        if (!std::isfinite(lb.total)) {
          std::ostringstream os;
          os << "non-finite loss at epoch " << epoch << ", step " << start / cfg.batch_size
             << ", case " << cases[std::size_t(order[start + i])].case_id;
          fail("train", os.str());
        }
        epoch_sum.corr += lb.corr;
        epoch_sum.clss_cc += lb.clss_cc;
        epoch_sum.clss_mlo += lb.clss_mlo;
        epoch_sum.total += lb.total;
        for (auto& [path, g] : gmaps[std::size_t(i)]) {
          auto& dst = grads[path];
          if (dst.empty()) dst.assign(g.size(), 0.0);
          for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
        }
      }
      adam_step(params, grads, state, lr, cfg);
    }

    trace.push_back({epoch_sum.corr / n, epoch_sum.clss_cc / n, epoch_sum.clss_mlo / n,
                     epoch_sum.total / n});
    if (!cfg.checkpoint_dir.empty()) {
      std::ostringstream name;
      name << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
      save_model((fs::path(cfg.checkpoint_dir) / name.str()).string(), model);
    }
  }
  if (!cfg.checkpoint_dir.empty()) {
    save_model((fs::path(cfg.checkpoint_dir) / "model.ckpt").string(), model);
    write_loss_trace((fs::path(cfg.checkpoint_dir) / "loss_trace.csv").string(), trace);
  }
  return trace;
}

void write_loss_trace(const std::string& path, const LossTrace& trace) {
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "io", "cannot open loss trace for writing: " + path);
  os << "epoch,corr,clss_cc,clss_mlo,total\n";
  os << std::setprecision(17);
  for (std::size_t e = 0; e < trace.size(); ++e)
    os << e << "," << trace[e].corr << "," << trace[e].clss_cc << "," << trace[e].clss_mlo
       << "," << trace[e].total << "\n";
  require(bool(os), "io", "write failure on loss trace: " + path);
}

}  // namespace dcha
