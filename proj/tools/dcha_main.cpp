// Command-line front end: generate | train | eval | saliency, driven by a
// key = value config file plus --set overrides.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "dcha/config.hpp"
#include "dcha/image_io.hpp"
#include "dcha/metrics.hpp"
#include "dcha/saliency.hpp"

namespace fs = std::filesystem;
using namespace dcha;

namespace {

BBox scale_bbox(const BBox& b, double s) {
  return {int(std::floor(b.x0 * s)), int(std::floor(b.y0 * s)), int(std::ceil(b.x1 * s)),
          int(std::ceil(b.y1 * s))};
}

std::vector<DualViewCase> load_cases(const RunConfig& cfg, const std::string& dir) {
  auto entries = read_manifest((fs::path(dir) / "manifest.csv").string());
  std::vector<DualViewCase> cases(entries.size());
  parallel_for(int(entries.size()), [&](int i) {
    const ManifestEntry& e = entries[std::size_t(i)];
    DualViewCase& cs = cases[std::size_t(i)];
    cs.case_id = e.case_id;
    cs.label = e.label;
    cs.img_cc = read_pgm((fs::path(dir) / e.cc_path).string());
    cs.img_mlo = read_pgm((fs::path(dir) / e.mlo_path).string());
    cs.bbox_cc = e.bbox_cc;
    cs.bbox_mlo = e.bbox_mlo;
    if (cfg.preprocess_enabled) {
      double s = double(cfg.preprocess.target_size) / cs.img_cc.h;
      cs.img_cc = preprocess_view(cs.img_cc, cfg.preprocess);
      cs.img_mlo = preprocess_view(cs.img_mlo, cfg.preprocess);
      if (cs.bbox_cc) cs.bbox_cc = scale_bbox(*cs.bbox_cc, s);
      if (cs.bbox_mlo) cs.bbox_mlo = scale_bbox(*cs.bbox_mlo, s);
    }
  });
  return cases;
}

DchaModel load_trained_model(const RunConfig& cfg) {
  std::string ckpt = (fs::path(cfg.paths.run_dir) / "model.ckpt").string();
  require(fs::exists(ckpt), "cli", "no trained checkpoint at " + ckpt + "; run `dcha train` first");
  DchaModel model = build_model(cfg.model);
  load_model(ckpt, model);
  return model;
}

std::string eval_dir(const RunConfig& cfg) {
  return cfg.paths.eval_dir.empty() ? cfg.paths.data_dir : cfg.paths.eval_dir;
}

void write_sidecar(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.paths.run_dir, ec);
  require(!ec, "cli", "cannot create run dir " + cfg.paths.run_dir);
  write_effective_config((fs::path(cfg.paths.run_dir) / "effective.cfg").string(), cfg);
}

int run_generate(const RunConfig& cfg) {
  std::string manifest = generate_dataset(cfg.phantom, cfg.phantom_count, cfg.paths.data_dir);
  std::cout << "wrote " << cfg.phantom_count << " cases, manifest " << manifest << "\n";
  return 0;
}

int run_train(RunConfig cfg) {
  write_sidecar(cfg);
  auto cases = load_cases(cfg, cfg.paths.data_dir);
  DchaModel model = build_model(cfg.model);
  cfg.train.checkpoint_dir = cfg.paths.run_dir;
  LossTrace trace = train(model, cases, cfg.train);
  std::cout << "trained " << cfg.train.epochs << " epochs on " << cases.size()
            << " cases; final total loss " << trace.back().total << "\n";
  return 0;
}

int run_eval(const RunConfig& cfg) {
  write_sidecar(cfg);
  DchaModel model = load_trained_model(cfg);
  auto cases = load_cases(cfg, eval_dir(cfg));
  MetricsReport rep = evaluate(model, cases);
  std::string path = (fs::path(cfg.paths.run_dir) / "metrics.csv").string();
  write_metrics(path, rep);
  std::cout << summary_line(rep) << "\n";
  return 0;
}

int run_saliency(const RunConfig& cfg) {
  write_sidecar(cfg);
  DchaModel model = load_trained_model(cfg);
  auto cases = load_cases(cfg, eval_dir(cfg));
  std::string out_dir = (fs::path(cfg.paths.run_dir) / "saliency").string();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, "cli", "cannot create saliency dir " + out_dir);

  std::vector<SaliencyHit> hits;
  int inside = 0;
  for (const DualViewCase& cs : cases) {
    for (View view : {View::CC, View::MLO}) {
      const auto& bbox = (view == View::CC) ? cs.bbox_cc : cs.bbox_mlo;
      if (!bbox) continue;  // benign case, nothing to localize
      SaliencyMap map = grad_cam(model, cs, view);
      std::string name = cs.case_id + (view == View::CC ? "_cc" : "_mlo") + ".ppm";
      overlay_and_save(cs, view, map, (fs::path(out_dir) / name).string());
      SaliencyHit h;
      h.case_id = cs.case_id;
      h.view = view;
      h.peak_row = map.peak_row;
      h.peak_col = map.peak_col;
      h.hit = bbox->contains(map.peak_row, map.peak_col) ? 1 : 0;
      inside += h.hit;
      hits.push_back(h);
    }
  }
  write_hits((fs::path(out_dir) / "hits.csv").string(), hits);
  std::cout << "saliency: " << inside << "/" << hits.size() << " peaks inside the lesion box\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-view phantom classification pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "key = value config file");
  app.add_option("-s,--set", overrides, "override, e.g. --set train.epochs=3");

  auto* cmd_generate = app.add_subcommand("generate", "write a phantom dataset + manifest");
  auto* cmd_train = app.add_subcommand("train", "train and checkpoint a model");
  auto* cmd_eval = app.add_subcommand("eval", "score a dataset with a trained model");
  auto* cmd_saliency = app.add_subcommand("saliency", "write heatmap overlays and a hits CSV");
  for (auto* cmd : {cmd_generate, cmd_train, cmd_eval, cmd_saliency})
    cmd->fallthrough();  // accept --config/--set after the subcommand too

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 prints help itself for --help; usage problems exit 1
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config(config_path);
    for (const std::string& o : overrides) apply_override(cfg, o);
    if (cmd_generate->parsed()) return run_generate(cfg);
    if (cmd_train->parsed()) return run_train(cfg);
    if (cmd_eval->parsed()) return run_eval(cfg);
    if (cmd_saliency->parsed()) return run_saliency(cfg);
    std::cerr << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
