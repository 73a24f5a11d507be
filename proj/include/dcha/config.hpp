#pragma once

#include "dcha/model.hpp"
#include "dcha/preprocess.hpp"
#include "dcha/train.hpp"

namespace dcha {

// Everything a run needs, merged from defaults, a config file, and --set
// overrides. Keys are dotted, one `key = value` per line, '#' comments.
struct RunConfig {
  PhantomConfig phantom;
  int phantom_count = 200;  // cases per generated dataset
  ModelConfig model;
  TrainConfig train;  // checkpoint_dir is filled from paths.run_dir
  PreprocessConfig preprocess;
  bool preprocess_enabled = false;

  struct Paths {
    std::string data_dir = "data";
    std::string eval_dir;  // empty: evaluate on data_dir
    std::string run_dir = "runs";
  } paths;
};

RunConfig parse_config(const std::string& path);

// Applies one `key=value` override on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Full effective config as parseable `key = value` text, keys sorted.
std::string render_config(const RunConfig& cfg);
void write_effective_config(const std::string& path, const RunConfig& cfg);

}  // namespace dcha
