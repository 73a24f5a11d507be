#include "dcha/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace dcha {
namespace {

struct Entry {
  std::string key;
  std::function<void(const std::string&)> set;  // throws std::exception on bad value
  std::function<std::string()> get;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
std::string show(T v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

long long parse_ll(const std::string& s) {
  std::size_t used = 0;
  long long v = std::stoll(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

std::vector<Entry> registry(RunConfig& c) {
  std::vector<Entry> es;
  auto add = [&](const std::string& key, std::function<void(const std::string&)> set,
                 std::function<std::string()> get) {
    es.push_back({key, std::move(set), std::move(get)});
  };
  auto num = [&](const std::string& key, double& ref) {
    add(
        key,
        [&ref](const std::string& v) {
          std::size_t used = 0;
          ref = std::stod(v, &used);
          if (used != v.size()) throw std::invalid_argument("trailing characters");
        },
        [&ref] { return show(ref); });
  };
  auto integer = [&](const std::string& key, int& ref) {
    add(
        key, [&ref](const std::string& v) { ref = int(parse_ll(v)); },
        [&ref] { return show(ref); });
  };
  auto seed = [&](const std::string& key, std::uint64_t& ref) {
    add(
        key,
        [&ref](const std::string& v) {
          std::size_t used = 0;
          ref = std::stoull(v, &used);
          if (used != v.size()) throw std::invalid_argument("trailing characters");
        },
        [&ref] { return show(ref); });
  };
  auto flag = [&](const std::string& key, bool& ref) {
    add(
        key,
        [&ref](const std::string& v) {
          if (v == "true" || v == "1")
            ref = true;
          else if (v == "false" || v == "0")
            ref = false;
          else
            throw std::invalid_argument("expected true/false");
        },
        [&ref] { return std::string(ref ? "true" : "false"); });
  };
  auto ints = [&](const std::string& key, std::vector<int>& ref) {
    add(
        key,
        [&ref](const std::string& v) {
          std::vector<int> out;
          std::istringstream is(v);
          std::string part;
          while (std::getline(is, part, ',')) out.push_back(int(parse_ll(trim(part))));
          if (out.empty()) throw std::invalid_argument("empty list");
          ref = out;
        },
        [&ref] {
          std::string s;
          for (std::size_t i = 0; i < ref.size(); ++i) s += (i ? "," : "") + show(ref[i]);
          return s;
        });
  };
  auto str = [&](const std::string& key, std::string& ref) {
    add(
        key, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; });
  };

  integer("phantom.grid_n", c.phantom.grid_n);
  num("phantom.radius", c.phantom.radius);
  num("phantom.lesion_prob", c.phantom.lesion_prob);
  num("phantom.lesion_radius_min", c.phantom.lesion_radius_min);
  num("phantom.lesion_radius_max", c.phantom.lesion_radius_max);
  num("phantom.lesion_intensity", c.phantom.lesion_intensity);
  num("phantom.background_texture_scale", c.phantom.background_texture_scale);
  num("phantom.distractor_prob", c.phantom.distractor_prob);
  integer("phantom.misalign_shift_max", c.phantom.misalign_shift_max);
  integer("phantom.image_size", c.phantom.image_size);
  seed("phantom.seed", c.phantom.seed);
  integer("phantom.count", c.phantom_count);

  integer("backbone.stem_channels", c.model.backbone.stem_channels);
  integer("backbone.stem_kernel", c.model.backbone.stem_kernel);
  integer("backbone.stem_stride", c.model.backbone.stem_stride);
  ints("backbone.stage_channel_multipliers", c.model.backbone.stage_channel_multipliers);
  ints("backbone.bottlenecks_per_stage", c.model.backbone.bottlenecks_per_stage);
  ints("backbone.stage_strides", c.model.backbone.stage_strides);
  integer("backbone.feature_channels", c.model.backbone.feature_channels);

  integer("model.attention_k", c.model.attention_k);
  flag("model.use_local", c.model.use_local);
  flag("model.use_nonlocal", c.model.use_nonlocal);
  flag("model.use_corr", c.model.use_corr);
  seed("model.init_seed", c.model.init_seed);

  num("train.lr0", c.train.lr0);
  num("train.lr_decay", c.train.lr_decay);
  integer("train.epochs", c.train.epochs);
  integer("train.batch_size", c.train.batch_size);
  seed("train.seed", c.train.seed);
  num("train.beta1", c.train.beta1);
  num("train.beta2", c.train.beta2);
  num("train.eps", c.train.eps);
  flag("train.augment", c.train.augment);
  num("train.rotation_max_deg", c.train.augment_cfg.rotation_max_deg);
  num("train.hflip_prob", c.train.augment_cfg.hflip_prob);

  flag("preprocess.enabled", c.preprocess_enabled);
  integer("preprocess.target_size", c.preprocess.target_size);
  num("preprocess.bg_threshold_quantile", c.preprocess.bg_threshold_quantile);
  num("preprocess.bg_intensity_min", c.preprocess.bg_intensity_min);
  num("preprocess.fit_residual_max", c.preprocess.fit_residual_max);

  str("paths.data_dir", c.paths.data_dir);
  str("paths.eval_dir", c.paths.eval_dir);
  str("paths.run_dir", c.paths.run_dir);

  std::sort(es.begin(), es.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
  return es;
}

void assign(RunConfig& cfg, const std::string& key, const std::string& value,
            const std::string& where) {
  auto es = registry(cfg);
  auto it = std::find_if(es.begin(), es.end(), [&](const Entry& e) { return e.key == key; });
  if (it == es.end()) fail("config", where + ": unknown key '" + key + "'");
  try {
    it->set(value);
  } catch (const std::exception&) {
    fail("config", where + ": malformed value '" + value + "' for key '" + key + "'");
  }
}

}  // namespace

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), "config", "cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(lineno);
    std::size_t eq = line.find('=');
    require(eq != std::string::npos, "config", where + ": expected 'key = value'");
    assign(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  require(eq != std::string::npos, "config",
          "override '" + assignment + "' must look like key=value");
  assign(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)),
         "override '" + assignment + "'");
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : registry(const_cast<RunConfig&>(cfg)))
    out += e.key + " = " + e.get() + "\n";
  return out;
}

void write_effective_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "config", "cannot write effective config: " + path);
  os << render_config(cfg);
  require(bool(os), "config", "write failure on effective config: " + path);
}

}  // namespace dcha
