#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dcha/config.hpp"

using namespace dcha;

namespace {

std::string write_tmp(const std::string& name, const std::string& text) {
  std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream os(path, std::ios::trunc);
  REQUIRE(bool(os));
  os << text;
  return path;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parse_config") {
  SUBCASE("empty file yields all defaults") {
    RunConfig cfg = parse_config(write_tmp("dcha_cfg_empty.cfg", ""));
    RunConfig def;
    CHECK(render_config(cfg) == render_config(def));
    CHECK(cfg.train.lr0 == 5e-5);
    CHECK(cfg.phantom.image_size == 64);
    CHECK(cfg.phantom_count == 200);
    CHECK(cfg.model.use_corr);
    CHECK_FALSE(cfg.preprocess_enabled);
  }
  SUBCASE("values, comments, and blank lines") {
    RunConfig cfg = parse_config(write_tmp("dcha_cfg_vals.cfg",
                                           "# experiment\n"
                                           "\n"
                                           "train.lr0 = 5e-5\n"
                                           "train.epochs = 3   # short run\n"
                                           "model.use_local = false\n"
                                           "backbone.stage_strides = 2, 1, 2\n"
                                           "paths.run_dir = /tmp/exp1\n"));
    CHECK(cfg.train.lr0 == 5e-5);
    CHECK(cfg.train.epochs == 3);
    CHECK_FALSE(cfg.model.use_local);
    CHECK(cfg.model.backbone.stage_strides == std::vector<int>{2, 1, 2});
    CHECK(cfg.paths.run_dir == "/tmp/exp1");
  }
  SUBCASE("unknown key is rejected with its line number") {
    std::string path = write_tmp("dcha_cfg_bogus.cfg", "train.epochs = 2\nbogus.key = 1\n");
    std::string msg = error_of([&] { parse_config(path); });
    CHECK(msg.find(":2") != std::string::npos);
    CHECK(msg.find("bogus.key") != std::string::npos);
  }
  SUBCASE("malformed value is rejected with its line number") {
    std::string path = write_tmp("dcha_cfg_badval.cfg", "\ntrain.lr0 = fast\n");
    std::string msg = error_of([&] { parse_config(path); });
    CHECK(msg.find(":2") != std::string::npos);
    CHECK(msg.find("fast") != std::string::npos);
  }
  SUBCASE("line without an equals sign is rejected") {
    std::string path = write_tmp("dcha_cfg_noeq.cfg", "train.lr0 5e-5\n");
    CHECK_THROWS(parse_config(path));
  }
  SUBCASE("missing file is an error naming the path") {
    std::string msg = error_of([&] { parse_config("/nonexistent/dcha.cfg"); });
    CHECK(msg.find("/nonexistent/dcha.cfg") != std::string::npos);
  }
  SUBCASE("boolean accepts 1/0 and rejects other words") {
    RunConfig cfg = parse_config(write_tmp("dcha_cfg_bool.cfg", "train.augment = 1\n"));
    CHECK(cfg.train.augment);
    CHECK_THROWS(parse_config(write_tmp("dcha_cfg_bool2.cfg", "train.augment = yes\n")));
  }
}

TEST_CASE("apply_override") {
  RunConfig cfg;
  apply_override(cfg, "train.batch_size=8");
  apply_override(cfg, "phantom.seed = 99");
  CHECK(cfg.train.batch_size == 8);
  CHECK(cfg.phantom.seed == 99);
  CHECK_THROWS(apply_override(cfg, "train.batch_size"));
  CHECK_THROWS(apply_override(cfg, "nope=1"));
}

TEST_CASE("render_config round trips through the parser") {
  RunConfig cfg;
  apply_override(cfg, "train.lr0=0.00123");
  apply_override(cfg, "backbone.bottlenecks_per_stage=3,4,6");
  apply_override(cfg, "model.use_nonlocal=false");
  apply_override(cfg, "paths.eval_dir=/tmp/eval");
  std::string path = write_tmp("dcha_cfg_round.cfg", render_config(cfg));
  RunConfig back = parse_config(path);
  CHECK(render_config(back) == render_config(cfg));

  write_effective_config(path + ".eff", cfg);
  std::ifstream is(path + ".eff");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(text == render_config(cfg));
}
