#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "cfrg/config.hpp"
#include "cfrg/image.hpp"
#include "cfrg/metrics.hpp"
#include "test_support.hpp"
#include "toy_config.hpp"

using namespace cfrg;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CFRG_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

int run_mkdata(const std::string& args) {
  const std::string cmd = std::string(CFRG_MKDATA_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("cli exit codes") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);           // missing subcommand
  CHECK(run_cli("bogus-subcmd") == 2);

  test::TempDir tmp("cliexit");
  {
    std::ofstream f(tmp.path() / "bad.json");
    f << R"({"no_such_key": 1})";
  }
  CHECK(run_cli("train --config " + (tmp.path() / "bad.json").string()) == 2);

  // valid config pointing at a missing dataset: data error
  {
    std::ofstream f(tmp.path() / "good.json");
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.schedule.milestones = {};
    cfg.resolution = 32;
    cfg.desk_scale = true;
    cfg.categories = {"widget"};
    cfg.data_root = (tmp.path() / "missing_data").string();
    cfg.output_dir = (tmp.path() / "runs").string();
    f << cfg.to_json().dump();
  }
  CHECK(run_cli("train --config " + (tmp.path() / "good.json").string()) == 3);
}

TEST_CASE("preprocess writes tiles and a manifest") {
  test::TempDir tmp("clipre");
  const auto in = tmp.path() / "in";
  std::filesystem::create_directories(in / "sub");
  write_image(in / "sub" / "wide.png", Image(40, 96, 3, 0.5));
  write_image(in / "small.png", Image(40, 40, 3, 0.25));

  const auto out = tmp.path() / "out";
  REQUIRE(run_cli("preprocess --input " + in.string() + " --output " + out.string() +
                  " --max-side 64 --overlap 0.25") == 0);

  std::ifstream mf(out / "manifest.json");
  REQUIRE(mf.good());
  nlohmann::json manifest;
  mf >> manifest;

  // the 40x96 image tiles at x offsets {0, 32 (edge-clamped from 48)}; the
  // 40x40 image passes through
  int wide_tiles = 0, small_tiles = 0;
  for (const auto& e : manifest) {
    if (e.at("source") == "sub/wide.png") {
      ++wide_tiles;
      CHECK(e.at("height") == 40);
      CHECK(e.at("width") == 64);
      CHECK(std::filesystem::exists(out / e.at("tile").get<std::string>()));
    }
    if (e.at("source") == "small.png") {
      ++small_tiles;
      CHECK(e.at("y") == 0);
      CHECK(e.at("x") == 0);
      CHECK(e.at("height") == 40);
      CHECK(e.at("width") == 40);
    }
  }
  CHECK(wide_tiles == 2);
  CHECK(small_tiles == 1);
}

TEST_CASE("train, infer and eval round-trip through the cli surfaces") {
  test::TempDir tmp("cliflow");
  REQUIRE(run_mkdata("--data " + (tmp.path() / "data").string() + " --textures " +
                     (tmp.path() / "tex").string() + " --train 8 --test-good 3 --test-defect 3 " +
                     "--size 32 --seed 3") == 0);

  TrainConfig cfg;
  cfg.resolution = 32;
  cfg.seed = 1;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.categories = {"widget"};
  cfg.data_root = (tmp.path() / "data").string();
  cfg.output_dir = (tmp.path() / "runs").string();
  cfg.desk_scale = true;
  cfg.schedule.milestones = {};
  cfg.seg.width = 8;
  cfg.synth.texture_root = (tmp.path() / "tex").string();
  const auto cfg_path = tmp.path() / "config.json";
  {
    std::ofstream f(cfg_path);
    f << cfg.to_json().dump(2);
  }

  REQUIRE(run_cli("train --config " + cfg_path.string()) == 0);
  CHECK(std::filesystem::exists(tmp.path() / "runs" / "widget" / "checkpoint_latest.cfrgt"));
  CHECK(std::filesystem::exists(tmp.path() / "runs" / "widget" / "loss_log.jsonl"));

  const auto preds = tmp.path() / "preds";
  REQUIRE(run_cli("infer --config " + cfg_path.string() + " --output " + preds.string()) == 0);
  CHECK(std::filesystem::exists(preds / "scores.csv"));
  CHECK(std::filesystem::exists(preds / "widget_test_good_000.png"));
  CHECK(std::filesystem::exists(preds / "widget_test_good_000.f32"));
  CHECK(std::filesystem::exists(preds / "widget_test_good_000.json"));
  CHECK(std::filesystem::exists(preds / "widget_test_blob_000.f32"));

  // sidecar carries the shape; raw file is float32 row-major of that shape
  {
    std::ifstream sf(preds / "widget_test_good_000.json");
    nlohmann::json sidecar;
    sf >> sidecar;
    CHECK(sidecar.at("height") == 32);
    CHECK(sidecar.at("width") == 32);
    CHECK(sidecar.at("dtype") == "float32");
    CHECK(std::filesystem::file_size(preds / "widget_test_good_000.f32") == 32 * 32 * 4);
  }

  REQUIRE(run_cli("eval --config " + cfg_path.string()) == 0);
  REQUIRE(std::filesystem::exists(tmp.path() / "runs" / "metrics_widget.json"));
  REQUIRE(std::filesystem::exists(tmp.path() / "runs" / "metrics.csv"));

  MetricsReport from_model;
  {
    std::ifstream f(tmp.path() / "runs" / "metrics_widget.json");
    nlohmann::json j;
    f >> j;
    from_model = MetricsReport::from_json(j);
  }

  // evaluating the float32 dumps reproduces the model-path metrics
  REQUIRE(run_cli("eval --config " + cfg_path.string() + " --predictions " + preds.string()) == 0);
  MetricsReport from_dumps;
  {
    std::ifstream f(tmp.path() / "runs" / "metrics_widget.json");
    nlohmann::json j;
    f >> j;
    from_dumps = MetricsReport::from_json(j);
  }
  CHECK(std::abs(from_model.i_auroc - from_dumps.i_auroc) < 1e-3);
  CHECK(std::abs(from_model.p_auroc - from_dumps.p_auroc) < 1e-3);
  CHECK(std::abs(from_model.p_pro - from_dumps.p_pro) < 1e-3);
  CHECK(std::abs(from_model.ap - from_dumps.ap) < 1e-3);

  // eval with a foreign checkpoint hash: error without the proceed flag
  TrainConfig other = cfg;
  other.seed = 99;
  const auto cfg2 = tmp.path() / "config2.json";
  {
    std::ofstream f(cfg2);
    f << other.to_json().dump(2);
  }
  CHECK(run_cli("eval --config " + cfg2.string()) == 2);
  CHECK(run_cli("eval --config " + cfg2.string() + " --allow-hash-mismatch") == 0);
}

TEST_CASE("cli seed and category overrides take effect") {
  test::TempDir tmp("cliover");
  REQUIRE(run_mkdata("--data " + (tmp.path() / "data").string() + " --textures " +
                     (tmp.path() / "tex").string() +
                     " --train 6 --test-good 2 --test-defect 2 --size 32") == 0);

  TrainConfig cfg;
  cfg.resolution = 32;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.categories = {"widget"};
  cfg.data_root = (tmp.path() / "data").string();
  cfg.output_dir = (tmp.path() / "runs").string();
  cfg.desk_scale = true;
  cfg.schedule.milestones = {};
  cfg.seg.width = 8;
  cfg.synth.texture_root = (tmp.path() / "tex").string();
  const auto cfg_path = tmp.path() / "config.json";
  {
    std::ofstream f(cfg_path);
    f << cfg.to_json().dump(2);
  }
  // --category with an unknown name must fail with a data error
  CHECK(run_cli("train --config " + cfg_path.string() + " --category nope") == 3);
  // --seed override trains fine
  CHECK(run_cli("train --config " + cfg_path.string() + " --seed 123") == 0);
}
