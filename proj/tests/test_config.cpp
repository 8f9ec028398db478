#include <doctest.h>

#include <fstream>

#include "cfrg/checkpoint.hpp"
#include "cfrg/config.hpp"
#include "cfrg/tensorfile.hpp"
#include "test_support.hpp"

using namespace cfrg;

TEST_CASE("config round-trips through json and hashes canonically") {
  TrainConfig cfg;
  cfg.categories = {"widget"};
  cfg.seed = 42;
  cfg.ablation.wp = true;
  cfg.loss.lambda_rec = 0.1;
  TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.hash() == cfg.hash());

  TrainConfig other = cfg;
  other.seed = 43;
  CHECK(other.hash() != cfg.hash());
}

TEST_CASE("unknown config keys are rejected by name") {
  nlohmann::json j = TrainConfig{}.to_json();
  j["optimizer"]["learning_rate_typo"] = 1.0;
  CHECK_THROWS_WITH_AS(TrainConfig::from_json(j),
                       doctest::Contains("optimizer.learning_rate_typo"), ConfigError);

  nlohmann::json top = TrainConfig{}.to_json();
  top["unknown_top_key"] = 5;
  CHECK_THROWS_WITH_AS(TrainConfig::from_json(top), doctest::Contains("unknown_top_key"),
                       ConfigError);
}

TEST_CASE("every spec-named config key is accepted") {
  nlohmann::json j = {
      {"resolution", 64},
      {"seed", 9},
      {"epochs", 50},
      {"batch_size", 32},
      {"categories", {"a", "b"}},
      {"desk_scale", true},
      {"train_mode", "alternating"},
      {"optimizer", {{"lr", 5e-4}, {"weight_decay", 1e-5}}},
      {"schedule", {{"milestones", {40, 45}}, {"gamma", 0.2}}},
      {"loss", {{"lambda_dis", 1.0}, {"lambda_rec", 1.0}, {"lambda_bce", 1.0}, {"detach_hints", true}}},
      {"distill", {{"push_enabled", true}, {"clamp_push", false}}},
      {"ablation", {{"wrc", false}, {"ws", false}, {"wp", true}, {"wc", false}, {"wh", false}}},
      {"synth", {{"threshold", 0.5}, {"synth_probability", 0.5}}},
      {"infer", {{"sigma", 4.0}, {"image_score", "topk_mean"}, {"top_k", 50}}},
      {"metrics", {{"pro_fpr_limit", 0.3}, {"pro_max_thresholds", 5000}}},
      {"seg", {{"width", 64}}},
  };
  TrainConfig cfg = TrainConfig::from_json(j);
  CHECK(cfg.resolution == 64);
  CHECK(cfg.train_mode == "alternating");
  CHECK(cfg.loss.detach_hints);
  CHECK(cfg.ablation.wp);
}

TEST_CASE("config invariants") {
  TrainConfig cfg;

  SUBCASE("epochs must cover the schedule milestones") {
    cfg.epochs = 30;  // milestones default to 40/45
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("batch size at least one") {
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("synth threshold in (0,1)") {
    cfg.synth.threshold = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("blend range inside (0,1]") {
    cfg.synth.blend_beta_min = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("resolution multiple of 32") {
    cfg.resolution = 100;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("learning-rate schedule decays by 0.2 at the milestones") {
  TrainConfig cfg;  // lr 5e-4, milestones {40, 45}
  CHECK(cfg.lr_at_epoch(1) == doctest::Approx(5e-4));
  CHECK(cfg.lr_at_epoch(40) == doctest::Approx(5e-4));
  CHECK(cfg.lr_at_epoch(41) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(cfg.lr_at_epoch(45) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(cfg.lr_at_epoch(46) == doctest::Approx(2e-5).epsilon(1e-12));
  CHECK(cfg.lr_at_epoch(50) == doctest::Approx(2e-5).epsilon(1e-12));
}

TEST_CASE("config file loading surfaces parse and key errors") {
  test::TempDir tmp("cfg");
  {
    std::ofstream f(tmp.path() / "bad.json");
    f << "{ not json";
  }
  CHECK_THROWS_AS(TrainConfig::load_file(tmp.path() / "bad.json"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::load_file(tmp.path() / "missing.json"), ConfigError);

  {
    std::ofstream f(tmp.path() / "good.json");
    f << R"({"resolution": 64, "epochs": 5, "schedule": {"milestones": [4]}})";
  }
  TrainConfig cfg = TrainConfig::load_file(tmp.path() / "good.json");
  CHECK(cfg.resolution == 64);
  CHECK(cfg.epochs == 5);
}

TEST_CASE("tensor files and checkpoints round-trip") {
  test::TempDir tmp("ckpt");
  RngStream rng(3);

  SUBCASE("tensor file") {
    std::vector<std::pair<std::string, Tensor>> tensors = {
        {"a", Tensor::randn({2, 3}, rng)}, {"b", Tensor::randn({4}, rng)}};
    write_tensor_file(tmp.path() / "t.cfrgt", {{"note", "x"}}, tensors);
    TensorFile tf = read_tensor_file(tmp.path() / "t.cfrgt");
    REQUIRE(tf.tensors.size() == 2);
    CHECK(tf.meta.at("note") == "x");
    CHECK(tf.tensors[0].first == "a");
    CHECK(tf.tensors[0].second.data() == tensors[0].second.data());
    CHECK(tf.tensors[1].second.data() == tensors[1].second.data());
    CHECK_THROWS_AS(read_tensor_file(tmp.path() / "none.cfrgt"), DataError);
  }

  SUBCASE("checkpoint") {
    Checkpoint ckpt;
    ckpt.epoch = 7;
    ckpt.config_hash = 12345678901234567ull;
    ckpt.optimizer_step = 99;
    ckpt.model_state = {{"student.w", Tensor::randn({3, 3}, rng)}};
    ckpt.optimizer_state = {{"m.student.w", Tensor::randn({3, 3}, rng)},
                            {"v.student.w", Tensor::randn({3, 3}, rng)}};
    save_checkpoint(tmp.path() / "c.cfrgt", ckpt);
    Checkpoint back = load_checkpoint(tmp.path() / "c.cfrgt");
    CHECK(back.epoch == 7);
    CHECK(back.config_hash == ckpt.config_hash);
    CHECK(back.optimizer_step == 99);
    REQUIRE(back.model_state.size() == 1);
    CHECK(back.model_state[0].first == "student.w");
    CHECK(back.model_state[0].second.data() == ckpt.model_state[0].second.data());
    REQUIRE(back.optimizer_state.size() == 2);
  }
}
