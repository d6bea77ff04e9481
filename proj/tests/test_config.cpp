#include <doctest.h>

#include <filesystem>

#include "alfia/config.hpp"
#include "alfia/error.hpp"

using namespace alfia;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("defaults round trip through JSON") {
    RunConfig cfg;
    cfg.model.encoder.vocab_size = 100;
    const json j = to_json(cfg);
    const RunConfig back = run_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.train.learning_rate == 2e-4);
    CHECK(back.train.batch_size == 16);
    CHECK(back.model.fusion.n_fuse == 4);
    CHECK(back.split.train == 0.75);
  }

  TEST_CASE("unknown keys are rejected with their path") {
    CHECK_THROWS_WITH_AS(run_config_from_json(json::parse(R"({"encoder":{"foo":1}})")),
                         "unknown config key 'encoder.foo'", Error);
    CHECK_THROWS_WITH_AS(run_config_from_json(json::parse(R"({"colour":"red"})")),
                         doctest::Contains("'colour'"), Error);
  }

  TEST_CASE("types and invariants are validated up front") {
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train":{"batch_size":2.5}})")), Error);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train":{"mode":"sideways"}})")), Error);
    CHECK_THROWS_AS(run_config_from_json(json::parse(
                        R"({"encoder":{"vocab_size":10,"n_layers":2},"fusion":{"n_fuse":3}})")),
                    Error);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"lora":{"targets":["bogus"]}})")), Error);
  }

  TEST_CASE("seed propagates and relative paths resolve") {
    const RunConfig cfg = run_config_from_json(
        json::parse(R"({"seed":7,"encoder":{"vocab_size":10},"data":{"train":"t.jsonl"}})"),
        "/data/run");
    CHECK(cfg.model.init_seed == 7);
    CHECK(cfg.train.seed == 7);
    CHECK(cfg.split.seed == 7);
    CHECK(cfg.data.train == std::filesystem::path("/data/run/t.jsonl"));
  }

  TEST_CASE("lora can be disabled and snapshots carry the vocabulary") {
    RunConfig cfg =
        run_config_from_json(json::parse(R"({"encoder":{"vocab_size":6},"lora":{"enabled":false}})"));
    CHECK_FALSE(cfg.model.lora.has_value());
    const Vocabulary v({"[PAD]", "[UNK]", "[BOS]", "[EOS]", "x", "y"});
    const Snapshot s = parse_snapshot(make_snapshot(cfg, v));
    CHECK(s.vocab == v);
    CHECK(to_json(s.config) == to_json(cfg));
  }
}
