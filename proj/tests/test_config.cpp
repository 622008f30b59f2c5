#include <doctest.h>

#include "pex/config.hpp"

using namespace pex;

TEST_CASE("config parsing") {
  const char* text = R"(
# run settings
[run]
seed = 42
budget = 1.5e4

[model]
backend = "builtin:keyword-sentiment"   # trailing comment
probabilities = true

[metrics]
ks = [10, 20, 30]
label = "a # not a comment"
)";
  auto cfg = Config::parse_string(text);
  CHECK(cfg.get_int("run.seed", 0) == 42);
  CHECK(cfg.get_double("run.budget", 0) == doctest::Approx(15000.0));
  CHECK(cfg.get_string("model.backend", "") == "builtin:keyword-sentiment");
  CHECK(cfg.get_bool("model.probabilities", false));
  CHECK(cfg.get_int_list("metrics.ks", {}) ==
        std::vector<std::int64_t>{10, 20, 30});
  CHECK(cfg.get_string("metrics.label", "") == "a # not a comment");

  // Defaults and missing keys.
  CHECK(cfg.get_int("lime.n_samples", 1000) == 1000);
  CHECK_FALSE(cfg.has("lime.n_samples"));
  CHECK_THROWS_AS(cfg.require_string("data.instances"), ConfigError);

  // Type errors.
  CHECK_THROWS_AS(cfg.get_int("model.backend", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("run.seed", false), ConfigError);
}

TEST_CASE("config parse errors carry locations") {
  CHECK_THROWS_WITH_AS(Config::parse_string("key value", "f.toml"),
                       doctest::Contains("f.toml:1"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("[sec\nk = 1"), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("k = "), ConfigError);
  CHECK_THROWS_AS(Config::parse_string("k = [1, 2"), ConfigError);
}

TEST_CASE("config echo is deterministic and typed") {
  auto cfg = Config::parse_string("[a]\nx = 1\ny = \"s\"\nz = true\nw = 0.5\n");
  auto j = cfg.to_json();
  CHECK(j["a.x"] == 1);
  CHECK(j["a.y"] == "s");
  CHECK(j["a.z"] == true);
  CHECK(j["a.w"] == 0.5);
  CHECK(cfg.to_json().dump() == j.dump());
}
