#include "doctest.h"

#include "aoa/config.hpp"
#include "aoa/errors.hpp"

using namespace aoa;

TEST_SUITE("config") {
  TEST_CASE("defaults dump round trips") {
    RunConfig c;
    const std::string dump = dump_config(c);
    CHECK(dump.find("train.lr_xe = 0.00020000000000000001") != std::string::npos);
    CHECK(dump.find("train.ss_cap = 0.5") != std::string::npos);
    CHECK(dump.find("model.decoder = dec-aoa") != std::string::npos);
    CHECK(dump_config(parse_config(dump)) == dump);
  }

  TEST_CASE("values, comments and overrides") {
    RunConfig c = parse_config("# comment\nseed = 9\nmodel.encoder = base  # inline\n\ntrain.lr_xe=1e-3\n");
    CHECK(c.seed == 9);
    CHECK(c.train.seed == 9);
    CHECK(c.model.encoder == EncoderVariant::Base);
    CHECK(c.train.lr_xe == 1e-3);
    set_config_value(c, "model.experimental", "true");
    CHECK(c.model.experimental);
  }

  TEST_CASE("errors name the line") {
    try {
      parse_config("seed = 1\nbogus = 2\n");
      FAIL("expected error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("train.batch_size = ten"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.batch_size"), ConfigError);
    CHECK_THROWS_AS(parse_config("model.experimental = maybe"), ConfigError);
    CHECK_THROWS_AS(parse_config("model.decoder = dec-gru"), ConfigError);
  }
}
