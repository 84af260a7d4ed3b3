// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "dftr/run_config.hpp"
#include "dftr/verify.hpp"

using namespace dftr;

namespace {

RunConfig small_run(char ablation) {
  RunConfig cfg;
  cfg.model = verify::tiny_config();
  cfg.model.decoder = ablation_flags(ablation, cfg.model.decoder);
  return cfg;
}

}  // namespace

TEST_SUITE("run_config") {

TEST_CASE("resolved text round trip") {
  RunConfig cfg = small_run('c');
  cfg.train.grad_clip = 2;
  cfg.train.max_lr_other = 0.0125;
  cfg.augment.scales = {0.5, 1.0};
  const std::string text = resolved_text(cfg);
  RunConfig back;
  apply_config_text(back, text);
  CHECK(resolved_text(back) == text);
  CHECK(config_digest(back) == config_digest(cfg));
  CHECK(config_digest(small_run('d')) != config_digest(cfg));
  CHECK(config_digest(cfg).size() == 64);
}

TEST_CASE("comments, overrides and errors") {
  RunConfig cfg;
  apply_config_text(cfg, "# comment\ntrain.epochs = 7  # trailing\n\n");
  CHECK(cfg.train.epochs == 7);
  apply_override(cfg, "train.batch_size=3");
  CHECK(cfg.train.batch_size == 3);
  apply_override(cfg, "decoder.use_mls=false");
  CHECK_FALSE(cfg.model.decoder.use_mls);
  CHECK_THROWS_AS(apply_override(cfg, "train.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.epochs=seven"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.epochs"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(cfg, "encoder.depths = 1,2\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("validation") {
  RunConfig cfg;
  cfg.validate();
  cfg.train.grad_clip = -1;
  CHECK_THROWS(cfg.validate());
  cfg.train.grad_clip = 0;
  cfg.model.decoder.use_depth_stream = false;
  CHECK_THROWS(cfg.validate());
}

}  // TEST_SUITE
