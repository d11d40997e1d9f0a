#include "doctest.h"
#include "helpers.hpp"

#include "fbgrpo/sft.hpp"
#include "fbgrpo/teacher.hpp"

using namespace fbgrpo;

TEST_CASE("SFT dataset pairs every record with its feedback variants") {
  const auto corpus = scenario::generate_corpus(12, scenario::FamilyMix::uniform(), 2);
  sft::SftConfig cfg;
  const auto data = sft::build_dataset(corpus, cfg, 9);
  const std::size_t per = 1 + static_cast<std::size_t>(cfg.feedback_pairs_per_record);
  REQUIRE(data.size() == corpus.size() * per);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto gt = response::encode_gt(corpus[i]);
    CHECK(data[i * per].tokens == gt);
    CHECK(data[i * per].feat.tail(features::kFeedbackDim).norm() == 0.0);
    for (std::size_t j = 1; j < per; ++j) {
      CHECK(data[i * per + j].tokens == gt);
      CHECK(data[i * per + j].feat.head(features::kBaseDim) == data[i * per].feat.head(features::kBaseDim));
      CHECK(data[i * per + j].feat.tail(features::kFeedbackDim).norm() > 0.0);
    }
  }
  const auto again = sft::build_dataset(corpus, cfg, 9);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(again[i].feat == data[i].feat);
}

TEST_CASE("perturbed responses are well formed and usually differ from the ground truth") {
  const auto corpus = scenario::generate_corpus(30, scenario::FamilyMix::uniform(), 8);
  Rng rng(5);
  int differ = 0;
  for (const auto& r : corpus) {
    const auto t = sft::perturbed_response(r, rng);
    const auto p = response::parse(t);
    CHECK(p.well_formed_structure);
    CHECK(p.well_formed_trajectory);
    if (t != response::encode_gt(r)) ++differ;
  }
  CHECK(differ >= 25);
}

TEST_CASE("SFT lowers the loss and freezes the reference") {
  const auto corpus = scenario::generate_corpus(12, scenario::FamilyMix::uniform(), 4);
  sft::SftConfig cfg;
  cfg.epochs = 60;
  cfg.feedback_pairs_per_record = 1;
  policy::PolicyParams params{policy::init_params(1), {}};
  std::vector<sft::EpochLog> seen;
  const auto logs = sft::train_sft(params, corpus, cfg, 3, [&](const sft::EpochLog& e) { seen.push_back(e); });
  REQUIRE(logs.size() == 60);
  CHECK(seen.size() == logs.size());
  CHECK(logs.back().mean_loss < 0.5 * logs.front().mean_loss);
  CHECK(params.has_reference());
  CHECK(params.reference == params.theta);

  policy::PolicyParams again{policy::init_params(1), {}};
  sft::train_sft(again, corpus, cfg, 3);
  CHECK(again.theta == params.theta);
}

TEST_CASE("SFT config validation") {
  sft::SftConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.s = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  policy::PolicyParams params{policy::init_params(1), {}};
  CHECK_THROWS_AS(sft::train_sft(params, {}, sft::SftConfig{}, 1), std::invalid_argument);
}
