#include <algorithm>
#include <set>

#include "aggloc/experiment.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace aggloc;

namespace {

const char* kTinyConfig = R"({
  "dataset": {"synth": {
    "n_users": 24, "n_rois": 5, "n_slots": 24,
    "frac_commuter": 0.0, "frac_roamer": 1.0, "frac_sparse": 0.0,
    "roamer_active_prob": 0.4, "seed": 4
  }},
  "game": {
    "m": 4, "t_obs": [0, 12], "t_inf": [12, 24],
    "n_samples": 20, "train_fraction": 0.8,
    "pca_variance_target": 0.99, "pca_max_components": 100,
    "lr": {"learning_rate": 0.1, "l2_weight": 1.0,
           "max_epochs": 300, "tolerance": 1e-6}
  },
  "prior": {"type": "subset_locations", "alpha": 1.0},
  "victims": {"per_tertile": 1},
  "defenses": [
    {"mechanism": "identity"},
    {"mechanism": "ssc", "k": 2},
    {"mechanism": "tg", "coarse_slot_seconds": 7200}
  ],
  "evaluation": {"gamma": 1.0, "top_fraction": 0.25},
  "seed": 99
})";

}  // namespace

TEST_CASE("experiment config parses every section") {
  const ExperimentConfig cfg = experiment_config_from_json(kTinyConfig);
  const auto* synth = std::get_if<SynthConfig>(&cfg.source);
  REQUIRE(synth != nullptr);
  CHECK(synth->n_users == 24);
  CHECK(cfg.game.m == 4);
  CHECK(cfg.game.t_obs == SlotRange{0, 12});
  CHECK(cfg.game.t_inf == SlotRange{12, 24});
  CHECK(cfg.game.lr.max_epochs == 300);
  CHECK(cfg.game.seed == 99);  // experiment seed drives the game
  const auto* prior = std::get_if<SubsetLocations>(&cfg.prior);
  REQUIRE(prior != nullptr);
  CHECK(prior->alpha == 1.0);
  CHECK(cfg.victims.per_tertile == 1);
  REQUIRE(cfg.defenses.size() == 3);
  CHECK(std::holds_alternative<IdentityDefense>(cfg.defenses[0]));
  CHECK(std::get<SscConfig>(cfg.defenses[1]).k == 2);
  CHECK(cfg.eval.top_fraction == 0.25);
  CHECK(cfg.seed == 99);
}

TEST_CASE("experiment config: ingest source and error cases") {
  const char* text = R"({
    "dataset": {"ingest": {
      "csv_path": "/no/such/file.csv",
      "discretization": {"slot_seconds": 3600, "time_origin": 0,
                         "n_slots": 8, "roi_mode": "explicit-id"}
    }},
    "game": {"m": 2, "t_obs": [0, 4], "t_inf": [4, 8],
             "n_samples": 4, "train_fraction": 0.5,
             "pca_variance_target": 0.9, "pca_max_components": 10,
             "lr": {"learning_rate": 0.1, "l2_weight": 1.0,
                    "max_epochs": 10, "tolerance": 1e-4}},
    "prior": {"type": "same_groups", "beta": 3},
    "victims": {"ids": ["u1"]},
    "defenses": [{"mechanism": "identity"}],
    "seed": 1
  })";
  const ExperimentConfig cfg = experiment_config_from_json(text);
  const auto* ing = std::get_if<IngestSource>(&cfg.source);
  REQUIRE(ing != nullptr);
  CHECK(ing->disc.n_slots == 8);
  CHECK(std::get<SameGroups>(cfg.prior).beta == 3);
  CHECK_THROWS_AS(load_dataset(cfg), std::runtime_error);

  CHECK_THROWS_AS(experiment_config_from_json(R"({"dataset": {}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(experiment_config_from_json("not json"), nlohmann::json::exception);
}

TEST_CASE("select_victims: explicit ids validated, per-tertile draws seeded") {
  const ExperimentConfig cfg = experiment_config_from_json(kTinyConfig);
  const Dataset ds = load_dataset(cfg);

  VictimSelection explicit_sel;
  explicit_sel.ids = {"u0003", "u0001"};
  CHECK(select_victims(ds, explicit_sel, 1) == explicit_sel.ids);
  explicit_sel.ids = {"nobody"};
  CHECK_THROWS_AS(select_victims(ds, explicit_sel, 1), std::invalid_argument);

  VictimSelection per_tertile;
  per_tertile.per_tertile = 2;
  const auto a = select_victims(ds, per_tertile, 5);
  const auto b = select_victims(ds, per_tertile, 5);
  const auto c = select_victims(ds, per_tertile, 6);
  CHECK(a == b);
  CHECK(a.size() == 6);
  CHECK(std::set<std::string>(a.begin(), a.end()).size() == 6);
  CHECK(a != c);

  // Each pick belongs to the tertile it was drawn for.
  const auto tert = mobility_tertiles(ds);
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < 2; ++i) {
      CHECK(std::count(tert[g].begin(), tert[g].end(), a[g * 2 + i]) == 1);
    }
  }
}

TEST_CASE("sweep: identity point has zero gain and zero loss; grid is sound") {
  const ExperimentConfig cfg = experiment_config_from_json(kTinyConfig);
  const Dataset ds = load_dataset(cfg);
  const auto records = sweep(ds, cfg);
  REQUIRE(records.size() == 3);

  const TradeoffRecord& ident = records[0];
  for (double pg : ident.pg) CHECK(pg == 0.0);
  CHECK(ident.pg_mean == 0.0);
  CHECK(ident.utility.mre == 0.0);
  CHECK(*ident.utility.loss_f1() == 0.0);
  CHECK(ident.utility.js == 0.0);

  for (const auto& rec : records) {
    CHECK(rec.pg.size() == 3);
    for (double pg : rec.pg) {
      CHECK(pg >= 0.0);
      CHECK(pg <= 1.0);
    }
    CHECK(rec.pg_q1 <= rec.pg_median);
    CHECK(rec.pg_median <= rec.pg_q3);
  }
  // Suppressing small counts and coarsening time both distort the release.
  CHECK(records[1].utility.mre > 0.0);
  CHECK(records[2].utility.mre > 0.0);

  // Byte-identical rerun, including defense noise and CSV formatting.
  const auto again = sweep(ds, cfg);
  CHECK(tradeoff_to_csv(records) == tradeoff_to_csv(again));
}

TEST_CASE("manifest records tool, seed, and the config snapshot") {
  const std::string m = make_manifest("attack", R"({"seed": 7})", 7, 1.25);
  const auto j = nlohmann::json::parse(m);
  CHECK(j.at("tool") == "aggloc");
  CHECK(j.at("version") == kToolVersion);
  CHECK(j.at("subcommand") == "attack");
  CHECK(j.at("seed") == 7);
  CHECK(j.at("wall_seconds") == 1.25);
  CHECK(j.at("config").at("seed") == 7);

  const std::string empty = make_manifest("synth", "", 1, 0.0);
  CHECK(nlohmann::json::parse(empty).at("config").is_null());
}
