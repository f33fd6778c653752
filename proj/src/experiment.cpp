#include "aggloc/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aggloc/rng.hpp"
#include "json.hpp"

namespace aggloc {

namespace {

Discretization discretization_from_json(const nlohmann::json& j) {
  Discretization d;
  d.slot_seconds = j.at("slot_seconds").get<std::int64_t>();
  d.time_origin = j.at("time_origin").get<std::int64_t>();
  d.n_slots = j.at("n_slots").get<int>();
  d.origin_weekday = j.value("origin_weekday", 0);
  const std::string mode = j.value("roi_mode", "explicit-id");
  if (mode == "explicit-id") {
    d.roi_mode = RoiMode::ExplicitId;
  } else if (mode == "uniform-grid") {
    d.roi_mode = RoiMode::UniformGrid;
    const auto& g = j.at("grid");
    GridSpec gs;
    gs.min_lat = g.at("min_lat").get<double>();
    gs.max_lat = g.at("max_lat").get<double>();
    gs.min_lon = g.at("min_lon").get<double>();
    gs.max_lon = g.at("max_lon").get<double>();
    gs.rows = g.at("rows").get<int>();
    gs.cols = g.at("cols").get<int>();
    d.grid = gs;
  } else {
    throw std::invalid_argument("unknown roi_mode: " + mode);
  }
  return d;
}

SlotRange range_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw std::invalid_argument("slot range must be [begin, end)");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

PriorSpec prior_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "subset_locations") return SubsetLocations{j.at("alpha").get<double>()};
  if (type == "same_groups") return SameGroups{j.at("beta").get<int>()};
  if (type == "different_groups") return DifferentGroups{j.at("beta").get<int>()};
  throw std::invalid_argument("unknown prior type: " + type);
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ExperimentConfig cfg;

  const auto& src = j.at("dataset");
  if (src.contains("synth")) {
    cfg.source = synth_config_from_json(src.at("synth").dump());
  } else if (src.contains("ingest")) {
    IngestSource ing;
    ing.csv_path = src.at("ingest").at("csv_path").get<std::string>();
    ing.disc = discretization_from_json(src.at("ingest").at("discretization"));
    cfg.source = std::move(ing);
  } else {
    throw std::invalid_argument("dataset must provide 'synth' or 'ingest'");
  }

  const auto& g = j.at("game");
  cfg.game.m = g.at("m").get<int>();
  cfg.game.t_obs = range_from_json(g.at("t_obs"));
  cfg.game.t_inf = range_from_json(g.at("t_inf"));
  cfg.game.n_samples = g.at("n_samples").get<int>();
  cfg.game.train_fraction = g.at("train_fraction").get<double>();
  cfg.game.pca_variance_target = g.at("pca_variance_target").get<double>();
  cfg.game.pca_max_components = g.at("pca_max_components").get<int>();
  const auto& lr = g.at("lr");
  cfg.game.lr.learning_rate = lr.at("learning_rate").get<double>();
  cfg.game.lr.l2_weight = lr.at("l2_weight").get<double>();
  cfg.game.lr.max_epochs = lr.at("max_epochs").get<int>();
  cfg.game.lr.tolerance = lr.at("tolerance").get<double>();

  cfg.prior = prior_from_json(j.at("prior"));

  const auto& v = j.at("victims");
  if (v.contains("ids")) {
    cfg.victims.ids = v.at("ids").get<std::vector<std::string>>();
  } else {
    cfg.victims.per_tertile = v.at("per_tertile").get<int>();
  }

  for (const auto& d : j.at("defenses")) {
    cfg.defenses.push_back(defense_from_json(d.dump()));
  }

  if (j.contains("evaluation")) {
    cfg.eval.gamma = j.at("evaluation").at("gamma").get<double>();
    cfg.eval.top_fraction = j.at("evaluation").at("top_fraction").get<double>();
  }
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.game.seed = cfg.seed;
  return cfg;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (const auto* synth = std::get_if<SynthConfig>(&cfg.source)) {
    return generate_synthetic(*synth);
  }
  const auto& ing = std::get<IngestSource>(cfg.source);
  std::ifstream in(ing.csv_path);
  if (!in) throw std::runtime_error("cannot open event CSV: " + ing.csv_path);
  return ingest_events(in, ing.disc);
}

std::vector<std::string> select_victims(const Dataset& ds,
                                        const VictimSelection& sel,
                                        std::uint64_t seed) {
  if (!sel.ids.empty()) {
    for (const auto& id : sel.ids) ds.user_index(id);  // validate
    return sel.ids;
  }
  if (sel.per_tertile < 1) {
    throw std::invalid_argument("victim selection: need ids or per_tertile >= 1");
  }
  const auto tertiles = mobility_tertiles(ds);
  std::vector<std::string> out;
  Rng rng(derive_seed(seed, {hash_tag("victims")}));
  for (const auto& group : tertiles) {
    const int take = std::min<int>(sel.per_tertile, static_cast<int>(group.size()));
    auto picks = rng.sample_without_replacement(group.size(), take);
    std::sort(picks.begin(), picks.end());
    for (auto p : picks) out.push_back(group[p]);
  }
  return out;
}

std::vector<TradeoffRecord> sweep(const Dataset& ds, const ExperimentConfig& cfg,
                                  int jobs) {
  if (cfg.defenses.empty()) throw std::invalid_argument("sweep: empty defense grid");
  const std::vector<std::string> victims = select_victims(ds, cfg.victims, cfg.seed);
  if (victims.empty()) throw std::invalid_argument("sweep: no victims");

  // Raw attack once per victim, reused across grid points.
  const std::vector<AttackResult> raw_results =
      run_mia(ds, victims, cfg.prior, cfg.game, nullptr, jobs);

  std::vector<int> everyone(ds.n_users());
  for (int u = 0; u < ds.n_users(); ++u) everyone[u] = u;
  const RealSeries raw_release =
      RealSeries::from(aggregate(ds, everyone, cfg.game.t_inf));

  std::vector<TradeoffRecord> records;
  for (std::size_t gi = 0; gi < cfg.defenses.size(); ++gi) {
    TradeoffRecord rec;
    rec.defense = cfg.defenses[gi];

    GameConfig game = cfg.game;
    // Identity keeps the raw seed so PG is exactly 0; other points get an
    // independent stream per grid index.
    if (!std::holds_alternative<IdentityDefense>(rec.defense)) {
      game.seed = derive_seed(cfg.seed, {hash_tag("grid"), gi});
    }
    DefensePipeline pipeline(rec.defense);
    const std::vector<AttackResult> defended =
        run_mia(ds, victims, cfg.prior, game, &pipeline, jobs);
    for (std::size_t v = 0; v < victims.size(); ++v) {
      rec.pg.push_back(privacy_gain(raw_results[v].auc, defended[v].auc));
    }
    finalize_pg_stats(rec);

    DefensePipeline release_pipeline(rec.defense);
    release_pipeline.prepare(ds, derive_seed(cfg.seed, {hash_tag("release"), gi}));
    const RealSeries defended_release = release_pipeline.apply_group(
        everyone, cfg.game.t_inf, derive_seed(cfg.seed, {hash_tag("release-noise"), gi}));
    // Shape-changing defenses (SPG/TG) are broadcast back to the original
    // grid: each fine cell reads the value of its merged cell, as an analyst
    // answering fine-grained queries from the coarse release would.
    RealSeries comparable = defended_release;
    if (const auto* c = std::get_if<SpgConfig>(&rec.defense)) {
      comparable = raw_release;
      for (int s = 0; s < raw_release.n_rois(); ++s) {
        const std::string& super_id =
            s == 0 ? std::string(kNullRoiId) : c->partition.at(raw_release.rois[s]);
        int super_row = 0;
        for (int r = 0; r < defended_release.n_rois(); ++r) {
          if (defended_release.rois[r] == super_id) {
            super_row = r;
            break;
          }
        }
        for (int t = 0; t < raw_release.n_slots(); ++t) {
          comparable.at(s, t) = defended_release.at(super_row, t);
        }
      }
    } else if (const auto* c = std::get_if<TgConfig>(&rec.defense)) {
      const int factor = static_cast<int>(c->coarse_slot_seconds / ds.disc.slot_seconds);
      comparable = raw_release;
      for (int s = 0; s < raw_release.n_rois(); ++s) {
        for (int t = 0; t < raw_release.n_slots(); ++t) {
          const int coarse =
              (cfg.game.t_inf.begin + t) / factor - defended_release.window.begin;
          comparable.at(s, t) = defended_release.at(s, coarse);
        }
      }
    }
    rec.utility = compute_utility(raw_release, comparable, cfg.eval.gamma,
                                  cfg.eval.top_fraction);
    records.push_back(std::move(rec));
  }
  return records;
}

std::string make_manifest(const std::string& subcommand,
                          const std::string& config_json, std::uint64_t seed,
                          double wall_seconds) {
  nlohmann::ordered_json j;
  j["tool"] = "aggloc";
  j["version"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  j["config"] = config_json.empty() ? nlohmann::ordered_json()
                                    : nlohmann::ordered_json::parse(config_json);
  return j.dump(2) + "\n";
}

}  // namespace aggloc
