#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "aggloc/aggregate.hpp"
#include "aggloc/attack.hpp"
#include "aggloc/data.hpp"
#include "aggloc/defense.hpp"
#include "aggloc/evaluation.hpp"
#include "aggloc/experiment.hpp"
#include "aggloc/format.hpp"
#include "aggloc/profiling.hpp"
#include "aggloc/rng.hpp"

namespace fs = std::filesystem;
using namespace aggloc;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

 private:
  using Clock = std::chrono::steady_clock;
  Clock::time_point start_ = Clock::now();
};

void emit_manifest(const fs::path& out_dir, const std::string& subcommand,
                   const std::string& config_json, std::uint64_t seed,
                   const Timer& timer) {
  write_file(out_dir / "manifest.json",
             make_manifest(subcommand, config_json, seed, timer.seconds()));
}

Dataset load_dataset_file(const std::string& path) {
  return dataset_from_json(read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference attacks and defenses on aggregate location time-series"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", dataset_path, defended_path, raw_path;
  std::uint64_t seed = 0;
  int jobs = 1;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--config", config_path, "SynthConfig JSON")->required();
  synth_cmd->add_option("--out", out_dir, "Output directory");

  auto* ingest_cmd = app.add_subcommand("ingest", "Ingest an event CSV into a dataset");
  std::string events_path;
  ingest_cmd->add_option("--config", config_path, "Discretization JSON")->required();
  ingest_cmd->add_option("--events", events_path, "Event CSV path")->required();
  ingest_cmd->add_option("--out", out_dir, "Output directory");

  auto* agg_cmd = app.add_subcommand("aggregate", "Aggregate a dataset over all users");
  int agg_begin = 0, agg_end = -1;
  agg_cmd->add_option("--dataset", dataset_path, "Dataset JSON")->required();
  agg_cmd->add_option("--begin", agg_begin, "Window start slot");
  agg_cmd->add_option("--end", agg_end, "Window end slot (default |T|)");
  agg_cmd->add_option("--out", out_dir, "Output directory");

  auto* attack_cmd = app.add_subcommand("attack", "Run the membership inference attack");
  attack_cmd->add_option("--config", config_path, "ExperimentConfig JSON")->required();
  attack_cmd->add_option("--out", out_dir, "Output directory");
  attack_cmd->add_option("--jobs", jobs, "Worker threads");

  auto* defend_cmd = app.add_subcommand("defend", "Apply one defense to the full aggregate");
  std::string defense_path;
  defend_cmd->add_option("--dataset", dataset_path, "Dataset JSON")->required();
  defend_cmd->add_option("--defense", defense_path, "DefenseConfig JSON")->required();
  defend_cmd->add_option("--seed", seed, "Noise seed");
  defend_cmd->add_option("--begin", agg_begin, "Window start slot");
  defend_cmd->add_option("--end", agg_end, "Window end slot (default |T|)");
  defend_cmd->add_option("--out", out_dir, "Output directory");

  auto* utility_cmd = app.add_subcommand("utility", "Utility metrics of a defended series");
  double gamma = 1.0, top_fraction = 0.10;
  utility_cmd->add_option("--raw", raw_path, "Raw series CSV")->required();
  utility_cmd->add_option("--defended", defended_path, "Defended series CSV")->required();
  utility_cmd->add_option("--gamma", gamma, "MRE sanity bound");
  utility_cmd->add_option("--top-fraction", top_fraction, "Hotspot fraction");
  utility_cmd->add_option("--out", out_dir, "Output directory");

  auto* tradeoff_cmd = app.add_subcommand("tradeoff", "Full privacy-utility grid");
  tradeoff_cmd->add_option("--config", config_path, "ExperimentConfig JSON")->required();
  tradeoff_cmd->add_option("--out", out_dir, "Output directory");
  tradeoff_cmd->add_option("--jobs", jobs, "Worker threads");

  auto* profile_cmd = app.add_subcommand("profile", "Per-user mobility features");
  int prof_begin = 0, prof_end = -1;
  profile_cmd->add_option("--dataset", dataset_path, "Dataset JSON")->required();
  profile_cmd->add_option("--begin", prof_begin, "Unicity window start");
  profile_cmd->add_option("--end", prof_end, "Unicity window end (default |T|)");
  profile_cmd->add_option("--out", out_dir, "Output directory");

  auto* baseline_cmd = app.add_subcommand("baseline", "Random-guess utility baseline");
  baseline_cmd->add_option("--dataset", dataset_path, "Dataset JSON")->required();
  baseline_cmd->add_option("--seed", seed, "Baseline seed");
  baseline_cmd->add_option("--gamma", gamma, "MRE sanity bound");
  baseline_cmd->add_option("--top-fraction", top_fraction, "Hotspot fraction");
  baseline_cmd->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);
  Timer timer;

  try {
    if (synth_cmd->parsed()) {
      const std::string cfg_json = read_file(config_path);
      const SynthConfig cfg = synth_config_from_json(cfg_json);
      const Dataset ds = generate_synthetic(cfg);
      write_file(fs::path(out_dir) / "dataset.json", dataset_to_json(ds));
      emit_manifest(out_dir, "synth", cfg_json, cfg.seed, timer);
    } else if (ingest_cmd->parsed()) {
      const std::string cfg_json = read_file(config_path);
      const auto j = nlohmann::json::parse(cfg_json);
      std::ifstream in(events_path);
      if (!in) throw std::runtime_error("cannot open event CSV: " + events_path);
      Discretization disc;
      {
        disc.slot_seconds = j.at("slot_seconds").get<std::int64_t>();
        disc.time_origin = j.at("time_origin").get<std::int64_t>();
        disc.n_slots = j.at("n_slots").get<int>();
        disc.origin_weekday = j.value("origin_weekday", 0);
        if (j.value("roi_mode", "explicit-id") == "uniform-grid") {
          disc.roi_mode = RoiMode::UniformGrid;
          const auto& g = j.at("grid");
          disc.grid = GridSpec{g.at("min_lat").get<double>(), g.at("max_lat").get<double>(),
                               g.at("min_lon").get<double>(), g.at("max_lon").get<double>(),
                               g.at("rows").get<int>(), g.at("cols").get<int>()};
        }
      }
      IngestSummary summary;
      const Dataset ds = ingest_events(in, disc, &summary);
      write_file(fs::path(out_dir) / "dataset.json", dataset_to_json(ds));
      nlohmann::ordered_json s;
      s["events_kept"] = summary.events_kept;
      s["events_dropped_time"] = summary.events_dropped_time;
      s["events_dropped_space"] = summary.events_dropped_space;
      write_file(fs::path(out_dir) / "ingest_summary.json", s.dump(2) + "\n");
      emit_manifest(out_dir, "ingest", cfg_json, 0, timer);
    } else if (agg_cmd->parsed()) {
      const Dataset ds = load_dataset_file(dataset_path);
      if (agg_end < 0) agg_end = ds.n_slots();
      std::vector<int> everyone(ds.n_users());
      for (int u = 0; u < ds.n_users(); ++u) everyone[u] = u;
      const AggregateSeries agg =
          aggregate(ds, everyone, SlotRange{agg_begin, agg_end});
      write_file(fs::path(out_dir) / "aggregate.csv", aggregate_to_csv(agg));
      emit_manifest(out_dir, "aggregate", "", 0, timer);
    } else if (attack_cmd->parsed()) {
      const std::string cfg_json = read_file(config_path);
      const ExperimentConfig cfg = experiment_config_from_json(cfg_json);
      const Dataset ds = load_dataset(cfg);
      const auto victims = select_victims(ds, cfg.victims, cfg.seed);
      const auto results = run_mia(ds, victims, cfg.prior, cfg.game, nullptr, jobs);
      write_file(fs::path(out_dir) / "attack_results.csv",
                 attack_results_to_csv(results));
      emit_manifest(out_dir, "attack", cfg_json, cfg.seed, timer);
    } else if (defend_cmd->parsed()) {
      const Dataset ds = load_dataset_file(dataset_path);
      if (agg_end < 0) agg_end = ds.n_slots();
      const DefenseConfig dcfg = defense_from_json(read_file(defense_path));
      DefensePipeline pipeline(dcfg);
      pipeline.prepare(ds, derive_seed(seed, {hash_tag("cli-defend")}));
      std::vector<int> everyone(ds.n_users());
      for (int u = 0; u < ds.n_users(); ++u) everyone[u] = u;
      const RealSeries defended = pipeline.apply_group(
          everyone, SlotRange{agg_begin, agg_end},
          derive_seed(seed, {hash_tag("cli-defend-noise")}));
      write_file(fs::path(out_dir) / "defended.csv", series_to_csv(defended));
      emit_manifest(out_dir, "defend", defense_to_json(dcfg), seed, timer);
    } else if (utility_cmd->parsed()) {
      const RealSeries raw = series_from_csv(read_file(raw_path), 0);
      const RealSeries defended = series_from_csv(read_file(defended_path), 0);
      const UtilityReport report = compute_utility(raw, defended, gamma, top_fraction);
      write_file(fs::path(out_dir) / "utility.json", utility_report_to_json(report));
      emit_manifest(out_dir, "utility", "", 0, timer);
    } else if (tradeoff_cmd->parsed()) {
      const std::string cfg_json = read_file(config_path);
      const ExperimentConfig cfg = experiment_config_from_json(cfg_json);
      const Dataset ds = load_dataset(cfg);
      const auto records = sweep(ds, cfg, jobs);
      write_file(fs::path(out_dir) / "tradeoff.csv", tradeoff_to_csv(records));
      emit_manifest(out_dir, "tradeoff", cfg_json, cfg.seed, timer);
    } else if (profile_cmd->parsed()) {
      const Dataset ds = load_dataset_file(dataset_path);
      if (prof_end < 0) prof_end = ds.n_slots();
      const Calendar cal = make_calendar(ds.disc);
      std::vector<std::string> ids;
      std::vector<MobilityFeatures> features;
      for (const auto& tm : ds.traces) {
        ids.push_back(tm.user_id);
        features.push_back(
            compute_features(tm, cal, ds, SlotRange{prof_begin, prof_end}));
      }
      write_file(fs::path(out_dir) / "features.csv", features_to_csv(ids, features));
      emit_manifest(out_dir, "profile", "", 0, timer);
    } else if (baseline_cmd->parsed()) {
      const Dataset ds = load_dataset_file(dataset_path);
      std::vector<int> everyone(ds.n_users());
      for (int u = 0; u < ds.n_users(); ++u) everyone[u] = u;
      const AggregateSeries raw =
          aggregate(ds, everyone, SlotRange{0, ds.n_slots()});
      const UtilityReport report = random_baseline(raw, seed, gamma, top_fraction);
      write_file(fs::path(out_dir) / "baseline.json", utility_report_to_json(report));
      emit_manifest(out_dir, "baseline", "", seed, timer);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
