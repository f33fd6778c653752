#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aggloc/attack.hpp"
#include "aggloc/data.hpp"
#include "aggloc/defense.hpp"
#include "aggloc/evaluation.hpp"

namespace aggloc {

struct IngestSource {
  std::string csv_path;
  Discretization disc;
};

struct VictimSelection {
  std::vector<std::string> ids;  // explicit, or
  int per_tertile = 0;           // seeded draw of n per mobility tertile
};

struct EvalSettings {
  double gamma = 1.0;
  double top_fraction = 0.10;
};

struct ExperimentConfig {
  std::variant<SynthConfig, IngestSource> source;
  GameConfig game;
  PriorSpec prior;
  VictimSelection victims;
  std::vector<DefenseConfig> defenses;
  EvalSettings eval;
  std::uint64_t seed = 0;
};

ExperimentConfig experiment_config_from_json(const std::string& text);

Dataset load_dataset(const ExperimentConfig& cfg);

// Victim ids per the selection policy; per-tertile draws are seeded by the
// experiment seed.
std::vector<std::string> select_victims(const Dataset& ds,
                                        const VictimSelection& sel,
                                        std::uint64_t seed);

// Full grid evaluation: raw AUC once per victim, then per defense point a
// defended attack on every victim plus utility of the defended
// all-population aggregate over the inference window.
std::vector<TradeoffRecord> sweep(const Dataset& ds, const ExperimentConfig& cfg,
                                  int jobs = 1);

// Manifest JSON written next to every CLI artifact: config snapshot, seed,
// tool version, wall time.
std::string make_manifest(const std::string& subcommand,
                          const std::string& config_json, std::uint64_t seed,
                          double wall_seconds);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace aggloc
