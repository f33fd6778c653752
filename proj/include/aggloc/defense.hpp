#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aggloc/aggregate.hpp"
#include "aggloc/data.hpp"

namespace aggloc {

enum class SensitivityMode { WorstCase, Empirical };

struct IdentityDefense {};
struct SpgConfig {
  std::map<std::string, std::string> partition;  // roi_id -> super roi_id
};
struct TgConfig {
  std::int64_t coarse_slot_seconds = 0;
};
struct DgfrConfig {
  int x = 2;  // fixed bucket size
};
struct DgarConfig {
  int x_prime = 1;  // sub-ranges per ROI row
};
struct SscConfig {
  int k = 1;  // counts strictly below k are zeroed
};
struct SlpConfig {
  double z = 0;  // fraction of least popular ROIs/slots suppressed
};
struct SmpConfig {
  double w = 0;  // fraction of each user's points removed
};
struct PscConfig {
  int k = 1;
  double epsilon_prime = 1.0;
};
struct FpaConfig {
  int l = 1;  // retained Fourier coefficients
  double epsilon = 1.0;
  SensitivityMode mode = SensitivityMode::WorstCase;
  bool global_budget = false;  // split epsilon evenly across ROI rows
};
struct SpscConfig {
  double w = 0;
  int k = 1;
  double epsilon_prime = 1.0;
};
struct SfpaConfig {
  double w = 0;
  int l = 1;
  double epsilon = 1.0;
  SensitivityMode mode = SensitivityMode::WorstCase;
  bool global_budget = false;
};

using DefenseConfig =
    std::variant<IdentityDefense, SpgConfig, TgConfig, DgfrConfig, DgarConfig,
                 SscConfig, SlpConfig, SmpConfig, PscConfig, FpaConfig,
                 SpscConfig, SfpaConfig>;

std::string defense_name(const DefenseConfig& cfg);
// Compact parameter string, e.g. "k=5" or "w=0.2;epsilon=1".
std::string defense_params(const DefenseConfig& cfg);

DefenseConfig defense_from_json(const std::string& text);
std::string defense_to_json(const DefenseConfig& cfg);

// `roi_id,super_roi_id` CSV.
std::map<std::string, std::string> spg_partition_from_csv(const std::string& text);
// Partition derived by coarsening a uniform grid (fine cell -> coarse cell).
std::map<std::string, std::string> spg_grid_partition(const GridSpec& fine,
                                                      int coarse_rows,
                                                      int coarse_cols);

// --- Trace-level mechanisms -------------------------------------------------

Dataset spg(const Dataset& ds, const std::map<std::string, std::string>& partition);
Dataset tg(const Dataset& ds, std::int64_t coarse_slot_seconds);
// Per user, clears exactly floor(w * n) of the n set non-null bits; the
// removal stream for user u is seeded by (seed, u) so it does not depend on
// group composition.
Dataset smp(const Dataset& ds, double w, std::uint64_t seed);

// --- Aggregate-level mechanisms ---------------------------------------------

RealSeries dgfr(const RealSeries& agg, int x);
RealSeries dgar(const RealSeries& agg, int x_prime);
RealSeries ssc(const RealSeries& agg, int k);
RealSeries slp(const RealSeries& agg, double z);
RealSeries psc(const RealSeries& agg, int k, double epsilon_prime,
               std::uint64_t seed, bool noise_enabled = true);
// Per ROI row: DFT, keep the first l coefficients, Laplace-perturb their real
// and imaginary parts with scale sqrt(l) * delta_f2 / epsilon, inverse DFT.
// delta_f2 is per row; empty means worst-case sqrt(|T'|) for every row.
RealSeries fpa(const RealSeries& agg, const FpaConfig& cfg,
               std::span<const double> delta_f2, std::uint64_t seed,
               bool noise_enabled = true);

// Naive DFT helpers (|T'| is small at desk scale).
void dft_forward(std::span<const double> in, std::vector<double>& re,
                 std::vector<double>& im);
std::vector<double> dft_inverse_real(std::span<const double> re,
                                     std::span<const double> im);

// Max over users of the L2 norm of their (ROI row, window) contribution;
// one value per ROI row.
std::vector<double> empirical_row_sensitivity(const Dataset& ds, SlotRange window);

// One configured mechanism, applied identically to every group draw.
// prepare() runs the trace-level stage once (SPG/TG regridding, SMP
// sampling); apply_group() aggregates the prepared traces and runs the
// aggregate-level stage with a per-draw noise seed.
//
// Seed policy: prepare() receives a run-level seed shared by the train and
// test sides (the strategic-adversary contract); apply_group() receives a
// per-sample seed for the noise stage.
class DefensePipeline {
 public:
  explicit DefensePipeline(DefenseConfig cfg, bool disable_noise_for_tests = false);

  void prepare(const Dataset& ds, std::uint64_t run_seed);

  RealSeries apply_group(std::span<const int> group, SlotRange window,
                         std::uint64_t sample_seed) const;
  // Aggregate-level stage only, for series that were built elsewhere.
  RealSeries apply_series(const RealSeries& agg, std::uint64_t sample_seed) const;

  bool is_identity() const { return std::holds_alternative<IdentityDefense>(cfg_); }
  bool noise_disabled() const { return disable_noise_; }
  const DefenseConfig& config() const { return cfg_; }
  const Dataset& prepared_dataset() const;

 private:
  DefenseConfig cfg_;
  bool disable_noise_;
  const Dataset* source_ = nullptr;
  std::shared_ptr<const Dataset> transformed_;  // set when a trace stage ran
};

}  // namespace aggloc
