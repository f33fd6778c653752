#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aggloc/aggregate.hpp"
#include "aggloc/defense.hpp"

namespace aggloc {

// Metrics that can be undefined (constant series, all-tied rankings) are
// optional and stay empty rather than defaulting to a number.
struct UtilityReport {
  double mre = 0;
  double mre_top = 0;
  double top_fraction = 0.10;
  double f1 = 0;
  double ppv = 0;
  double tpr = 0;
  std::optional<double> kendall;  // mean per-slot hotspot tau
  double js = 0;
  std::optional<double> pearson;

  std::optional<double> loss_mre() const { return mre; }
  std::optional<double> loss_mre_top() const { return mre_top; }
  std::optional<double> loss_f1() const { return 1.0 - f1; }
  std::optional<double> loss_tau() const;
  std::optional<double> loss_js() const { return js; }
  std::optional<double> loss_r() const;
};

// Normalized drop of the attack AUC toward the 0.5 random-guess baseline.
double privacy_gain(double auc_raw, double auc_defended);

// Mean of |Y' - Y| / max(gamma, Y) over all cells; with top_fraction set,
// restricted to the ceil(f * |S|) ROIs with the largest raw row sums.
double mre(const RealSeries& raw, const RealSeries& defended, double gamma,
           std::optional<double> top_fraction = std::nullopt);

struct F1Result {
  double f1 = 0, ppv = 0, tpr = 0;
};
// Per-slot top-fraction non-null hotspot sets compared between raw and
// defended, TP/FP/FN accumulated over slots.
F1Result f1_hotspots(const RealSeries& raw, const RealSeries& defended,
                     double top_fraction);

// Tau-b style coefficient per the tie rule: pairs tied in both inputs count
// in neither T nor U. Undefined when every pair is tied in one input.
std::optional<double> kendall_tau(std::span<const double> a,
                                  std::span<const double> b);

// Mean per-slot tau over the raw top-fraction hotspot counts.
std::optional<double> kendall_hotspots(const RealSeries& raw,
                                       const RealSeries& defended,
                                       double top_fraction);

// Mean per-slot JS divergence (base-2 KL) of the non-null count
// distributions; slots whose raw or defended column sums to zero are skipped.
double js_divergence(const RealSeries& raw, const RealSeries& defended);

std::optional<double> pearson_r(const RealSeries& raw, const RealSeries& defended);

UtilityReport compute_utility(const RealSeries& raw, const RealSeries& defended,
                              double gamma, double top_fraction);

// Uniform redistribution of each column's non-null mass (multinomial draw,
// same column totals); the utility floor a random guess achieves.
UtilityReport random_baseline(const AggregateSeries& raw, std::uint64_t seed,
                              double gamma, double top_fraction);

struct TradeoffRecord {
  DefenseConfig defense;
  std::vector<double> pg;  // per victim
  double pg_mean = 0, pg_q1 = 0, pg_median = 0, pg_q3 = 0;
  UtilityReport utility;
};

void finalize_pg_stats(TradeoffRecord& rec);
std::string tradeoff_to_csv(const std::vector<TradeoffRecord>& records);
std::string utility_report_to_json(const UtilityReport& r);

}  // namespace aggloc
