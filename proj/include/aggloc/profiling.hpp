#pragma once

#include <array>
#include <string>
#include <vector>

#include "aggloc/aggregate.hpp"
#include "aggloc/attack.hpp"
#include "aggloc/data.hpp"

namespace aggloc {

struct MobilityFeatures {
  double total_events = 0;
  double unique_locations = 0;
  double active_timeslots = 0;
  double mean_locations_per_timeslot = 0;  // over active slots
  double mean_events_weekday = 0;          // per weekday day
  double mean_events_weekend = 0;          // per weekend day
  double active_timeslots_weekday = 0;
  double active_timeslots_weekend = 0;
  double spatial_entropy = 0;  // bits
  double temporal_entropy = 0;  // bits
  double unicity = 0;

  static constexpr int kCount = 11;
  static const std::array<std::string, kCount>& names();
  std::array<double, kCount> values() const;
};

// Weekday/weekend labels per slot, derived from the discretization's
// origin weekday (0 = Monday).
struct Calendar {
  std::vector<std::uint8_t> is_weekend;  // one flag per slot
  int n_weekday_days = 0;
  int n_weekend_days = 0;
};

Calendar make_calendar(const Discretization& disc);

MobilityFeatures compute_features(const TraceMatrix& trace, const Calendar& cal,
                                  const Dataset& ds, SlotRange unicity_window);

// Fraction of window slots where the user's visited-ROI set is non-empty and
// unique in the population.
double unicity(int user, const Dataset& ds, SlotRange window);

struct LoadingHeatmap {
  int n_rois = 0;
  int n_slots = 0;
  std::vector<double> values;  // row-major, normalized to [0,1]
  std::vector<int> row_perm;   // set by sort_by_popularity
  std::vector<int> col_perm;

  double at(int s, int t) const {
    return values[static_cast<std::size_t>(s) * n_slots + t];
  }
  double& at(int s, int t) {
    return values[static_cast<std::size_t>(s) * n_slots + t];
  }
};

// Component loadings (component * sqrt(explained variance)), absolute values
// summed over each victim's top_n components by |LR weight|, normalized by
// the matrix maximum.
LoadingHeatmap loading_heatmap(
    const std::vector<std::pair<PcaModel, LrModel>>& models, int top_n,
    int n_rois, int n_slots);

LoadingHeatmap sort_by_popularity(const LoadingHeatmap& hm,
                                  const AggregateSeries& agg);

// LR coefficients separating the most distinguishable victims (label 0) from
// the least distinguishable (label 1), on standardized mobility features.
std::vector<std::pair<std::string, double>> susceptibility_coefficients(
    const std::vector<MobilityFeatures>& top_decile,
    const std::vector<MobilityFeatures>& bottom_decile, const LrParams& params);

std::string features_to_csv(const std::vector<std::string>& user_ids,
                            const std::vector<MobilityFeatures>& features);
std::string heatmap_to_csv(const LoadingHeatmap& hm);

}  // namespace aggloc
