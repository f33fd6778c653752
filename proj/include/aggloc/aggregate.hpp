#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aggloc/data.hpp"

namespace aggloc {

// Aggregate location time-series: per-(ROI, slot) user counts over a group
// of size m, restricted to a slot window.
struct AggregateSeries {
  std::vector<std::string> rois;
  SlotRange window;
  int m = 0;
  std::vector<std::int32_t> counts;  // row-major, rois.size() x window.len()

  int n_rois() const { return static_cast<int>(rois.size()); }
  int n_slots() const { return window.len(); }
  std::int32_t at(int roi, int slot) const {
    return counts[static_cast<std::size_t>(roi) * n_slots() + slot];
  }
  std::int32_t& at(int roi, int slot) {
    return counts[static_cast<std::size_t>(roi) * n_slots() + slot];
  }
};

// Real-valued series with the same shape; what defenses release.
struct RealSeries {
  std::vector<std::string> rois;
  SlotRange window;
  int m = 0;
  std::vector<double> values;

  int n_rois() const { return static_cast<int>(rois.size()); }
  int n_slots() const { return window.len(); }
  double at(int roi, int slot) const {
    return values[static_cast<std::size_t>(roi) * n_slots() + slot];
  }
  double& at(int roi, int slot) {
    return values[static_cast<std::size_t>(roi) * n_slots() + slot];
  }

  static RealSeries from(const AggregateSeries& a);
};

// Sum the group's binary matrices over the window. Group given as user
// indices into the dataset.
AggregateSeries aggregate(const Dataset& ds, std::span<const int> group,
                          SlotRange window);

// Convenience overload by user id; unknown ids are an error naming the id.
AggregateSeries aggregate(const Dataset& ds,
                          const std::vector<std::string>& group,
                          SlotRange window);

// Subtract one included user's trace; inverse of adding it to the group.
AggregateSeries remove_user(const AggregateSeries& agg, const TraceMatrix& trace);

// CSV export: one row per ROI, first column the ROI id, then one column per
// slot in the window.
std::string aggregate_to_csv(const AggregateSeries& agg);
std::string series_to_csv(const RealSeries& s);
RealSeries series_from_csv(const std::string& text, int m);

}  // namespace aggloc
