#include "aggloc/profiling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "aggloc/format.hpp"

namespace aggloc {

const std::array<std::string, MobilityFeatures::kCount>& MobilityFeatures::names() {
  static const std::array<std::string, kCount> n = {
      "total_events",
      "unique_locations",
      "active_timeslots",
      "mean_locations_per_timeslot",
      "mean_events_weekday",
      "mean_events_weekend",
      "active_timeslots_weekday",
      "active_timeslots_weekend",
      "spatial_entropy",
      "temporal_entropy",
      "unicity",
  };
  return n;
}

std::array<double, MobilityFeatures::kCount> MobilityFeatures::values() const {
  return {total_events,
          unique_locations,
          active_timeslots,
          mean_locations_per_timeslot,
          mean_events_weekday,
          mean_events_weekend,
          active_timeslots_weekday,
          active_timeslots_weekend,
          spatial_entropy,
          temporal_entropy,
          unicity};
}

Calendar make_calendar(const Discretization& disc) {
  Calendar cal;
  cal.is_weekend.resize(disc.n_slots);
  std::set<std::int64_t> weekday_days, weekend_days;
  for (int t = 0; t < disc.n_slots; ++t) {
    const std::int64_t day = static_cast<std::int64_t>(t) * disc.slot_seconds / 86400;
    const int dow = static_cast<int>((disc.origin_weekday + day) % 7);
    cal.is_weekend[t] = dow >= 5;
    (cal.is_weekend[t] ? weekend_days : weekday_days).insert(day);
  }
  cal.n_weekday_days = static_cast<int>(weekday_days.size());
  cal.n_weekend_days = static_cast<int>(weekend_days.size());
  return cal;
}

namespace {

double entropy_bits(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total <= 0) return 0;
  double h = 0;
  for (double c : counts) {
    if (c > 0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

}  // namespace

MobilityFeatures compute_features(const TraceMatrix& trace, const Calendar& cal,
                                  const Dataset& ds, SlotRange unicity_window) {
  if (static_cast<int>(cal.is_weekend.size()) != trace.n_slots) {
    throw std::invalid_argument("compute_features: calendar does not cover all slots");
  }
  MobilityFeatures f;
  std::vector<double> per_roi(trace.n_rois, 0.0);
  std::vector<double> per_slot(trace.n_slots, 0.0);
  int active = 0, active_wd = 0, active_we = 0;
  double events_wd = 0, events_we = 0;
  for (int t = 0; t < trace.n_slots; ++t) {
    int here = 0;
    for (int s = 1; s < trace.n_rois; ++s) {
      if (trace.get(s, t)) {
        ++here;
        per_roi[s] += 1;
      }
    }
    per_slot[t] = here;
    if (here > 0) {
      ++active;
      if (cal.is_weekend[t]) {
        ++active_we;
        events_we += here;
      } else {
        ++active_wd;
        events_wd += here;
      }
    }
  }
  f.total_events = trace.event_count();
  f.unique_locations =
      static_cast<double>(std::count_if(per_roi.begin() + 1, per_roi.end(),
                                        [](double c) { return c > 0; }));
  f.active_timeslots = active;
  f.mean_locations_per_timeslot = active > 0 ? f.total_events / active : 0.0;
  f.mean_events_weekday = cal.n_weekday_days > 0 ? events_wd / cal.n_weekday_days : 0.0;
  f.mean_events_weekend = cal.n_weekend_days > 0 ? events_we / cal.n_weekend_days : 0.0;
  f.active_timeslots_weekday = active_wd;
  f.active_timeslots_weekend = active_we;
  f.spatial_entropy = entropy_bits(per_roi);
  f.temporal_entropy = entropy_bits(per_slot);
  f.unicity = unicity(ds.user_index(trace.user_id), ds, unicity_window);
  return f;
}

double unicity(int user, const Dataset& ds, SlotRange window) {
  if (user < 0 || user >= ds.n_users()) {
    throw std::invalid_argument("unicity: user out of range");
  }
  if (window.len() < 1) throw std::invalid_argument("unicity: empty window");
  const TraceMatrix& me = ds.traces[user];
  int unique_slots = 0;
  for (int t = window.begin; t < window.end; ++t) {
    bool empty = true;
    for (int s = 1; s < me.n_rois && empty; ++s) {
      empty = me.get(s, t) == 0;
    }
    if (empty) continue;
    bool unique = true;
    for (int v = 0; v < ds.n_users() && unique; ++v) {
      if (v == user) continue;
      const TraceMatrix& other = ds.traces[v];
      bool same = true;
      for (int s = 1; s < me.n_rois && same; ++s) {
        same = me.get(s, t) == other.get(s, t);
      }
      if (same) unique = false;
    }
    if (unique) ++unique_slots;
  }
  return static_cast<double>(unique_slots) / window.len();
}

LoadingHeatmap loading_heatmap(
    const std::vector<std::pair<PcaModel, LrModel>>& models, int top_n,
    int n_rois, int n_slots) {
  if (models.empty()) throw std::invalid_argument("loading_heatmap: no models");
  const int d = models.front().first.d;
  if (d != n_rois * n_slots) {
    throw std::invalid_argument("loading_heatmap: d != n_rois * n_slots");
  }
  LoadingHeatmap hm;
  hm.n_rois = n_rois;
  hm.n_slots = n_slots;
  hm.values.assign(static_cast<std::size_t>(n_rois) * n_slots, 0.0);

  for (const auto& [pca, lr] : models) {
    if (pca.d != d || static_cast<int>(lr.weights.size()) != pca.k) {
      throw std::invalid_argument("loading_heatmap: model dimension mismatch");
    }
    std::vector<int> order(pca.k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::fabs(lr.weights[a]) > std::fabs(lr.weights[b]);
    });
    const int n_sel = std::min(top_n, pca.k);
    for (int r = 0; r < n_sel; ++r) {
      const int j = order[r];
      const double sd = std::sqrt(pca.explained_variance[j]);
      const double* comp = pca.components.data() + static_cast<std::size_t>(j) * d;
      for (int i = 0; i < d; ++i) {
        hm.values[i] += std::fabs(comp[i] * sd);
      }
    }
  }
  const double mx = *std::max_element(hm.values.begin(), hm.values.end());
  if (mx > 0) {
    for (double& v : hm.values) v /= mx;
  }
  return hm;
}

LoadingHeatmap sort_by_popularity(const LoadingHeatmap& hm,
                                  const AggregateSeries& agg) {
  if (agg.n_rois() != hm.n_rois || agg.n_slots() != hm.n_slots) {
    throw std::invalid_argument("sort_by_popularity: shape mismatch");
  }
  std::vector<std::pair<std::int64_t, int>> rows, cols;
  for (int s = 0; s < hm.n_rois; ++s) {
    std::int64_t sum = 0;
    for (int t = 0; t < hm.n_slots; ++t) sum += agg.at(s, t);
    rows.emplace_back(sum, s);
  }
  for (int t = 0; t < hm.n_slots; ++t) {
    std::int64_t sum = 0;
    for (int s = 0; s < hm.n_rois; ++s) sum += agg.at(s, t);
    cols.emplace_back(sum, t);
  }
  std::sort(rows.begin(), rows.end());
  std::sort(cols.begin(), cols.end());

  LoadingHeatmap out;
  out.n_rois = hm.n_rois;
  out.n_slots = hm.n_slots;
  out.values.resize(hm.values.size());
  for (int s = 0; s < hm.n_rois; ++s) out.row_perm.push_back(rows[s].second);
  for (int t = 0; t < hm.n_slots; ++t) out.col_perm.push_back(cols[t].second);
  for (int s = 0; s < hm.n_rois; ++s) {
    for (int t = 0; t < hm.n_slots; ++t) {
      out.at(s, t) = hm.at(out.row_perm[s], out.col_perm[t]);
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> susceptibility_coefficients(
    const std::vector<MobilityFeatures>& top_decile,
    const std::vector<MobilityFeatures>& bottom_decile, const LrParams& params) {
  if (top_decile.size() < 2 || bottom_decile.size() < 2) {
    throw std::invalid_argument(
        "susceptibility_coefficients: need at least 2 users per decile");
  }
  const int d = MobilityFeatures::kCount;
  FeatureMatrix fm;
  fm.n = static_cast<int>(top_decile.size() + bottom_decile.size());
  fm.d = d;
  std::vector<int> labels;
  for (const auto& f : top_decile) {
    const auto v = f.values();
    fm.x.insert(fm.x.end(), v.begin(), v.end());
    labels.push_back(0);  // most distinguishable
  }
  for (const auto& f : bottom_decile) {
    const auto v = f.values();
    fm.x.insert(fm.x.end(), v.begin(), v.end());
    labels.push_back(1);  // least distinguishable
  }

  // Standardize; zero-variance features stay centered.
  for (int j = 0; j < d; ++j) {
    double mean = 0;
    for (int i = 0; i < fm.n; ++i) mean += fm.at(i, j);
    mean /= fm.n;
    double var = 0;
    for (int i = 0; i < fm.n; ++i) {
      const double c = fm.at(i, j) - mean;
      var += c * c;
    }
    const double sd = std::sqrt(var / (fm.n - 1));
    for (int i = 0; i < fm.n; ++i) {
      fm.at(i, j) = (fm.at(i, j) - mean) / (sd > 0 ? sd : 1.0);
    }
  }

  const LrModel model = fit_lr(fm, labels, params);
  std::vector<std::pair<std::string, double>> out;
  for (int j = 0; j < d; ++j) {
    out.emplace_back(MobilityFeatures::names()[j], model.weights[j]);
  }
  return out;
}

std::string features_to_csv(const std::vector<std::string>& user_ids,
                            const std::vector<MobilityFeatures>& features) {
  if (user_ids.size() != features.size()) {
    throw std::invalid_argument("features_to_csv: size mismatch");
  }
  std::ostringstream os;
  os << "user_id";
  for (const auto& n : MobilityFeatures::names()) os << "," << n;
  os << "\n";
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    os << user_ids[i];
    for (double v : features[i].values()) os << "," << fmt_double(v);
    os << "\n";
  }
  return os.str();
}

std::string heatmap_to_csv(const LoadingHeatmap& hm) {
  std::ostringstream os;
  for (int s = 0; s < hm.n_rois; ++s) {
    for (int t = 0; t < hm.n_slots; ++t) {
      if (t) os << ",";
      os << fmt_double(hm.at(s, t));
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace aggloc
