#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace aggloc {

inline constexpr const char* kNullRoiId = "null";

struct GridSpec {
  double min_lat = 0, max_lat = 0;
  double min_lon = 0, max_lon = 0;
  int rows = 0, cols = 0;
};

enum class RoiMode { ExplicitId, UniformGrid };

struct Discretization {
  std::int64_t slot_seconds = 3600;
  std::int64_t time_origin = 0;
  int n_slots = 0;
  RoiMode roi_mode = RoiMode::ExplicitId;
  std::optional<GridSpec> grid;
  // Day of week of time_origin, 0 = Monday. Drives weekday/weekend labeling.
  int origin_weekday = 0;
};

// Half-open slot range [begin, end) relative to a Dataset's timeline.
struct SlotRange {
  int begin = 0;
  int end = 0;
  int len() const { return end - begin; }
  bool operator==(const SlotRange&) const = default;
};

// One user's binary presence matrix over (ROI x timeslot). Row 0 is the
// null ROI: set exactly when no non-null ROI is set in that column.
struct TraceMatrix {
  std::string user_id;
  int n_rois = 0;
  int n_slots = 0;
  std::vector<std::uint8_t> bits;  // row-major, n_rois * n_slots

  TraceMatrix() = default;
  TraceMatrix(std::string uid, int rois, int slots)
      : user_id(std::move(uid)),
        n_rois(rois),
        n_slots(slots),
        bits(static_cast<std::size_t>(rois) * slots, 0) {}

  std::uint8_t get(int roi, int slot) const {
    return bits[static_cast<std::size_t>(roi) * n_slots + slot];
  }
  void set(int roi, int slot, std::uint8_t v) {
    bits[static_cast<std::size_t>(roi) * n_slots + slot] = v;
  }

  // Rebuild row 0 from the non-null rows (null marks absence).
  void recompute_null_row();
  // Count of set non-null bits.
  int event_count() const;

  bool operator==(const TraceMatrix&) const = default;
};

struct Dataset {
  std::vector<std::string> rois;  // rois[0] == "null"
  Discretization disc;
  std::vector<TraceMatrix> traces;
  // Synthetic-population metadata, user_id -> archetype name; empty for
  // ingested data.
  std::unordered_map<std::string, std::string> archetypes;

  int n_rois() const { return static_cast<int>(rois.size()); }
  int n_slots() const { return disc.n_slots; }
  int n_users() const { return static_cast<int>(traces.size()); }

  // Index of a user id; throws if unknown.
  int user_index(const std::string& user_id) const;
  int roi_index(const std::string& roi_id) const;
};

struct IngestSummary {
  std::int64_t events_kept = 0;
  std::int64_t events_dropped_time = 0;
  std::int64_t events_dropped_space = 0;
};

// Parse an event CSV (header `user_id,roi_id,timestamp` or
// `user_id,lat,lon,timestamp` depending on disc.roi_mode) into a Dataset.
// Events outside the time window or grid bounding box are dropped and counted.
Dataset ingest_events(std::istream& in, const Discretization& disc,
                      IngestSummary* summary = nullptr);

struct SynthConfig {
  int n_users = 0;
  int n_rois = 0;  // includes the null ROI
  int n_slots = 0;
  std::int64_t slot_seconds = 3600;
  std::int64_t time_origin = 0;
  double frac_commuter = 0;
  double frac_roamer = 0;
  double frac_sparse = 0;
  int commuter_routine_rois = 2;   // home/work ROIs per commuter
  double commuter_noise_prob = 0;  // per-slot chance of an off-pattern event
  double roamer_active_prob = 0.5;
  int sparse_events_per_user = 2;
  std::uint64_t seed = 0;
};

// Deterministic synthetic population; archetype of each user recorded in
// Dataset::archetypes ("commuter" | "roamer" | "sparse").
Dataset generate_synthetic(const SynthConfig& config);

// Users split into highly/somewhat/barely mobile tertiles by total non-null
// events, ties broken by user_id ascending. Returned in that order.
std::array<std::vector<std::string>, 3> mobility_tertiles(const Dataset& ds);

// Sparse JSON interchange: {rois, slot_seconds, time_origin, n_slots,
// traces:{user_id:[[roi,slot],...]}} plus optional archetypes.
std::string dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const std::string& text);

SynthConfig synth_config_from_json(const std::string& text);

}  // namespace aggloc
