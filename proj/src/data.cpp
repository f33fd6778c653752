#include "aggloc/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "aggloc/rng.hpp"
#include "json.hpp"

namespace aggloc {

void TraceMatrix::recompute_null_row() {
  for (int t = 0; t < n_slots; ++t) {
    bool present = false;
    for (int s = 1; s < n_rois && !present; ++s) {
      present = get(s, t) != 0;
    }
    set(0, t, present ? 0 : 1);
  }
}

int TraceMatrix::event_count() const {
  int n = 0;
  for (int s = 1; s < n_rois; ++s) {
    for (int t = 0; t < n_slots; ++t) {
      n += get(s, t);
    }
  }
  return n;
}

int Dataset::user_index(const std::string& user_id) const {
  for (int i = 0; i < n_users(); ++i) {
    if (traces[i].user_id == user_id) return i;
  }
  throw std::invalid_argument("unknown user id: " + user_id);
}

int Dataset::roi_index(const std::string& roi_id) const {
  for (int i = 0; i < n_rois(); ++i) {
    if (rois[i] == roi_id) return i;
  }
  throw std::invalid_argument("unknown ROI id: " + roi_id);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("malformed event CSV at line " +
                           std::to_string(line_no) + ": " + why);
}

std::int64_t parse_int64(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) malformed(line_no, "bad integer '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    malformed(line_no, "bad integer '" + s + "'");
  }
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) malformed(line_no, "bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    malformed(line_no, "bad number '" + s + "'");
  }
}

std::string grid_roi_id(int r, int c) {
  return "g" + std::to_string(r) + "_" + std::to_string(c);
}

}  // namespace

Dataset ingest_events(std::istream& in, const Discretization& disc,
                      IngestSummary* summary) {
  if (disc.n_slots < 1 || disc.slot_seconds < 1) {
    throw std::invalid_argument("discretization requires n_slots >= 1 and slot_seconds >= 1");
  }
  if (disc.roi_mode == RoiMode::UniformGrid && !disc.grid) {
    throw std::invalid_argument("grid mode requires a GridSpec");
  }

  struct RawEvent {
    std::string user;
    std::string roi;  // resolved roi id
    int slot;
  };

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty event CSV: missing header");
  }
  ++line_no;

  const bool grid_mode = disc.roi_mode == RoiMode::UniformGrid;
  const std::size_t n_cols = grid_mode ? 4 : 3;

  IngestSummary local;
  std::vector<RawEvent> events;
  const std::int64_t t_end =
      disc.time_origin + static_cast<std::int64_t>(disc.n_slots) * disc.slot_seconds;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != n_cols) {
      malformed(line_no, "expected " + std::to_string(n_cols) + " columns, got " +
                             std::to_string(f.size()));
    }
    const std::string& user = f[0];
    if (user.empty()) malformed(line_no, "empty user_id");
    const std::int64_t ts = parse_int64(f.back(), line_no);
    if (ts < 0) malformed(line_no, "negative timestamp");
    if (ts < disc.time_origin || ts >= t_end) {
      ++local.events_dropped_time;
      continue;
    }
    const int slot = static_cast<int>((ts - disc.time_origin) / disc.slot_seconds);

    std::string roi;
    if (grid_mode) {
      const GridSpec& g = *disc.grid;
      const double lat = parse_double(f[1], line_no);
      const double lon = parse_double(f[2], line_no);
      if (lat < g.min_lat || lat > g.max_lat || lon < g.min_lon || lon > g.max_lon) {
        ++local.events_dropped_space;
        continue;
      }
      // Half-open cells; points on the max edge clamp inward.
      int r = static_cast<int>((lat - g.min_lat) / (g.max_lat - g.min_lat) * g.rows);
      int c = static_cast<int>((lon - g.min_lon) / (g.max_lon - g.min_lon) * g.cols);
      r = std::min(r, g.rows - 1);
      c = std::min(c, g.cols - 1);
      roi = grid_roi_id(r, c);
    } else {
      roi = f[1];
      if (roi.empty()) malformed(line_no, "empty roi_id");
      if (roi == kNullRoiId) malformed(line_no, "roi_id 'null' is reserved");
    }
    ++local.events_kept;
    events.push_back({user, std::move(roi), slot});
  }

  if (events.empty()) {
    throw std::runtime_error("empty event CSV: no usable events");
  }

  Dataset ds;
  ds.disc = disc;
  ds.rois.push_back(kNullRoiId);
  if (grid_mode) {
    for (int r = 0; r < disc.grid->rows; ++r) {
      for (int c = 0; c < disc.grid->cols; ++c) {
        ds.rois.push_back(grid_roi_id(r, c));
      }
    }
  } else {
    // Sorted ROI table keeps ingestion invariant under event reordering.
    std::set<std::string> ids;
    for (const auto& e : events) ids.insert(e.roi);
    ds.rois.insert(ds.rois.end(), ids.begin(), ids.end());
  }

  std::map<std::string, int> roi_row;
  for (int i = 0; i < ds.n_rois(); ++i) roi_row[ds.rois[i]] = i;

  std::map<std::string, TraceMatrix> by_user;  // sorted user order
  for (const auto& e : events) {
    auto it = by_user.find(e.user);
    if (it == by_user.end()) {
      it = by_user.emplace(e.user, TraceMatrix(e.user, ds.n_rois(), disc.n_slots)).first;
    }
    it->second.set(roi_row.at(e.roi), e.slot, 1);
  }
  for (auto& [_, tm] : by_user) {
    tm.recompute_null_row();
    ds.traces.push_back(std::move(tm));
  }
  if (summary) *summary = local;
  return ds;
}

namespace {

int weekday_of_slot(const Discretization& d, int slot) {
  const std::int64_t day =
      static_cast<std::int64_t>(slot) * d.slot_seconds / 86400;
  return static_cast<int>((d.origin_weekday + day) % 7);
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_rois < 2) {
    throw std::invalid_argument("n_rois must be >= 2 (null ROI plus at least one real ROI)");
  }
  if (cfg.n_users < 1 || cfg.n_slots < 1) {
    throw std::invalid_argument("n_users and n_slots must be positive");
  }
  const double fsum = cfg.frac_commuter + cfg.frac_roamer + cfg.frac_sparse;
  if (std::fabs(fsum - 1.0) > 1e-9) {
    throw std::invalid_argument("population fractions must sum to 1");
  }

  Dataset ds;
  ds.disc.slot_seconds = cfg.slot_seconds;
  ds.disc.time_origin = cfg.time_origin;
  ds.disc.n_slots = cfg.n_slots;
  ds.rois.push_back(kNullRoiId);
  for (int i = 1; i < cfg.n_rois; ++i) {
    ds.rois.push_back("r" + std::to_string(i));
  }
  const int nn = cfg.n_rois - 1;  // non-null ROI count

  const int n_commuter = static_cast<int>(std::llround(cfg.frac_commuter * cfg.n_users));
  const int n_roamer = static_cast<int>(std::llround(cfg.frac_roamer * cfg.n_users));

  const int slots_per_day =
      std::max<int>(1, static_cast<int>(86400 / cfg.slot_seconds));
  const int week_len = 7 * slots_per_day;

  for (int u = 0; u < cfg.n_users; ++u) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%04d", u);
    TraceMatrix tm(buf, cfg.n_rois, cfg.n_slots);
    Rng rng(derive_seed(cfg.seed, {hash_tag("synth"), static_cast<std::uint64_t>(u)}));
    std::string kind;

    if (u < n_commuter) {
      kind = "commuter";
      // Weekly template stamped over every week, plus low-rate noise events.
      const int routine = std::min(std::max(cfg.commuter_routine_rois, 1), nn);
      std::vector<std::uint32_t> rois_of_user =
          rng.sample_without_replacement(nn, routine);
      const int depart = 6 + static_cast<int>(rng.uniform_int(3));
      std::vector<std::pair<int, int>> weekly;  // (roi_row, slot within week)
      for (int d = 0; d < 7; ++d) {
        if ((ds.disc.origin_weekday + d) % 7 >= 5) continue;  // weekends off
        for (int k = 0; k < routine; ++k) {
          const int hour = depart + k * 9;  // morning at home, day at work
          const int slot = d * slots_per_day + hour * 3600 / static_cast<int>(cfg.slot_seconds);
          if (slot < week_len) {
            weekly.emplace_back(1 + static_cast<int>(rois_of_user[k]), slot);
          }
        }
      }
      for (int w = 0; w * week_len < cfg.n_slots; ++w) {
        for (const auto& [roi, s] : weekly) {
          const int t = w * week_len + s;
          if (t < cfg.n_slots) tm.set(roi, t, 1);
        }
      }
      for (int t = 0; t < cfg.n_slots; ++t) {
        if (rng.bernoulli(cfg.commuter_noise_prob)) {
          tm.set(1 + static_cast<int>(rng.uniform_int(nn)), t, 1);
        }
      }
    } else if (u < n_commuter + n_roamer) {
      kind = "roamer";
      for (int t = 0; t < cfg.n_slots; ++t) {
        if (rng.bernoulli(cfg.roamer_active_prob)) {
          tm.set(1 + static_cast<int>(rng.uniform_int(nn)), t, 1);
        }
      }
    } else {
      kind = "sparse";
      const std::int64_t cells = static_cast<std::int64_t>(nn) * cfg.n_slots;
      const int n_events =
          static_cast<int>(std::min<std::int64_t>(cfg.sparse_events_per_user, cells));
      for (int e = 0; e < n_events; ++e) {
        // Collisions allowed; the bound is "at most" n_events bits.
        const std::uint64_t cell = rng.uniform_int(static_cast<std::uint64_t>(cells));
        tm.set(1 + static_cast<int>(cell / cfg.n_slots),
               static_cast<int>(cell % cfg.n_slots), 1);
      }
    }

    tm.recompute_null_row();
    ds.archetypes[tm.user_id] = kind;
    ds.traces.push_back(std::move(tm));
  }
  return ds;
}

std::array<std::vector<std::string>, 3> mobility_tertiles(const Dataset& ds) {
  if (ds.n_users() < 3) {
    throw std::invalid_argument("mobility_tertiles requires at least 3 users");
  }
  std::vector<std::pair<int, std::string>> ranked;  // (-events, id)
  ranked.reserve(ds.n_users());
  for (const auto& tm : ds.traces) {
    ranked.emplace_back(-tm.event_count(), tm.user_id);
  }
  std::sort(ranked.begin(), ranked.end());

  const int n = ds.n_users();
  const int b1 = n / 3;
  const int b2 = 2 * n / 3;
  std::array<std::vector<std::string>, 3> out;
  for (int i = 0; i < n; ++i) {
    out[i < b1 ? 0 : (i < b2 ? 1 : 2)].push_back(ranked[i].second);
  }
  return out;
}

std::string dataset_to_json(const Dataset& ds) {
  nlohmann::ordered_json j;
  j["rois"] = ds.rois;
  j["slot_seconds"] = ds.disc.slot_seconds;
  j["time_origin"] = ds.disc.time_origin;
  j["n_slots"] = ds.disc.n_slots;
  j["origin_weekday"] = ds.disc.origin_weekday;
  nlohmann::ordered_json traces = nlohmann::ordered_json::object();
  for (const auto& tm : ds.traces) {
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (int s = 1; s < tm.n_rois; ++s) {
      for (int t = 0; t < tm.n_slots; ++t) {
        if (tm.get(s, t)) cells.push_back({s, t});
      }
    }
    traces[tm.user_id] = std::move(cells);
  }
  j["traces"] = std::move(traces);
  if (!ds.archetypes.empty()) {
    nlohmann::ordered_json arch = nlohmann::ordered_json::object();
    std::vector<std::string> ids;
    for (const auto& [k, _] : ds.archetypes) ids.push_back(k);
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) arch[id] = ds.archetypes.at(id);
    j["archetypes"] = std::move(arch);
  }
  return j.dump(2) + "\n";
}

Dataset dataset_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Dataset ds;
  ds.rois = j.at("rois").get<std::vector<std::string>>();
  if (ds.rois.empty() || ds.rois[0] != kNullRoiId) {
    throw std::runtime_error("dataset JSON: first ROI must be 'null'");
  }
  ds.disc.slot_seconds = j.at("slot_seconds").get<std::int64_t>();
  ds.disc.time_origin = j.at("time_origin").get<std::int64_t>();
  ds.disc.n_slots = j.at("n_slots").get<int>();
  ds.disc.origin_weekday = j.value("origin_weekday", 0);
  for (const auto& [uid, cells] : j.at("traces").items()) {
    TraceMatrix tm(uid, static_cast<int>(ds.rois.size()), ds.disc.n_slots);
    for (const auto& cell : cells) {
      const int s = cell.at(0).get<int>();
      const int t = cell.at(1).get<int>();
      if (s < 1 || s >= tm.n_rois || t < 0 || t >= tm.n_slots) {
        throw std::runtime_error("dataset JSON: cell out of range for user " + uid);
      }
      tm.set(s, t, 1);
    }
    tm.recompute_null_row();
    ds.traces.push_back(std::move(tm));
  }
  if (j.contains("archetypes")) {
    for (const auto& [uid, kind] : j.at("archetypes").items()) {
      ds.archetypes[uid] = kind.get<std::string>();
    }
  }
  return ds;
}

SynthConfig synth_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SynthConfig c;
  c.n_users = j.at("n_users").get<int>();
  c.n_rois = j.at("n_rois").get<int>();
  c.n_slots = j.at("n_slots").get<int>();
  c.slot_seconds = j.value("slot_seconds", c.slot_seconds);
  c.time_origin = j.value("time_origin", c.time_origin);
  c.frac_commuter = j.value("frac_commuter", c.frac_commuter);
  c.frac_roamer = j.value("frac_roamer", c.frac_roamer);
  c.frac_sparse = j.value("frac_sparse", c.frac_sparse);
  c.commuter_routine_rois = j.value("commuter_routine_rois", c.commuter_routine_rois);
  c.commuter_noise_prob = j.value("commuter_noise_prob", c.commuter_noise_prob);
  c.roamer_active_prob = j.value("roamer_active_prob", c.roamer_active_prob);
  c.sparse_events_per_user = j.value("sparse_events_per_user", c.sparse_events_per_user);
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace aggloc
