#include "aggloc/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "aggloc/format.hpp"
#include "aggloc/rng.hpp"
#include "json.hpp"

namespace aggloc {

std::string defense_name(const DefenseConfig& cfg) {
  struct Visitor {
    std::string operator()(const IdentityDefense&) const { return "identity"; }
    std::string operator()(const SpgConfig&) const { return "spg"; }
    std::string operator()(const TgConfig&) const { return "tg"; }
    std::string operator()(const DgfrConfig&) const { return "dgfr"; }
    std::string operator()(const DgarConfig&) const { return "dgar"; }
    std::string operator()(const SscConfig&) const { return "ssc"; }
    std::string operator()(const SlpConfig&) const { return "slp"; }
    std::string operator()(const SmpConfig&) const { return "smp"; }
    std::string operator()(const PscConfig&) const { return "psc"; }
    std::string operator()(const FpaConfig&) const { return "fpa"; }
    std::string operator()(const SpscConfig&) const { return "spsc"; }
    std::string operator()(const SfpaConfig&) const { return "sfpa"; }
  };
  return std::visit(Visitor{}, cfg);
}

std::string defense_params(const DefenseConfig& cfg) {
  struct Visitor {
    std::string operator()(const IdentityDefense&) const { return ""; }
    std::string operator()(const SpgConfig& c) const {
      return "groups=" + std::to_string(std::set<std::string>([&] {
                             std::set<std::string> s;
                             for (const auto& [_, v] : c.partition) s.insert(v);
                             return s;
                           }()).size());
    }
    std::string operator()(const TgConfig& c) const {
      return "coarse_slot_seconds=" + std::to_string(c.coarse_slot_seconds);
    }
    std::string operator()(const DgfrConfig& c) const { return "x=" + std::to_string(c.x); }
    std::string operator()(const DgarConfig& c) const {
      return "x_prime=" + std::to_string(c.x_prime);
    }
    std::string operator()(const SscConfig& c) const { return "k=" + std::to_string(c.k); }
    std::string operator()(const SlpConfig& c) const { return "z=" + fmt_double(c.z); }
    std::string operator()(const SmpConfig& c) const { return "w=" + fmt_double(c.w); }
    std::string operator()(const PscConfig& c) const {
      return "k=" + std::to_string(c.k) + ";epsilon_prime=" + fmt_double(c.epsilon_prime);
    }
    std::string operator()(const FpaConfig& c) const {
      return "l=" + std::to_string(c.l) + ";epsilon=" + fmt_double(c.epsilon) +
             ";mode=" + (c.mode == SensitivityMode::WorstCase ? "worst-case" : "empirical");
    }
    std::string operator()(const SpscConfig& c) const {
      return "w=" + fmt_double(c.w) + ";k=" + std::to_string(c.k) +
             ";epsilon_prime=" + fmt_double(c.epsilon_prime);
    }
    std::string operator()(const SfpaConfig& c) const {
      return "w=" + fmt_double(c.w) + ";l=" + std::to_string(c.l) +
             ";epsilon=" + fmt_double(c.epsilon) +
             ";mode=" + (c.mode == SensitivityMode::WorstCase ? "worst-case" : "empirical");
    }
  };
  return std::visit(Visitor{}, cfg);
}

namespace {

SensitivityMode mode_from_string(const std::string& s) {
  if (s == "worst-case") return SensitivityMode::WorstCase;
  if (s == "empirical") return SensitivityMode::Empirical;
  throw std::invalid_argument("unknown sensitivity_mode: " + s);
}

std::string mode_to_string(SensitivityMode m) {
  return m == SensitivityMode::WorstCase ? "worst-case" : "empirical";
}

}  // namespace

DefenseConfig defense_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const std::string mech = j.at("mechanism").get<std::string>();
  if (mech == "identity" || mech == "none") return IdentityDefense{};
  if (mech == "spg") {
    SpgConfig c;
    for (const auto& [k, v] : j.at("partition").items()) {
      c.partition[k] = v.get<std::string>();
    }
    return c;
  }
  if (mech == "tg") return TgConfig{j.at("coarse_slot_seconds").get<std::int64_t>()};
  if (mech == "dgfr") return DgfrConfig{j.at("x").get<int>()};
  if (mech == "dgar") return DgarConfig{j.at("x_prime").get<int>()};
  if (mech == "ssc") return SscConfig{j.at("k").get<int>()};
  if (mech == "slp") return SlpConfig{j.at("z").get<double>()};
  if (mech == "smp") return SmpConfig{j.at("w").get<double>()};
  if (mech == "psc") {
    return PscConfig{j.at("k").get<int>(), j.at("epsilon_prime").get<double>()};
  }
  if (mech == "fpa") {
    return FpaConfig{j.at("l").get<int>(), j.at("epsilon").get<double>(),
                     mode_from_string(j.at("sensitivity_mode").get<std::string>()),
                     j.value("global_budget", false)};
  }
  if (mech == "spsc") {
    return SpscConfig{j.at("w").get<double>(), j.at("k").get<int>(),
                      j.at("epsilon_prime").get<double>()};
  }
  if (mech == "sfpa") {
    return SfpaConfig{j.at("w").get<double>(), j.at("l").get<int>(),
                      j.at("epsilon").get<double>(),
                      mode_from_string(j.at("sensitivity_mode").get<std::string>()),
                      j.value("global_budget", false)};
  }
  throw std::invalid_argument("unknown defense mechanism: " + mech);
}

std::string defense_to_json(const DefenseConfig& cfg) {
  nlohmann::ordered_json j;
  j["mechanism"] = defense_name(cfg);
  struct Visitor {
    nlohmann::ordered_json& j;
    void operator()(const IdentityDefense&) const {}
    void operator()(const SpgConfig& c) const {
      nlohmann::ordered_json p = nlohmann::ordered_json::object();
      for (const auto& [k, v] : c.partition) p[k] = v;
      j["partition"] = std::move(p);
    }
    void operator()(const TgConfig& c) const { j["coarse_slot_seconds"] = c.coarse_slot_seconds; }
    void operator()(const DgfrConfig& c) const { j["x"] = c.x; }
    void operator()(const DgarConfig& c) const { j["x_prime"] = c.x_prime; }
    void operator()(const SscConfig& c) const { j["k"] = c.k; }
    void operator()(const SlpConfig& c) const { j["z"] = c.z; }
    void operator()(const SmpConfig& c) const { j["w"] = c.w; }
    void operator()(const PscConfig& c) const {
      j["k"] = c.k;
      j["epsilon_prime"] = c.epsilon_prime;
    }
    void operator()(const FpaConfig& c) const {
      j["l"] = c.l;
      j["epsilon"] = c.epsilon;
      j["sensitivity_mode"] = mode_to_string(c.mode);
      j["global_budget"] = c.global_budget;
    }
    void operator()(const SpscConfig& c) const {
      j["w"] = c.w;
      j["k"] = c.k;
      j["epsilon_prime"] = c.epsilon_prime;
    }
    void operator()(const SfpaConfig& c) const {
      j["w"] = c.w;
      j["l"] = c.l;
      j["epsilon"] = c.epsilon;
      j["sensitivity_mode"] = mode_to_string(c.mode);
      j["global_budget"] = c.global_budget;
    }
  };
  std::visit(Visitor{j}, cfg);
  return j.dump();
}

std::map<std::string, std::string> spg_partition_from_csv(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("roi_id", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("partition CSV: missing comma at line " +
                               std::to_string(line_no));
    }
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

std::map<std::string, std::string> spg_grid_partition(const GridSpec& fine,
                                                      int coarse_rows,
                                                      int coarse_cols) {
  std::map<std::string, std::string> out;
  for (int r = 0; r < fine.rows; ++r) {
    for (int c = 0; c < fine.cols; ++c) {
      const int cr = r * coarse_rows / fine.rows;
      const int cc = c * coarse_cols / fine.cols;
      out["g" + std::to_string(r) + "_" + std::to_string(c)] =
          "G" + std::to_string(cr) + "_" + std::to_string(cc);
    }
  }
  return out;
}

Dataset spg(const Dataset& ds, const std::map<std::string, std::string>& partition) {
  // Super-ROI table: null first, then super ids in order of first appearance
  // over the source ROI order.
  std::vector<std::string> supers;
  std::vector<int> row_map(ds.n_rois(), 0);  // source row -> output row
  for (int s = 1; s < ds.n_rois(); ++s) {
    const auto it = partition.find(ds.rois[s]);
    if (it == partition.end()) {
      throw std::invalid_argument("spg: ROI missing from partition: " + ds.rois[s]);
    }
    const auto pos = std::find(supers.begin(), supers.end(), it->second);
    if (pos == supers.end()) {
      supers.push_back(it->second);
      row_map[s] = static_cast<int>(supers.size());
    } else {
      row_map[s] = static_cast<int>(pos - supers.begin()) + 1;
    }
  }

  Dataset out;
  out.disc = ds.disc;
  out.archetypes = ds.archetypes;
  out.rois.push_back(kNullRoiId);
  out.rois.insert(out.rois.end(), supers.begin(), supers.end());
  for (const auto& tm : ds.traces) {
    TraceMatrix merged(tm.user_id, out.n_rois(), tm.n_slots);
    for (int s = 1; s < tm.n_rois; ++s) {
      for (int t = 0; t < tm.n_slots; ++t) {
        if (tm.get(s, t)) merged.set(row_map[s], t, 1);
      }
    }
    merged.recompute_null_row();
    out.traces.push_back(std::move(merged));
  }
  return out;
}

Dataset tg(const Dataset& ds, std::int64_t coarse_slot_seconds) {
  if (coarse_slot_seconds <= 0 || coarse_slot_seconds % ds.disc.slot_seconds != 0) {
    throw std::invalid_argument(
        "tg: coarse slot length must be a positive multiple of the base slot");
  }
  const int factor = static_cast<int>(coarse_slot_seconds / ds.disc.slot_seconds);
  const int n_coarse = (ds.n_slots() + factor - 1) / factor;

  Dataset out;
  out.rois = ds.rois;
  out.archetypes = ds.archetypes;
  out.disc = ds.disc;
  out.disc.slot_seconds = coarse_slot_seconds;
  out.disc.n_slots = n_coarse;
  for (const auto& tm : ds.traces) {
    TraceMatrix coarse(tm.user_id, tm.n_rois, n_coarse);
    for (int s = 1; s < tm.n_rois; ++s) {
      for (int t = 0; t < tm.n_slots; ++t) {
        if (tm.get(s, t)) coarse.set(s, t / factor, 1);
      }
    }
    coarse.recompute_null_row();
    out.traces.push_back(std::move(coarse));
  }
  return out;
}

Dataset smp(const Dataset& ds, double w, std::uint64_t seed) {
  if (w < 0 || w > 1) throw std::invalid_argument("smp: w must be in [0,1]");
  Dataset out = ds;
  for (int u = 0; u < out.n_users(); ++u) {
    TraceMatrix& tm = out.traces[u];
    std::vector<std::pair<int, int>> cells;
    for (int s = 1; s < tm.n_rois; ++s) {
      for (int t = 0; t < tm.n_slots; ++t) {
        if (tm.get(s, t)) cells.emplace_back(s, t);
      }
    }
    const int n_remove = static_cast<int>(std::floor(w * cells.size()));
    if (n_remove == 0) continue;
    Rng rng(derive_seed(seed, {hash_tag("smp"), static_cast<std::uint64_t>(u)}));
    const auto picks = rng.sample_without_replacement(cells.size(), n_remove);
    for (auto p : picks) {
      tm.set(cells[p].first, cells[p].second, 0);
    }
    tm.recompute_null_row();
  }
  return out;
}

RealSeries dgfr(const RealSeries& agg, int x) {
  if (x < 2) throw std::invalid_argument("dgfr: x must be >= 2");
  RealSeries out = agg;
  for (double& v : out.values) {
    v = std::floor(v / x) * x + x / 2.0;
  }
  return out;
}

RealSeries dgar(const RealSeries& agg, int x_prime) {
  if (x_prime < 1) throw std::invalid_argument("dgar: x_prime must be >= 1");
  RealSeries out = agg;
  const int T = agg.n_slots();
  for (int s = 0; s < agg.n_rois(); ++s) {
    double lo = agg.at(s, 0), hi = agg.at(s, 0);
    for (int t = 1; t < T; ++t) {
      lo = std::min(lo, agg.at(s, t));
      hi = std::max(hi, agg.at(s, t));
    }
    if (lo == hi) continue;  // degenerate row stays as-is
    const double width = (hi - lo) / x_prime;
    for (int t = 0; t < T; ++t) {
      int idx = static_cast<int>(std::floor((agg.at(s, t) - lo) / width));
      idx = std::min(idx, x_prime - 1);
      out.at(s, t) = lo + (idx + 0.5) * width;
    }
  }
  return out;
}

RealSeries ssc(const RealSeries& agg, int k) {
  if (k < 1) throw std::invalid_argument("ssc: k must be >= 1");
  RealSeries out = agg;
  for (double& v : out.values) {
    if (v < k) v = 0;
  }
  return out;
}

RealSeries slp(const RealSeries& agg, double z) {
  if (z < 0 || z >= 1) throw std::invalid_argument("slp: z must be in [0,1)");
  RealSeries out = agg;
  const int S = agg.n_rois(), T = agg.n_slots();
  const int n_nonnull = S - 1;

  // Popularity on the input series; null row excluded.
  std::vector<std::pair<double, int>> roi_pop;
  for (int s = 1; s < S; ++s) {
    double sum = 0;
    for (int t = 0; t < T; ++t) sum += agg.at(s, t);
    roi_pop.emplace_back(sum, s);
  }
  std::vector<std::pair<double, int>> slot_pop;
  for (int t = 0; t < T; ++t) {
    double sum = 0;
    for (int s = 1; s < S; ++s) sum += agg.at(s, t);
    slot_pop.emplace_back(sum, t);
  }
  std::sort(roi_pop.begin(), roi_pop.end());
  std::sort(slot_pop.begin(), slot_pop.end());

  const int n_rois_out = static_cast<int>(std::floor(z * n_nonnull));
  const int n_slots_out = static_cast<int>(std::floor(z * T));
  for (int i = 0; i < n_rois_out; ++i) {
    const int s = roi_pop[i].second;
    for (int t = 0; t < T; ++t) out.at(s, t) = 0;
  }
  for (int i = 0; i < n_slots_out; ++i) {
    const int t = slot_pop[i].second;
    for (int s = 1; s < S; ++s) out.at(s, t) = 0;
  }
  return out;
}

RealSeries psc(const RealSeries& agg, int k, double epsilon_prime,
               std::uint64_t seed, bool noise_enabled) {
  if (k < 1) throw std::invalid_argument("psc: k must be >= 1");
  if (epsilon_prime <= 0) throw std::invalid_argument("psc: epsilon_prime must be > 0");
  RealSeries out = agg;
  Rng rng(derive_seed(seed, {hash_tag("psc")}));
  const double scale = 1.0 / epsilon_prime;
  for (double& v : out.values) {
    if (v < k) {
      if (noise_enabled) v += rng.laplace(scale);
      v = std::clamp(v, 0.0, static_cast<double>(agg.m));
    }
  }
  return out;
}

void dft_forward(std::span<const double> in, std::vector<double>& re,
                 std::vector<double>& im) {
  const int n = static_cast<int>(in.size());
  re.assign(n, 0.0);
  im.assign(n, 0.0);
  for (int f = 0; f < n; ++f) {
    double sr = 0, si = 0;
    for (int t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi * f * t / n;
      sr += in[t] * std::cos(angle);
      si += in[t] * std::sin(angle);
    }
    re[f] = sr;
    im[f] = si;
  }
}

std::vector<double> dft_inverse_real(std::span<const double> re,
                                     std::span<const double> im) {
  const int n = static_cast<int>(re.size());
  std::vector<double> out(n, 0.0);
  for (int t = 0; t < n; ++t) {
    double s = 0;
    for (int f = 0; f < n; ++f) {
      const double angle = 2.0 * std::numbers::pi * f * t / n;
      s += re[f] * std::cos(angle) - im[f] * std::sin(angle);
    }
    out[t] = s / n;
  }
  return out;
}

std::vector<double> empirical_row_sensitivity(const Dataset& ds, SlotRange window) {
  std::vector<double> out(ds.n_rois(), 0.0);
  for (const auto& tm : ds.traces) {
    for (int s = 0; s < ds.n_rois(); ++s) {
      int bits = 0;
      for (int t = window.begin; t < window.end; ++t) bits += tm.get(s, t);
      out[s] = std::max(out[s], std::sqrt(static_cast<double>(bits)));
    }
  }
  return out;
}

RealSeries fpa(const RealSeries& agg, const FpaConfig& cfg,
               std::span<const double> delta_f2, std::uint64_t seed,
               bool noise_enabled) {
  const int T = agg.n_slots();
  if (cfg.l < 1 || cfg.l > T) {
    throw std::invalid_argument("fpa: l must be in [1, |T'|]");
  }
  if (cfg.epsilon <= 0) throw std::invalid_argument("fpa: epsilon must be > 0");
  if (!delta_f2.empty() && static_cast<int>(delta_f2.size()) != agg.n_rois()) {
    throw std::invalid_argument("fpa: delta_f2 size mismatch");
  }
  const double worst_case = std::sqrt(static_cast<double>(T));
  const double eps_row =
      cfg.global_budget ? cfg.epsilon / agg.n_rois() : cfg.epsilon;

  RealSeries out = agg;
  std::vector<double> re, im, row(T);
  for (int s = 0; s < agg.n_rois(); ++s) {
    for (int t = 0; t < T; ++t) row[t] = agg.at(s, t);
    dft_forward(row, re, im);
    const double sens = delta_f2.empty() ? worst_case : delta_f2[s];
    const double scale = std::sqrt(static_cast<double>(cfg.l)) * sens / eps_row;
    Rng rng(derive_seed(seed, {hash_tag("fpa"), static_cast<std::uint64_t>(s)}));
    for (int f = 0; f < T; ++f) {
      if (f < cfg.l) {
        if (noise_enabled) {
          re[f] += rng.laplace(scale);
          im[f] += rng.laplace(scale);
        }
      } else {
        re[f] = 0;
        im[f] = 0;
      }
    }
    const std::vector<double> rec = dft_inverse_real(re, im);
    for (int t = 0; t < T; ++t) out.at(s, t) = rec[t];
  }
  return out;
}

DefensePipeline::DefensePipeline(DefenseConfig cfg, bool disable_noise_for_tests)
    : cfg_(std::move(cfg)), disable_noise_(disable_noise_for_tests) {}

const Dataset& DefensePipeline::prepared_dataset() const {
  if (transformed_) return *transformed_;
  if (!source_) throw std::logic_error("DefensePipeline: prepare() not called");
  return *source_;
}

void DefensePipeline::prepare(const Dataset& ds, std::uint64_t run_seed) {
  source_ = &ds;
  transformed_.reset();
  if (const auto* c = std::get_if<SpgConfig>(&cfg_)) {
    transformed_ = std::make_shared<Dataset>(spg(ds, c->partition));
  } else if (const auto* c = std::get_if<TgConfig>(&cfg_)) {
    transformed_ = std::make_shared<Dataset>(tg(ds, c->coarse_slot_seconds));
  } else if (const auto* c = std::get_if<SmpConfig>(&cfg_)) {
    transformed_ = std::make_shared<Dataset>(smp(ds, c->w, run_seed));
  } else if (const auto* c = std::get_if<SpscConfig>(&cfg_)) {
    transformed_ = std::make_shared<Dataset>(smp(ds, c->w, run_seed));
  } else if (const auto* c = std::get_if<SfpaConfig>(&cfg_)) {
    transformed_ = std::make_shared<Dataset>(smp(ds, c->w, run_seed));
  }
}

RealSeries DefensePipeline::apply_group(std::span<const int> group,
                                        SlotRange window,
                                        std::uint64_t sample_seed) const {
  const Dataset& ds = prepared_dataset();
  SlotRange w = window;
  if (const auto* c = std::get_if<TgConfig>(&cfg_)) {
    // Windows arrive in base-slot units; map them onto the coarse axis.
    const int factor = static_cast<int>(c->coarse_slot_seconds / source_->disc.slot_seconds);
    w = {window.begin / factor, std::min((window.end + factor - 1) / factor, ds.n_slots())};
  }
  RealSeries series = RealSeries::from(aggregate(ds, group, w));
  return apply_series(series, sample_seed);
}

RealSeries DefensePipeline::apply_series(const RealSeries& agg,
                                         std::uint64_t sample_seed) const {
  if (std::holds_alternative<IdentityDefense>(cfg_) ||
      std::holds_alternative<SpgConfig>(cfg_) ||
      std::holds_alternative<TgConfig>(cfg_) ||
      std::holds_alternative<SmpConfig>(cfg_)) {
    return agg;
  }
  if (const auto* c = std::get_if<DgfrConfig>(&cfg_)) return dgfr(agg, c->x);
  if (const auto* c = std::get_if<DgarConfig>(&cfg_)) return dgar(agg, c->x_prime);
  if (const auto* c = std::get_if<SscConfig>(&cfg_)) return ssc(agg, c->k);
  if (const auto* c = std::get_if<SlpConfig>(&cfg_)) return slp(agg, c->z);
  if (const auto* c = std::get_if<PscConfig>(&cfg_)) {
    return psc(agg, c->k, c->epsilon_prime, sample_seed, !disable_noise_);
  }
  if (const auto* c = std::get_if<SpscConfig>(&cfg_)) {
    return psc(agg, c->k, c->epsilon_prime, sample_seed, !disable_noise_);
  }
  if (const auto* c = std::get_if<FpaConfig>(&cfg_)) {
    std::vector<double> sens;
    if (c->mode == SensitivityMode::Empirical) {
      sens = empirical_row_sensitivity(prepared_dataset(), agg.window);
    }
    return fpa(agg, *c, sens, sample_seed, !disable_noise_);
  }
  if (const auto* c = std::get_if<SfpaConfig>(&cfg_)) {
    FpaConfig fc{c->l, c->epsilon, c->mode, c->global_budget};
    std::vector<double> sens;
    if (c->mode == SensitivityMode::Empirical) {
      // Sensitivity on the sampled traces: sampling shrinks user norms.
      sens = empirical_row_sensitivity(prepared_dataset(), agg.window);
    }
    return fpa(agg, fc, sens, sample_seed, !disable_noise_);
  }
  throw std::logic_error("DefensePipeline: unhandled mechanism");
}

}  // namespace aggloc
