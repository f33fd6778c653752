#include "aggloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "aggloc/format.hpp"
#include "aggloc/rng.hpp"
#include "json.hpp"

namespace aggloc {

std::optional<double> UtilityReport::loss_tau() const {
  if (!kendall) return std::nullopt;
  return (1.0 - *kendall) / 2.0;
}

std::optional<double> UtilityReport::loss_r() const {
  if (!pearson) return std::nullopt;
  return (1.0 - *pearson) / 2.0;
}

double privacy_gain(double auc_raw, double auc_defended) {
  if (auc_raw > auc_defended && auc_defended >= 0.5) {
    return (auc_raw - auc_defended) / (auc_raw - 0.5);
  }
  return 0.0;
}

namespace {

void check_shapes(const RealSeries& a, const RealSeries& b) {
  if (a.n_rois() != b.n_rois() || a.n_slots() != b.n_slots()) {
    throw std::invalid_argument("utility metric: shape mismatch");
  }
}

// ROI indices with the largest raw row sums, ties by index ascending.
std::vector<int> top_rois_by_row_sum(const RealSeries& raw, int count) {
  std::vector<std::pair<double, int>> rows;
  for (int s = 0; s < raw.n_rois(); ++s) {
    double sum = 0;
    for (int t = 0; t < raw.n_slots(); ++t) sum += raw.at(s, t);
    rows.emplace_back(-sum, s);
  }
  std::sort(rows.begin(), rows.end());
  std::vector<int> out;
  for (int i = 0; i < count && i < static_cast<int>(rows.size()); ++i) {
    out.push_back(rows[i].second);
  }
  return out;
}

// Top-count non-null ROIs of one column, ties by ROI index ascending.
std::vector<int> hotspots_of_slot(const RealSeries& s, int t, int count) {
  std::vector<std::pair<double, int>> rois;
  for (int r = 1; r < s.n_rois(); ++r) {
    rois.emplace_back(-s.at(r, t), r);
  }
  std::sort(rois.begin(), rois.end());
  std::vector<int> out;
  for (int i = 0; i < count && i < static_cast<int>(rois.size()); ++i) {
    out.push_back(rois[i].second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double mre(const RealSeries& raw, const RealSeries& defended, double gamma,
           std::optional<double> top_fraction) {
  check_shapes(raw, defended);
  if (gamma <= 0) throw std::invalid_argument("mre: gamma must be > 0");
  std::vector<int> rois;
  if (top_fraction) {
    const int count = static_cast<int>(std::ceil(*top_fraction * raw.n_rois()));
    rois = top_rois_by_row_sum(raw, count);
  } else {
    rois.resize(raw.n_rois());
    std::iota(rois.begin(), rois.end(), 0);
  }
  double acc = 0;
  std::int64_t n = 0;
  for (int s : rois) {
    for (int t = 0; t < raw.n_slots(); ++t) {
      acc += std::fabs(defended.at(s, t) - raw.at(s, t)) /
             std::max(gamma, raw.at(s, t));
      ++n;
    }
  }
  return acc / n;
}

F1Result f1_hotspots(const RealSeries& raw, const RealSeries& defended,
                     double top_fraction) {
  check_shapes(raw, defended);
  if (top_fraction <= 0 || top_fraction > 1) {
    throw std::invalid_argument("f1_hotspots: top_fraction must be in (0,1]");
  }
  const int n_nonnull = raw.n_rois() - 1;
  const int count = static_cast<int>(std::ceil(top_fraction * n_nonnull));
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (int t = 0; t < raw.n_slots(); ++t) {
    const auto truth = hotspots_of_slot(raw, t, count);
    const auto pred = hotspots_of_slot(defended, t, count);
    std::vector<int> inter;
    std::set_intersection(truth.begin(), truth.end(), pred.begin(), pred.end(),
                          std::back_inserter(inter));
    tp += inter.size();
    fp += pred.size() - inter.size();
    fn += truth.size() - inter.size();
  }
  F1Result r;
  r.ppv = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.tpr = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = r.ppv + r.tpr > 0 ? 2.0 * r.ppv * r.tpr / (r.ppv + r.tpr) : 0.0;
  return r;
}

std::optional<double> kendall_tau(std::span<const double> a,
                                  std::span<const double> b) {
  const std::size_t n = a.size();
  if (n != b.size() || n < 2) {
    throw std::invalid_argument("kendall_tau: need equal lengths >= 2");
  }
  std::int64_t concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0 && db == 0) continue;  // tied in both: counted nowhere
      if (da == 0) {
        ++ties_a;
      } else if (db == 0) {
        ++ties_b;
      } else if ((da > 0) == (db > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double den_a = static_cast<double>(concordant + discordant + ties_a);
  const double den_b = static_cast<double>(concordant + discordant + ties_b);
  if (den_a == 0 || den_b == 0) return std::nullopt;
  return (concordant - discordant) / std::sqrt(den_a * den_b);
}

std::optional<double> kendall_hotspots(const RealSeries& raw,
                                       const RealSeries& defended,
                                       double top_fraction) {
  check_shapes(raw, defended);
  const int n_nonnull = raw.n_rois() - 1;
  const int count = static_cast<int>(std::ceil(top_fraction * n_nonnull));
  if (count < 2) return std::nullopt;  // a 1-element ranking has no pairs
  double acc = 0;
  int evaluated = 0;
  for (int t = 0; t < raw.n_slots(); ++t) {
    const auto spots = hotspots_of_slot(raw, t, count);
    std::vector<double> x, y;
    for (int s : spots) {
      x.push_back(raw.at(s, t));
      y.push_back(defended.at(s, t));
    }
    const auto tau = kendall_tau(x, y);
    if (tau) {
      acc += *tau;
      ++evaluated;
    }
  }
  if (evaluated == 0) return std::nullopt;
  return acc / evaluated;
}

namespace {

// KL(V||Z) in bits; terms with V_i = 0 contribute 0.
double kl_bits(std::span<const double> v, std::span<const double> z) {
  double d = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0) d += v[i] * std::log2(v[i] / z[i]);
  }
  return d;
}

// Non-null column as a probability distribution; negative released values
// are floored at 0 before normalizing. Empty when the mass is 0.
std::vector<double> column_dist(const RealSeries& s, int t) {
  std::vector<double> p;
  double total = 0;
  for (int r = 1; r < s.n_rois(); ++r) {
    const double v = std::max(s.at(r, t), 0.0);
    p.push_back(v);
    total += v;
  }
  if (total <= 0) return {};
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

double js_divergence(const RealSeries& raw, const RealSeries& defended) {
  check_shapes(raw, defended);
  double acc = 0;
  int evaluated = 0;
  for (int t = 0; t < raw.n_slots(); ++t) {
    const auto v = column_dist(raw, t);
    const auto w = column_dist(defended, t);
    if (v.empty() || w.empty()) continue;
    std::vector<double> z(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) z[i] = 0.5 * (v[i] + w[i]);
    acc += 0.5 * kl_bits(v, z) + 0.5 * kl_bits(w, z);
    ++evaluated;
  }
  if (evaluated == 0) {
    throw std::invalid_argument("js_divergence: every slot was skipped");
  }
  return acc / evaluated;
}

std::optional<double> pearson_r(const RealSeries& raw, const RealSeries& defended) {
  check_shapes(raw, defended);
  const std::size_t n = raw.values.size();
  double mean_a = 0, mean_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += raw.values[i];
    mean_b += defended.values[i];
  }
  mean_a /= n;
  mean_b /= n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ca = raw.values[i] - mean_a;
    const double cb = defended.values[i] - mean_b;
    num += ca * cb;
    da += ca * ca;
    db += cb * cb;
  }
  if (da == 0 || db == 0) return std::nullopt;
  return num / std::sqrt(da * db);
}

UtilityReport compute_utility(const RealSeries& raw, const RealSeries& defended,
                              double gamma, double top_fraction) {
  UtilityReport r;
  r.top_fraction = top_fraction;
  r.mre = mre(raw, defended, gamma);
  r.mre_top = mre(raw, defended, gamma, top_fraction);
  const F1Result f1 = f1_hotspots(raw, defended, top_fraction);
  r.f1 = f1.f1;
  r.ppv = f1.ppv;
  r.tpr = f1.tpr;
  r.kendall = kendall_hotspots(raw, defended, top_fraction);
  r.js = js_divergence(raw, defended);
  r.pearson = pearson_r(raw, defended);
  return r;
}

UtilityReport random_baseline(const AggregateSeries& raw, std::uint64_t seed,
                              double gamma, double top_fraction) {
  const RealSeries raw_s = RealSeries::from(raw);
  RealSeries guess = raw_s;
  Rng rng(derive_seed(seed, {hash_tag("baseline")}));
  const int n_nonnull = raw.n_rois() - 1;
  for (int t = 0; t < raw.n_slots(); ++t) {
    std::int64_t mass = 0;
    for (int s = 1; s < raw.n_rois(); ++s) {
      mass += raw.at(s, t);
      guess.at(s, t) = 0;
    }
    for (std::int64_t e = 0; e < mass; ++e) {
      guess.at(1 + static_cast<int>(rng.uniform_int(n_nonnull)), t) += 1;
    }
  }
  return compute_utility(raw_s, guess, gamma, top_fraction);
}

void finalize_pg_stats(TradeoffRecord& rec) {
  if (rec.pg.empty()) throw std::invalid_argument("finalize_pg_stats: no PG values");
  std::vector<double> sorted = rec.pg;
  std::sort(sorted.begin(), sorted.end());
  rec.pg_mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / sorted.size();
  const auto quantile = [&](double q) {
    const double pos = q * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  };
  rec.pg_q1 = quantile(0.25);
  rec.pg_median = quantile(0.5);
  rec.pg_q3 = quantile(0.75);
}

namespace {

std::string opt_str(const std::optional<double>& v) {
  return v ? fmt_double(*v) : "undefined";
}

}  // namespace

std::string tradeoff_to_csv(const std::vector<TradeoffRecord>& records) {
  std::ostringstream os;
  os << "mechanism,params,pg_mean,pg_q1,pg_median,pg_q3,loss_mre,loss_mre_top,"
        "loss_f1,loss_tau,loss_js,loss_r\n";
  for (const auto& r : records) {
    os << defense_name(r.defense) << "," << defense_params(r.defense) << ","
       << fmt_double(r.pg_mean) << "," << fmt_double(r.pg_q1) << ","
       << fmt_double(r.pg_median) << "," << fmt_double(r.pg_q3) << ","
       << opt_str(r.utility.loss_mre()) << "," << opt_str(r.utility.loss_mre_top())
       << "," << opt_str(r.utility.loss_f1()) << "," << opt_str(r.utility.loss_tau())
       << "," << opt_str(r.utility.loss_js()) << "," << opt_str(r.utility.loss_r())
       << "\n";
  }
  return os.str();
}

std::string utility_report_to_json(const UtilityReport& r) {
  nlohmann::ordered_json j;
  j["mre"] = r.mre;
  j["mre_top"] = r.mre_top;
  j["top_fraction"] = r.top_fraction;
  j["f1"] = r.f1;
  j["ppv"] = r.ppv;
  j["tpr"] = r.tpr;
  if (r.kendall) j["kendall_tau"] = *r.kendall; else j["kendall_tau"] = nullptr;
  j["js_divergence"] = r.js;
  if (r.pearson) j["pearson_r"] = *r.pearson; else j["pearson_r"] = nullptr;
  nlohmann::ordered_json losses;
  const auto put = [&](const char* k, std::optional<double> v) {
    if (v) losses[k] = *v; else losses[k] = nullptr;
  };
  put("mre", r.loss_mre());
  put("mre_top", r.loss_mre_top());
  put("f1", r.loss_f1());
  put("tau", r.loss_tau());
  put("js", r.loss_js());
  put("r", r.loss_r());
  j["utility_loss"] = std::move(losses);
  return j.dump(2) + "\n";
}

}  // namespace aggloc
