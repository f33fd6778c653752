#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "aggloc/evaluation.hpp"
#include "aggloc/rng.hpp"
#include "doctest.h"

using namespace aggloc;

namespace {

RealSeries series_of(std::vector<std::vector<double>> rows, int m = 100) {
  RealSeries s;
  s.m = m;
  s.window = {0, static_cast<int>(rows[0].size())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.rois.push_back(i == 0 ? "null" : "r" + std::to_string(i));
    s.values.insert(s.values.end(), rows[i].begin(), rows[i].end());
  }
  return s;
}

RealSeries random_series(int rois, int slots, Rng& rng, double scale = 20.0) {
  std::vector<std::vector<double>> rows(rois);
  for (auto& r : rows) {
    for (int t = 0; t < slots; ++t) r.push_back(std::floor(rng.uniform() * scale));
  }
  return series_of(rows);
}

}  // namespace

TEST_CASE("privacy gain: hand cases and monotonicity") {
  CHECK(privacy_gain(0.9, 0.5) == doctest::Approx(1.0));
  CHECK(privacy_gain(0.9, 0.9) == 0.0);
  CHECK(privacy_gain(0.7, 0.8) == 0.0);
  CHECK(privacy_gain(0.9, 0.4) == 0.0);  // below random guess: no defined gain
  CHECK(privacy_gain(0.5, 0.4) == 0.0);
  double prev = 2.0;
  for (double def = 0.5; def <= 0.85; def += 0.05) {
    const double pg = privacy_gain(0.85, def);
    CHECK(pg <= prev);
    CHECK(pg >= 0.0);
    CHECK(pg <= 1.0);
    prev = pg;
  }
}

TEST_CASE("mre: identity, hand values, and the sanity bound") {
  const RealSeries raw = series_of({{0}, {10}});
  CHECK(mre(raw, raw, 1.0) == 0.0);
  const RealSeries off = series_of({{0}, {15}});
  // Cells: null |0-0|/1 = 0 and |15-10|/10 = 0.5, mean = 0.25.
  CHECK(mre(raw, off, 1.0) == doctest::Approx(0.25));

  const RealSeries zero = series_of({{1}, {0}});
  const RealSeries one = series_of({{1}, {1}});
  CHECK(mre(zero, one, 1.0) == doctest::Approx(0.5));  // |1-0|/max(1,0) over 2 cells

  CHECK_THROWS_AS(mre(raw, series_of({{0, 0}, {1, 1}}), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mre(raw, off, 0.0), std::invalid_argument);
}

TEST_CASE("mre: top-fraction restriction picks the largest raw rows") {
  // Row sums: null=0, r1=100, r2=1. Top 50% of 3 rois -> ceil(1.5)=2 rois: r1 and null?
  // Sums sorted desc: r1(100), r2(1), null(0) -> top 2 are r1, r2.
  const RealSeries raw = series_of({{0, 0}, {60, 40}, {1, 0}});
  RealSeries def = raw;
  def.at(0, 0) = 10;   // error on the null row only
  const double full = mre(raw, def, 1.0);
  const double top = mre(raw, def, 1.0, 0.5);
  CHECK(full > 0.0);
  CHECK(top == 0.0);
}

TEST_CASE("f1 hotspots: identity, disjoint, and brute-force oracle") {
  Rng rng(1);
  const RealSeries raw = random_series(9, 6, rng);
  CHECK(f1_hotspots(raw, raw, 0.25).f1 == doctest::Approx(1.0));

  // Disjoint: defended inverts the counts so top sets cannot overlap when
  // the fraction selects a strict minority and all counts are distinct.
  RealSeries raw_d = series_of({{0, 0}, {4, 4}, {3, 3}, {2, 2}, {1, 1}});
  RealSeries inv = series_of({{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}});
  CHECK(f1_hotspots(raw_d, inv, 0.25).f1 == 0.0);

  for (int rep = 0; rep < 10; ++rep) {
    const RealSeries a = random_series(9, 6, rng);
    const RealSeries b = random_series(9, 6, rng);
    const double f = 0.25;
    const int count = static_cast<int>(std::ceil(f * 8));
    long tp = 0, fp = 0, fn = 0;
    for (int t = 0; t < 6; ++t) {
      auto top_set = [&](const RealSeries& s) {
        std::vector<std::pair<double, int>> v;
        for (int r = 1; r < 9; ++r) v.emplace_back(-s.at(r, t), r);
        std::sort(v.begin(), v.end());
        std::vector<int> out;
        for (int i = 0; i < count; ++i) out.push_back(v[i].second);
        std::sort(out.begin(), out.end());
        return out;
      };
      const auto ta = top_set(a), tb = top_set(b);
      std::vector<int> inter;
      std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(),
                            std::back_inserter(inter));
      tp += inter.size();
      fp += tb.size() - inter.size();
      fn += ta.size() - inter.size();
    }
    const double ppv = static_cast<double>(tp) / (tp + fp);
    const double tpr = static_cast<double>(tp) / (tp + fn);
    const double expect = ppv + tpr > 0 ? 2 * ppv * tpr / (ppv + tpr) : 0.0;
    CHECK(f1_hotspots(a, b, f).f1 == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("kendall tau: endpoints and undefined markers") {
  const std::vector<double> a = {1, 2, 3, 4};
  const std::vector<double> rev = {4, 3, 2, 1};
  CHECK(*kendall_tau(a, a) == doctest::Approx(1.0));
  CHECK(*kendall_tau(a, rev) == doctest::Approx(-1.0));
  const std::vector<double> flat = {5, 5, 5, 5};
  CHECK(!kendall_tau(a, flat).has_value());
  CHECK(!kendall_tau(flat, a).has_value());
  // Tied in both everywhere: no classified pairs at all.
  CHECK(!kendall_tau(flat, flat).has_value());
  CHECK_THROWS_AS(kendall_tau(std::vector<double>{1}, std::vector<double>{1}),
                  std::invalid_argument);
}

TEST_CASE("kendall tau: matches a run-counting formulation on tied data") {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 3 + static_cast<int>(rng.uniform_int(10));
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = std::floor(rng.uniform() * 4);  // heavy ties
      b[i] = std::floor(rng.uniform() * 4);
    }
    // Independent route: numerator from sign products, denominators from
    // total pair counts minus any-tie counts in the other input.
    long num = 0, ties_a_any = 0, ties_b_any = 0;
    const long n0 = static_cast<long>(n) * (n - 1) / 2;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double da = a[i] - a[j], db = b[i] - b[j];
        if (da == 0) ++ties_a_any;
        if (db == 0) ++ties_b_any;
        const int sa = da > 0 ? 1 : (da < 0 ? -1 : 0);
        const int sb = db > 0 ? 1 : (db < 0 ? -1 : 0);
        num += sa * sb;
      }
    }
    const double den_a = static_cast<double>(n0 - ties_b_any);
    const double den_b = static_cast<double>(n0 - ties_a_any);
    const auto tau = kendall_tau(a, b);
    if (den_a == 0 || den_b == 0) {
      CHECK(!tau.has_value());
    } else {
      REQUIRE(tau.has_value());
      CHECK(*tau == doctest::Approx(num / std::sqrt(den_a * den_b)).epsilon(1e-12));
    }
  }
}

TEST_CASE("kendall hotspots: identity gives 1, averaged over slots") {
  Rng rng(11);
  // Continuous values: ties almost surely absent.
  std::vector<std::vector<double>> rows(11);
  for (auto& r : rows) {
    for (int t = 0; t < 5; ++t) r.push_back(rng.uniform() * 50);
  }
  const RealSeries raw = series_of(rows);
  const auto tau = kendall_hotspots(raw, raw, 0.5);
  REQUIRE(tau.has_value());
  CHECK(*tau == doctest::Approx(1.0));
}

TEST_CASE("js divergence: identity, disjoint support, symmetry, bound") {
  const RealSeries raw = series_of({{0}, {3}, {5}});
  CHECK(js_divergence(raw, raw) == 0.0);

  const RealSeries v = series_of({{0}, {1}, {0}});
  const RealSeries w = series_of({{0}, {0}, {1}});
  CHECK(js_divergence(v, w) == doctest::Approx(1.0));

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const RealSeries a = random_series(6, 4, rng);
    const RealSeries b = random_series(6, 4, rng);
    const double ab = js_divergence(a, b);
    CHECK(ab == doctest::Approx(js_divergence(b, a)).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0 + 1e-12);
  }

  const RealSeries empty = series_of({{5}, {0}, {0}});
  CHECK_THROWS_AS(js_divergence(empty, raw), std::invalid_argument);
}

TEST_CASE("pearson: identity, anti-correlation, two-pass oracle, undefined") {
  Rng rng(13);
  const RealSeries a = random_series(5, 6, rng);
  CHECK(*pearson_r(a, a) == doctest::Approx(1.0));

  RealSeries neg = a;
  for (double& x : neg.values) x = 100.0 - x;
  CHECK(*pearson_r(a, neg) == doctest::Approx(-1.0));

  for (int rep = 0; rep < 10; ++rep) {
    const RealSeries x = random_series(5, 6, rng);
    const RealSeries y = random_series(5, 6, rng);
    const std::size_t n = x.values.size();
    double mx = std::accumulate(x.values.begin(), x.values.end(), 0.0) / n;
    double my = std::accumulate(y.values.begin(), y.values.end(), 0.0) / n;
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      num += (x.values[i] - mx) * (y.values[i] - my);
      dx += (x.values[i] - mx) * (x.values[i] - mx);
      dy += (y.values[i] - my) * (y.values[i] - my);
    }
    CHECK(*pearson_r(x, y) ==
          doctest::Approx(num / std::sqrt(dx * dy)).epsilon(1e-10));
  }

  RealSeries flat = a;
  std::fill(flat.values.begin(), flat.values.end(), 2.0);
  CHECK(!pearson_r(a, flat).has_value());
}

TEST_CASE("metrics are invariant under a shared ROI permutation") {
  // Continuous values: the hotspot tie-break (ROI index) never engages, so
  // the permutation cannot change any metric.
  Rng rng(17);
  std::vector<std::vector<double>> ra(7), rb(7);
  for (int s = 0; s < 7; ++s) {
    for (int t = 0; t < 5; ++t) {
      ra[s].push_back(rng.uniform() * 20);
      rb[s].push_back(rng.uniform() * 20);
    }
  }
  const RealSeries a = series_of(ra);
  const RealSeries b = series_of(rb);
  // Swap two non-null rows in both inputs.
  auto swap_rows = [](RealSeries s, int r1, int r2) {
    for (int t = 0; t < s.n_slots(); ++t) std::swap(s.at(r1, t), s.at(r2, t));
    return s;
  };
  const RealSeries ap = swap_rows(a, 2, 5);
  const RealSeries bp = swap_rows(b, 2, 5);
  CHECK(mre(a, b, 1.0) == doctest::Approx(mre(ap, bp, 1.0)).epsilon(1e-12));
  CHECK(f1_hotspots(a, b, 0.3).f1 ==
        doctest::Approx(f1_hotspots(ap, bp, 0.3).f1).epsilon(1e-12));
  CHECK(js_divergence(a, b) == doctest::Approx(js_divergence(ap, bp)).epsilon(1e-12));
  CHECK(*pearson_r(a, b) == doctest::Approx(*pearson_r(ap, bp)).epsilon(1e-12));
}

TEST_CASE("utility loss mappings and report JSON") {
  UtilityReport r;
  r.mre = 0.2;
  r.f1 = 0.968;
  r.kendall = -1.0;
  r.js = 0.1;
  r.pearson = 1.0;
  CHECK(*r.loss_f1() == doctest::Approx(0.032));
  CHECK(*r.loss_tau() == doctest::Approx(1.0));
  CHECK(*r.loss_r() == doctest::Approx(0.0));
  r.kendall.reset();
  CHECK(!r.loss_tau().has_value());
  const std::string j = utility_report_to_json(r);
  CHECK(j.find("\"kendall_tau\": null") != std::string::npos);
  CHECK(j.find("\"f1\": 0.968") != std::string::npos);
}

TEST_CASE("random baseline: uniform columns give small JS at large m") {
  AggregateSeries agg;
  const int rois = 51, slots = 4;
  agg.rois.push_back("null");
  for (int r = 1; r < rois; ++r) agg.rois.push_back("r" + std::to_string(r));
  agg.window = {0, slots};
  agg.m = 10000;
  agg.counts.assign(static_cast<std::size_t>(rois) * slots, 200);
  for (int t = 0; t < slots; ++t) agg.counts[t] = 0;  // null row
  const UtilityReport r = random_baseline(agg, 1, 1.0, 0.1);
  CHECK(r.js < 0.05);
}

TEST_CASE("random baseline: F1 approaches the top fraction; deterministic") {
  AggregateSeries agg;
  const int rois = 101, slots = 10;
  agg.rois.push_back("null");
  for (int r = 1; r < rois; ++r) agg.rois.push_back("r" + std::to_string(r));
  agg.window = {0, slots};
  agg.m = 5000;
  agg.counts.assign(static_cast<std::size_t>(rois) * slots, 0);
  Rng rng(23);
  for (int r = 1; r < rois; ++r) {
    for (int t = 0; t < slots; ++t) {
      agg.counts[static_cast<std::size_t>(r) * slots + t] =
          static_cast<std::int32_t>(rng.uniform_int(40));
    }
  }
  double f1_sum = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    f1_sum += random_baseline(agg, seed, 1.0, 0.1).f1;
  }
  CHECK(f1_sum / 20 == doctest::Approx(0.1).epsilon(0.5));

  const UtilityReport a = random_baseline(agg, 9, 1.0, 0.1);
  const UtilityReport b = random_baseline(agg, 9, 1.0, 0.1);
  CHECK(a.mre == b.mre);
  CHECK(a.f1 == b.f1);
  CHECK(a.js == b.js);
}

TEST_CASE("PG quartiles use linear interpolation; CSV shows undefined gaps") {
  TradeoffRecord rec;
  rec.defense = IdentityDefense{};
  rec.pg = {0.0, 1.0, 0.5, 0.25};
  finalize_pg_stats(rec);
  CHECK(rec.pg_mean == doctest::Approx(0.4375));
  CHECK(rec.pg_q1 == doctest::Approx(0.1875));
  CHECK(rec.pg_median == doctest::Approx(0.375));
  CHECK(rec.pg_q3 == doctest::Approx(0.625));

  rec.utility.kendall.reset();
  rec.utility.pearson = 0.5;
  const std::string csv = tradeoff_to_csv({rec});
  CHECK(csv.rfind("mechanism,params,", 0) == 0);
  CHECK(csv.find("undefined") != std::string::npos);

  TradeoffRecord bad;
  bad.defense = IdentityDefense{};
  CHECK_THROWS_AS(finalize_pg_stats(bad), std::invalid_argument);
}
