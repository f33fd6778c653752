#include "aggloc/aggregate.hpp"

#include <sstream>
#include <stdexcept>

#include "aggloc/format.hpp"

namespace aggloc {

RealSeries RealSeries::from(const AggregateSeries& a) {
  RealSeries s;
  s.rois = a.rois;
  s.window = a.window;
  s.m = a.m;
  s.values.assign(a.counts.begin(), a.counts.end());
  return s;
}

AggregateSeries aggregate(const Dataset& ds, std::span<const int> group,
                          SlotRange window) {
  if (group.empty()) throw std::invalid_argument("aggregate: empty group");
  if (window.begin < 0 || window.end > ds.n_slots() || window.len() < 1) {
    throw std::invalid_argument("aggregate: window out of range");
  }
  AggregateSeries out;
  out.rois = ds.rois;
  out.window = window;
  out.m = static_cast<int>(group.size());
  out.counts.assign(static_cast<std::size_t>(ds.n_rois()) * window.len(), 0);
  for (int u : group) {
    if (u < 0 || u >= ds.n_users()) {
      throw std::invalid_argument("aggregate: user index out of range");
    }
    const TraceMatrix& tm = ds.traces[u];
    for (int s = 0; s < ds.n_rois(); ++s) {
      for (int t = window.begin; t < window.end; ++t) {
        out.at(s, t - window.begin) += tm.get(s, t);
      }
    }
  }
  return out;
}

AggregateSeries aggregate(const Dataset& ds,
                          const std::vector<std::string>& group,
                          SlotRange window) {
  std::vector<int> idx;
  idx.reserve(group.size());
  for (const auto& id : group) idx.push_back(ds.user_index(id));
  return aggregate(ds, idx, window);
}

AggregateSeries remove_user(const AggregateSeries& agg, const TraceMatrix& trace) {
  if (trace.n_rois != agg.n_rois()) {
    throw std::invalid_argument("remove_user: ROI dimension mismatch");
  }
  AggregateSeries out = agg;
  out.m -= 1;
  for (int s = 0; s < agg.n_rois(); ++s) {
    for (int t = 0; t < agg.n_slots(); ++t) {
      out.at(s, t) -= trace.get(s, agg.window.begin + t);
      if (out.at(s, t) < 0) {
        throw std::invalid_argument(
            "remove_user: trace was not part of the aggregate (negative count)");
      }
    }
  }
  return out;
}

std::string aggregate_to_csv(const AggregateSeries& agg) {
  std::ostringstream os;
  os << "roi_id";
  for (int t = 0; t < agg.n_slots(); ++t) os << ",t" << (agg.window.begin + t);
  os << "\n";
  for (int s = 0; s < agg.n_rois(); ++s) {
    os << agg.rois[s];
    for (int t = 0; t < agg.n_slots(); ++t) os << "," << agg.at(s, t);
    os << "\n";
  }
  return os.str();
}

std::string series_to_csv(const RealSeries& s) {
  std::ostringstream os;
  os << "roi_id";
  for (int t = 0; t < s.n_slots(); ++t) os << ",t" << (s.window.begin + t);
  os << "\n";
  for (int r = 0; r < s.n_rois(); ++r) {
    os << s.rois[r];
    for (int t = 0; t < s.n_slots(); ++t) os << "," << fmt_double(s.at(r, t));
    os << "\n";
  }
  return os.str();
}

RealSeries series_from_csv(const std::string& text, int m) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("series CSV: empty");
  // Header: roi_id,t<begin>,...
  int begin = 0, n_slots = 0;
  {
    std::istringstream hs(line);
    std::string tok;
    std::getline(hs, tok, ',');
    bool first = true;
    while (std::getline(hs, tok, ',')) {
      if (tok.empty() || tok[0] != 't') throw std::runtime_error("series CSV: bad header");
      if (first) {
        begin = std::stoi(tok.substr(1));
        first = false;
      }
      ++n_slots;
    }
  }
  RealSeries s;
  s.window = {begin, begin + n_slots};
  s.m = m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::getline(ls, tok, ',');
    s.rois.push_back(tok);
    int got = 0;
    while (std::getline(ls, tok, ',')) {
      s.values.push_back(std::stod(tok));
      ++got;
    }
    if (got != n_slots) throw std::runtime_error("series CSV: ragged row");
  }
  return s;
}

}  // namespace aggloc
