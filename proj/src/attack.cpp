#include "aggloc/attack.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "aggloc/defense.hpp"
#include "aggloc/format.hpp"
#include "aggloc/rng.hpp"

namespace aggloc {

std::string prior_name(const PriorSpec& prior) {
  if (std::holds_alternative<SubsetLocations>(prior)) return "subset_locations";
  if (std::holds_alternative<SameGroups>(prior)) return "same_groups";
  return "different_groups";
}

namespace {

// Balanced in/out split; an odd total rounds toward "out".
std::pair<int, int> balance(int total) {
  const int n_in = total / 2;
  return {n_in, total - n_in};
}

// Draw one roster of size m from `pool` (indices), either containing the
// target or excluding it.
std::vector<int> draw_roster(const std::vector<int>& pool_without_target,
                             int target, int m, bool include_target, Rng& rng) {
  const int others = include_target ? m - 1 : m;
  if (static_cast<int>(pool_without_target.size()) < others) {
    throw std::invalid_argument(
        "build_samples: pool too small to form groups of size m");
  }
  auto picks = rng.sample_without_replacement(pool_without_target.size(), others);
  std::vector<int> roster;
  roster.reserve(m);
  if (include_target) roster.push_back(target);
  for (auto p : picks) roster.push_back(pool_without_target[p]);
  return roster;
}

SampleSet draw_set(const std::vector<int>& pool_without_target, int target,
                   int m, int n_in, int n_out, SlotRange window, Rng& rng) {
  SampleSet set;
  set.window = window;
  // Interleave labels so any prefix is near-balanced.
  for (int i = 0; i < n_in + n_out; ++i) {
    const bool label = (i % 2 == 0) && (i / 2 < n_in);
    set.samples.push_back(
        {draw_roster(pool_without_target, target, m, label, rng), label});
  }
  return set;
}

}  // namespace

std::pair<SampleSet, SampleSet> build_samples(const Dataset& ds, int target,
                                              const PriorSpec& prior,
                                              const GameConfig& cfg) {
  if (target < 0 || target >= ds.n_users()) {
    throw std::invalid_argument("build_samples: target out of range");
  }
  if (cfg.m < 2 || cfg.m >= ds.n_users()) {
    throw std::invalid_argument("build_samples: require 2 <= m < |U|");
  }
  Rng rng(derive_seed(cfg.seed, {hash_tag("samples"), static_cast<std::uint64_t>(target)}));

  std::vector<int> all_without_target;
  for (int u = 0; u < ds.n_users(); ++u) {
    if (u != target) all_without_target.push_back(u);
  }

  if (const auto* sl = std::get_if<SubsetLocations>(&prior)) {
    if (sl->alpha <= 0 || sl->alpha > 1) {
      throw std::invalid_argument("SubsetLocations: alpha must be in (0,1]");
    }
    // Known pool: ceil(alpha * |U|) users, forced to contain the target.
    const int pool_size = static_cast<int>(
        std::ceil(sl->alpha * ds.n_users()));
    std::vector<int> pool_without_target;
    if (pool_size >= ds.n_users()) {
      pool_without_target = all_without_target;
    } else {
      auto picks = rng.sample_without_replacement(all_without_target.size(),
                                                  std::max(0, pool_size - 1));
      for (auto p : picks) pool_without_target.push_back(all_without_target[p]);
      std::sort(pool_without_target.begin(), pool_without_target.end());
    }
    const int n_train = static_cast<int>(std::llround(cfg.n_samples * cfg.train_fraction));
    const int n_test = cfg.n_samples - n_train;
    const auto [tr_in, tr_out] = balance(n_train);
    const auto [te_in, te_out] = balance(n_test);
    // Adversary trains on the known pool; the challenger draws from the full
    // population for the inference window.
    SampleSet train = draw_set(pool_without_target, target, cfg.m, tr_in, tr_out,
                               cfg.t_obs, rng);
    SampleSet test = draw_set(all_without_target, target, cfg.m, te_in, te_out,
                              cfg.t_inf, rng);
    return {std::move(train), std::move(test)};
  }

  const int beta = std::holds_alternative<SameGroups>(prior)
                       ? std::get<SameGroups>(prior).beta
                       : std::get<DifferentGroups>(prior).beta;
  if (beta < 2) throw std::invalid_argument("group priors require beta >= 2");
  const auto [n_in, n_out] = balance(beta);
  SampleSet train = draw_set(all_without_target, target, cfg.m, n_in, n_out,
                             cfg.t_obs, rng);
  SampleSet test;
  if (std::holds_alternative<SameGroups>(prior)) {
    // Same rosters, observed over the inference window.
    test.window = cfg.t_inf;
    test.samples = train.samples;
  } else {
    test = draw_set(all_without_target, target, cfg.m, n_in, n_out, cfg.t_inf, rng);
  }
  return {std::move(train), std::move(test)};
}

PcaModel fit_pca(const FeatureMatrix& train, double variance_target,
                 int max_components) {
  const int n = train.n, d = train.d;
  if (n < 2) throw std::invalid_argument("fit_pca: need at least 2 samples");
  if (d < 1) throw std::invalid_argument("fit_pca: need d >= 1");
  if (max_components < 1) throw std::invalid_argument("fit_pca: max_components >= 1");

  PcaModel model;
  model.d = d;
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) model.mean[j] += train.at(i, j);
  }
  for (double& mu : model.mean) mu /= n;
  std::vector<double> var(d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const double c = train.at(i, j) - model.mean[j];
      var[j] += c * c;
    }
  }
  for (int j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / (n - 1));
    // Zero-variance features stay centered only.
    model.scale[j] = sd > 0 ? sd : 1.0;
  }

  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      X(i, j) = (train.at(i, j) - model.mean[j]) / model.scale[j];
    }
  }

  Eigen::VectorXd eigvals;
  Eigen::MatrixXd comps;  // columns = components
  if (d <= n) {
    const Eigen::MatrixXd cov = X.transpose() * X / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    eigvals = es.eigenvalues().reverse();
    comps = es.eigenvectors().rowwise().reverse();
  } else {
    // Gram trick: eigenvectors of X X^T / (n-1), lifted back to d dims.
    const Eigen::MatrixXd gram = X * X.transpose() / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const Eigen::VectorXd lam = es.eigenvalues().reverse();
    const Eigen::MatrixXd U = es.eigenvectors().rowwise().reverse();
    const int r = std::min(n, d);
    eigvals.resize(r);
    comps.resize(d, r);
    for (int j = 0; j < r; ++j) {
      eigvals(j) = std::max(lam(j), 0.0);
      if (lam(j) > 1e-12) {
        comps.col(j) = X.transpose() * U.col(j) / std::sqrt(lam(j) * (n - 1));
        comps.col(j).normalize();
      } else {
        comps.col(j).setZero();
      }
    }
  }

  double total = 0;
  for (int j = 0; j < eigvals.size(); ++j) total += std::max(eigvals(j), 0.0);
  model.total_variance = total;

  int k = 1;
  if (total > 1e-12) {
    double acc = 0;
    k = 0;
    for (int j = 0; j < eigvals.size(); ++j) {
      acc += std::max(eigvals(j), 0.0);
      ++k;
      if (acc / total >= variance_target) break;
    }
  }
  k = std::min(k, max_components);
  // Drop trailing zero directions from the Gram path (they are not unit
  // vectors); keep at least one component.
  while (k > 1 && comps.col(k - 1).norm() < 0.5) --k;
  if (comps.col(0).norm() < 0.5) {
    // Degenerate data with no variance at all: emit an arbitrary unit vector
    // so the model still satisfies orthonormality.
    comps.col(0).setZero();
    comps(0, 0) = 1.0;
  }

  model.k = k;
  model.components.assign(static_cast<std::size_t>(k) * d, 0.0);
  model.explained_variance.assign(k, 0.0);
  for (int j = 0; j < k; ++j) {
    model.explained_variance[j] = std::max(eigvals(j), 0.0);
    for (int i = 0; i < d; ++i) {
      model.components[static_cast<std::size_t>(j) * d + i] = comps(i, j);
    }
  }
  return model;
}

FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& features) {
  if (features.d != model.d) {
    throw std::invalid_argument("pca_transform: dimension mismatch");
  }
  FeatureMatrix out;
  out.n = features.n;
  out.d = model.k;
  out.x.assign(static_cast<std::size_t>(out.n) * out.d, 0.0);
  for (int i = 0; i < features.n; ++i) {
    for (int j = 0; j < model.k; ++j) {
      double dot = 0;
      const double* comp = model.components.data() + static_cast<std::size_t>(j) * model.d;
      for (int f = 0; f < model.d; ++f) {
        dot += comp[f] * (features.at(i, f) - model.mean[f]) / model.scale[f];
      }
      out.at(i, j) = dot;
    }
  }
  return out;
}

std::vector<double> pca_inverse(const PcaModel& model, std::span<const double> reduced) {
  if (static_cast<int>(reduced.size()) != model.k) {
    throw std::invalid_argument("pca_inverse: dimension mismatch");
  }
  std::vector<double> out(model.d, 0.0);
  for (int j = 0; j < model.k; ++j) {
    const double* comp = model.components.data() + static_cast<std::size_t>(j) * model.d;
    for (int f = 0; f < model.d; ++f) out[f] += reduced[j] * comp[f];
  }
  return out;
}

double lr_loss(const FeatureMatrix& features, const std::vector<int>& labels,
               double l2_weight, std::span<const double> weights, double bias,
               std::vector<double>* grad_w, double* grad_b) {
  const int n = features.n, d = features.d;
  if (grad_w) grad_w->assign(d, 0.0);
  if (grad_b) *grad_b = 0.0;
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    double z = bias;
    for (int j = 0; j < d; ++j) z += weights[j] * features.at(i, j);
    const int y = labels[i];
    // log(1 + exp(-s)) with s = y ? z : -z, stably.
    const double s = y ? z : -z;
    loss += s > 0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double g = p - y;
    if (grad_w) {
      for (int j = 0; j < d; ++j) (*grad_w)[j] += g * features.at(i, j);
    }
    if (grad_b) *grad_b += g;
  }
  loss /= n;
  if (grad_w) {
    for (double& g : *grad_w) g /= n;
  }
  if (grad_b) *grad_b /= n;
  for (int j = 0; j < d; ++j) {
    loss += 0.5 * l2_weight * weights[j] * weights[j] / n;
    if (grad_w) (*grad_w)[j] += l2_weight * weights[j] / n;
  }
  return loss;
}

LrModel fit_lr(const FeatureMatrix& features, const std::vector<int>& labels,
               const LrParams& params) {
  if (features.n != static_cast<int>(labels.size())) {
    throw std::invalid_argument("fit_lr: label count mismatch");
  }
  const int n_pos = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0 || n_pos == features.n) {
    throw std::invalid_argument("fit_lr: both classes must be present");
  }
  LrModel model;
  model.weights.assign(features.d, 0.0);
  model.bias = 0;
  std::vector<double> grad_w;
  double grad_b = 0;
  for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
    model.final_loss = lr_loss(features, labels, params.l2_weight, model.weights,
                               model.bias, &grad_w, &grad_b);
    double gnorm2 = grad_b * grad_b;
    for (double g : grad_w) gnorm2 += g * g;
    model.epochs = epoch;
    if (std::sqrt(gnorm2) < params.tolerance) break;
    for (int j = 0; j < features.d; ++j) {
      model.weights[j] -= params.learning_rate * grad_w[j];
    }
    model.bias -= params.learning_rate * grad_b;
  }
  return model;
}

std::vector<double> predict_scores(const LrModel& model, const FeatureMatrix& features) {
  if (features.d != static_cast<int>(model.weights.size())) {
    throw std::invalid_argument("predict_scores: dimension mismatch");
  }
  std::vector<double> scores(features.n);
  for (int i = 0; i < features.n; ++i) {
    double z = model.bias;
    for (int j = 0; j < features.d; ++j) z += model.weights[j] * features.at(i, j);
    scores[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return scores;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("auc: size mismatch");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0;
  std::size_t n_pos = 0, n_neg = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum_pos += midrank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc: both labels must be present");
  }
  const double u_stat = rank_sum_pos - 0.5 * n_pos * (n_pos + 1);
  return u_stat / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

FeatureMatrix materialize(const Dataset& ds, const SampleSet& set,
                          const DefensePipeline* defense,
                          std::uint64_t run_seed, std::uint64_t side_tag) {
  FeatureMatrix fm;
  fm.n = static_cast<int>(set.samples.size());
  for (int i = 0; i < fm.n; ++i) {
    RealSeries series;
    const auto& roster = set.samples[i].roster;
    if (defense) {
      const std::uint64_t sample_seed =
          derive_seed(run_seed, {hash_tag("noise"), side_tag, static_cast<std::uint64_t>(i)});
      series = defense->apply_group(roster, set.window, sample_seed);
    } else {
      series = RealSeries::from(aggregate(ds, roster, set.window));
    }
    if (i == 0) {
      fm.d = static_cast<int>(series.values.size());
      fm.x.reserve(static_cast<std::size_t>(fm.n) * fm.d);
    }
    fm.x.insert(fm.x.end(), series.values.begin(), series.values.end());
  }
  return fm;
}

AttackResult attack_one(const Dataset& ds, int target_idx,
                        const std::string& target_id, std::size_t target_pos,
                        const PriorSpec& prior, const GameConfig& config,
                        const DefensePipeline* defense) {
  GameConfig cfg = config;
  cfg.seed = derive_seed(config.seed, {hash_tag("target"), target_pos});

  std::optional<DefensePipeline> local;
  const DefensePipeline* pipeline = nullptr;
  if (defense && !defense->is_identity()) {
    local.emplace(defense->config(), defense->noise_disabled());
    local->prepare(ds, derive_seed(cfg.seed, {hash_tag("defense")}));
    pipeline = &*local;
  }

  auto [train, test] = build_samples(ds, target_idx, prior, cfg);
  const FeatureMatrix train_x = materialize(ds, train, pipeline, cfg.seed, 0);
  const FeatureMatrix test_x = materialize(ds, test, pipeline, cfg.seed, 1);

  std::vector<int> train_y, test_y;
  for (const auto& s : train.samples) train_y.push_back(s.label_in ? 1 : 0);
  for (const auto& s : test.samples) test_y.push_back(s.label_in ? 1 : 0);

  const PcaModel pca = fit_pca(train_x, cfg.pca_variance_target, cfg.pca_max_components);
  const FeatureMatrix train_r = pca_transform(pca, train_x);
  const FeatureMatrix test_r = pca_transform(pca, test_x);
  const LrModel lr = fit_lr(train_r, train_y, cfg.lr);
  const std::vector<double> scores = predict_scores(lr, test_r);

  AttackResult res;
  res.target = target_id;
  res.prior = prior;
  res.m = cfg.m;
  res.auc = auc(scores, test_y);
  res.privacy_loss = std::max(res.auc - 0.5, 0.0);
  res.seed = config.seed;
  return res;
}

}  // namespace

std::vector<AttackResult> run_mia(const Dataset& ds,
                                  const std::vector<std::string>& targets,
                                  const PriorSpec& prior, const GameConfig& config,
                                  const DefensePipeline* defense, int jobs) {
  std::vector<int> idx;
  idx.reserve(targets.size());
  for (const auto& id : targets) idx.push_back(ds.user_index(id));

  std::vector<AttackResult> results(targets.size());
  const int n_jobs = std::max(1, jobs);
  if (n_jobs == 1 || targets.size() <= 1) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      results[i] = attack_one(ds, idx[i], targets[i], i, prior, config, defense);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_jobs);
    for (int w = 0; w < n_jobs; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < targets.size(); i = next++) {
            results[i] = attack_one(ds, idx[i], targets[i], i, prior, config, defense);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return results;
}

std::string attack_results_to_csv(const std::vector<AttackResult>& results) {
  std::ostringstream os;
  os << "target,prior,m,alpha,beta,auc,privacy_loss,seed\n";
  for (const auto& r : results) {
    std::string alpha, beta;
    if (const auto* sl = std::get_if<SubsetLocations>(&r.prior)) {
      alpha = fmt_double(sl->alpha);
    } else if (const auto* sg = std::get_if<SameGroups>(&r.prior)) {
      beta = std::to_string(sg->beta);
    } else {
      beta = std::to_string(std::get<DifferentGroups>(r.prior).beta);
    }
    os << r.target << "," << prior_name(r.prior) << "," << r.m << "," << alpha
       << "," << beta << "," << fmt_double(r.auc) << ","
       << fmt_double(r.privacy_loss) << "," << r.seed << "\n";
  }
  return os.str();
}

}  // namespace aggloc
