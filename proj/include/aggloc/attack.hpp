#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aggloc/aggregate.hpp"
#include "aggloc/data.hpp"

namespace aggloc {

class DefensePipeline;

// Adversarial prior knowledge.
struct SubsetLocations {
  double alpha = 1.0;  // fraction of users whose raw traces are known
};
struct SameGroups {
  int beta = 0;  // number of fixed groups, reused between T_O and T_I
};
struct DifferentGroups {
  int beta = 0;  // groups redrawn for the inference window
};
using PriorSpec = std::variant<SubsetLocations, SameGroups, DifferentGroups>;

std::string prior_name(const PriorSpec& prior);

struct LrParams {
  double learning_rate = 0.1;
  double l2_weight = 1.0;
  int max_epochs = 2000;
  double tolerance = 1e-6;
};

struct GameConfig {
  int m = 0;  // aggregation group size
  SlotRange t_obs;
  SlotRange t_inf;
  int n_samples = 0;  // total labeled samples (Subset of Locations prior)
  double train_fraction = 0.8;
  double pca_variance_target = 0.99;
  int pca_max_components = 1000;
  LrParams lr;
  std::uint64_t seed = 0;
};

struct Sample {
  std::vector<int> roster;  // user indices into the dataset
  bool label_in = false;    // true iff the target is in the roster
};

struct SampleSet {
  SlotRange window;
  std::vector<Sample> samples;
};

// Dense row-major sample matrix, n rows of dimension d.
struct FeatureMatrix {
  int n = 0;
  int d = 0;
  std::vector<double> x;

  double at(int i, int j) const { return x[static_cast<std::size_t>(i) * d + j]; }
  double& at(int i, int j) { return x[static_cast<std::size_t>(i) * d + j]; }
  std::span<const double> row(int i) const {
    return {x.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
  }
};

struct PcaModel {
  int d = 0;
  int k = 0;
  std::vector<double> mean;                // d
  std::vector<double> scale;               // d; 1 for zero-variance features
  std::vector<double> components;          // row-major k x d, orthonormal rows
  std::vector<double> explained_variance;  // k, non-increasing
  double total_variance = 0;
};

struct LrModel {
  std::vector<double> weights;
  double bias = 0;
  double final_loss = 0;
  int epochs = 0;
};

struct AttackResult {
  std::string target;
  PriorSpec prior;
  int m = 0;
  double auc = 0;
  double privacy_loss = 0;  // max(auc - 0.5, 0)
  std::uint64_t seed = 0;
};

// Draw the labeled train/test group rosters for one target under the given
// prior. All randomness comes from config.seed.
std::pair<SampleSet, SampleSet> build_samples(const Dataset& ds, int target,
                                              const PriorSpec& prior,
                                              const GameConfig& config);

PcaModel fit_pca(const FeatureMatrix& train, double variance_target,
                 int max_components);

FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& features);

// Inverse of pca_transform restricted to the kept component span, back in
// standardized coordinates.
std::vector<double> pca_inverse(const PcaModel& model, std::span<const double> reduced);

LrModel fit_lr(const FeatureMatrix& features, const std::vector<int>& labels,
               const LrParams& params);

// L2-regularized mean logistic loss and its gradient at (weights, bias);
// the objective fit_lr minimizes.
double lr_loss(const FeatureMatrix& features, const std::vector<int>& labels,
               double l2_weight, std::span<const double> weights, double bias,
               std::vector<double>* grad_w = nullptr, double* grad_b = nullptr);

std::vector<double> predict_scores(const LrModel& model, const FeatureMatrix& features);

// Mann-Whitney AUC with midrank tie handling.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Full attack per target: build samples, materialize (optionally defended)
// aggregates, fit PCA + LR on the training side, score the test side.
// Per-target randomness is derived from (config.seed, target position).
std::vector<AttackResult> run_mia(const Dataset& ds,
                                  const std::vector<std::string>& targets,
                                  const PriorSpec& prior, const GameConfig& config,
                                  const DefensePipeline* defense = nullptr,
                                  int jobs = 1);

std::string attack_results_to_csv(const std::vector<AttackResult>& results);

}  // namespace aggloc
