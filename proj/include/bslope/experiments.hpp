#ifndef BSLOPE_EXPERIMENTS_HPP
#define BSLOPE_EXPERIMENTS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bslope/data_io.hpp"
#include "bslope/lambda_inference.hpp"
#include "bslope/samplers.hpp"
#include "bslope/summary.hpp"

namespace bslope {

struct ExperimentConfig {
  std::string protocol;  ///< simulation-coverage | prediction-split | diabetes
  std::optional<std::filesystem::path> out_dir;  ///< nothing written when empty
  std::uint64_t seed = 20240601;
  std::optional<long> iters;    ///< protocol default when empty
  std::optional<long> warmup;
  std::optional<int> chains;
  double level = 0.95;
  double bh_q = 0.2;
  std::optional<BhVariant> bh_variant;  ///< literal CDF for the simulation protocols, quantile for diabetes
  Scaling scaling = Scaling::kUnitNorm;
  SimulationSpec spec;
  int replicates = 10;
  long train_size = 160;
  int mcem_iterations = 20;
  bool hyperprior_column = true;
  std::filesystem::path data_path;  ///< diabetes CSV
  std::string response = "y";
  int workers = 0;  ///< replicate threads; 0 = hardware concurrency
};

struct CoverageResult {
  Vector truth;
  Vector posterior_mean;
  Vector lower;
  Vector upper;
  Vector slope;
  long non_coverage = 0;
  PosteriorSample sample;
};

struct PredictionResult {
  std::vector<std::string> methods;  ///< slope, bayes, empirical_bayes[, hyperprior]
  Matrix errors;                     ///< replicate x method, mean squared error per test row
  Vector mean_errors;
  std::vector<Vector> eb_lambda;     ///< per replicate
};

struct DiabetesResult {
  std::vector<std::string> predictors;
  SummaryTable summary;
  DiagnosticsReport diagnostics;
  Vector slope;
  Vector least_squares;
  double sigma2_hat = 0.0;
  LambdaSequence lambda;
  PosteriorSample sample;
};

CoverageResult run_coverage(const ExperimentConfig& config);
PredictionResult run_prediction_split(const ExperimentConfig& config);
DiabetesResult run_diabetes(const ExperimentConfig& config);

/// Runs the named protocol, writes its CSVs and manifest.json under out_dir, and
/// returns the manifest.
nlohmann::json run_experiment(const ExperimentConfig& config);

/// Default diabetes CSV shipped with the sources.
std::filesystem::path default_diabetes_path();

}  // namespace bslope

#endif  // BSLOPE_EXPERIMENTS_HPP
