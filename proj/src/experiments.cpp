#include "bslope/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <numeric>
#include <thread>

#include "bslope/map_solver.hpp"

#ifndef BSLOPE_DATA_DIR
#define BSLOPE_DATA_DIR "data"
#endif

namespace bslope {

std::filesystem::path default_diabetes_path() {
  return std::filesystem::path(BSLOPE_DATA_DIR) / "diabetes.csv";
}

namespace {

SamplerConfig hmc_config(const ExperimentConfig& c, long iters, long warmup, int chains,
                         std::uint64_t seed) {
  SamplerConfig s;
  s.kind = SamplerKind::kHmc;
  s.iters = c.iters.value_or(iters);
  s.warmup = c.warmup.value_or(c.iters ? -1 : warmup);
  s.chains = c.chains.value_or(chains);
  s.seed = seed;
  return s;
}

BhVariant protocol_variant(const ExperimentConfig& c) {
  if (c.bh_variant) return *c.bh_variant;
  return c.protocol == "diabetes" ? BhVariant::kQuantile : BhVariant::kLiteralCdf;
}

LambdaSequence protocol_lambda(const ExperimentConfig& c, Eigen::Index p) {
  return bh_lambda(c.bh_q, p, 1.0, protocol_variant(c));
}

std::string variant_name(BhVariant v) {
  return v == BhVariant::kQuantile ? "quantile" : "literal-cdf";
}

std::string scaling_name(Scaling s) {
  switch (s) {
    case Scaling::kNone: return "none";
    case Scaling::kUnitNorm: return "unit-norm";
    case Scaling::kUnitVariance: return "unit-variance";
  }
  return "unknown";
}

template <typename F>
void parallel_for(int count, int workers, F&& body) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < count; i = next++) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

CoverageResult run_coverage(const ExperimentConfig& config) {
  SimulationSpec spec = config.spec;
  const SimulatedData sim = simulate_experiment(spec);
  const RegressionData data = RegressionData::standardized(sim.x, sim.y, config.scaling);
  const Standardization& st = *data.standardization();
  const LambdaSequence lambda = protocol_lambda(config, data.p());
  const double sigma2_hat = data.sigma2_estimate();

  SamplerConfig sc = hmc_config(config, 6000, 2000, 1, config.seed);
  CoverageResult r;
  r.sample = run_sampler(data, NoisePrior{}, lambda, sc);
  const SummaryTable t = summarize(r.sample, config.level);
  const Eigen::Index p = data.p();
  r.truth = sim.beta;
  r.posterior_mean.resize(p);
  r.lower.resize(p);
  r.upper.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& row = t.rows[static_cast<std::size_t>(j)];
    r.posterior_mean(j) = row.mean / st.scale(j);
    r.lower(j) = row.lower / st.scale(j);
    r.upper(j) = row.upper / st.scale(j);
    if (r.truth(j) < r.lower(j) || r.truth(j) > r.upper(j)) ++r.non_coverage;
  }
  r.slope = st.unscale_beta(fit_slope_map(data, lambda, std::sqrt(sigma2_hat)).beta_hat);
  return r;
}

PredictionResult run_prediction_split(const ExperimentConfig& config) {
  const SimulatedData sim = simulate_experiment(config.spec);
  const long n = static_cast<long>(sim.x.rows());
  if (config.train_size < 2 || config.train_size >= n)
    throw DomainError("prediction-split: train_size must be in [2, n)");
  PredictionResult r;
  r.methods = {"slope", "bayes", "empirical_bayes"};
  if (config.hyperprior_column) r.methods.push_back("hyperprior");
  const int reps = config.replicates;
  r.errors.resize(reps, static_cast<Eigen::Index>(r.methods.size()));
  r.eb_lambda.resize(static_cast<std::size_t>(reps));

  parallel_for(reps, config.workers, [&](int rep) {
    Rng rng = make_stream(config.seed, 1000 + static_cast<std::uint64_t>(rep));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const long m = n - config.train_size;
    Matrix xtr(config.train_size, sim.x.cols()), xte(m, sim.x.cols());
    Vector ytr(config.train_size), yte(m);
    for (long i = 0; i < n; ++i) {
      const Eigen::Index src = idx[static_cast<std::size_t>(i)];
      if (i < config.train_size) {
        xtr.row(i) = sim.x.row(src);
        ytr(i) = sim.y(src);
      } else {
        xte.row(i - config.train_size) = sim.x.row(src);
        yte(i - config.train_size) = sim.y(src);
      }
    }
    const RegressionData data = RegressionData::standardized(xtr, ytr, config.scaling);
    const Standardization& st = *data.standardization();
    const Matrix x0 = st.apply(xte);
    auto mse = [&](const Vector& beta) {
      return ((yte.array() - st.y_center) - (x0 * beta).array()).square().mean();
    };
    const LambdaSequence lambda = protocol_lambda(config, data.p());
    const double sigma_hat = std::sqrt(data.sigma2_estimate());
    const std::uint64_t seed = config.seed + 7919ULL * static_cast<std::uint64_t>(rep + 1);

    r.errors(rep, 0) = mse(fit_slope_map(data, lambda, sigma_hat).beta_hat);

    SamplerConfig sc = hmc_config(config, 4000, 1000, 1, seed);
    sc.parallel = false;
    r.errors(rep, 1) = mse(run_sampler(data, NoisePrior{}, lambda, sc).beta_mean());

    McemConfig mc;
    mc.sampler = sc;
    mc.max_iterations = config.mcem_iterations;
    mc.bh_q = config.bh_q;
    mc.lambda_init = lambda;
    const McemResult em = run_mcem(data, NoisePrior{}, mc);
    r.eb_lambda[static_cast<std::size_t>(rep)] = em.lambda.values();
    SamplerConfig sc_eb = sc;
    sc_eb.seed = seed + 1;
    r.errors(rep, 2) = mse(run_sampler(data, NoisePrior{}, em.lambda, sc_eb).beta_mean());

    if (config.hyperprior_column) {
      SamplerConfig sc_h = sc;
      sc_h.seed = seed + 2;
      sc_h.lambda_update = LambdaUpdate::kHmc;
      sc_h.lambda_init = lambda;
      const auto hyper = LambdaHyperPrior::reciprocal(lambda);
      r.errors(rep, 3) = mse(run_extended_gibbs(data, NoisePrior{}, hyper, sc_h).beta_mean());
    }
  });
  r.mean_errors = r.errors.colwise().mean().transpose();
  return r;
}

DiabetesResult run_diabetes(const ExperimentConfig& config) {
  const auto path = config.data_path.empty() ? default_diabetes_path() : config.data_path;
  const Dataset ds = load_csv(path, config.response, config.scaling);
  DiabetesResult r;
  r.predictors = ds.predictors;
  const RegressionData& data = ds.data;
  r.lambda = protocol_lambda(config, data.p());
  r.sigma2_hat = data.sigma2_estimate();
  r.slope = fit_slope_map(data, r.lambda, std::sqrt(r.sigma2_hat)).beta_hat;
  r.least_squares = data.ols();
  SamplerConfig sc = hmc_config(config, 10000, 2000, 4, config.seed);
  r.sample = run_sampler(data, NoisePrior{}, r.lambda, sc);
  r.summary = summarize(r.sample, config.level);
  r.diagnostics = diagnostics(r.sample, 50);
  return r;
}

namespace {

nlohmann::json base_manifest(const ExperimentConfig& c) {
  return {{"protocol", c.protocol},
          {"seed", c.seed},
          {"level", c.level},
          {"lambda", {{"kind", "bh"}, {"q", c.bh_q}, {"variant", variant_name(protocol_variant(c))}}},
          {"scaling", scaling_name(c.scaling)},
          {"noise_prior", "improper 1/sigma2"}};
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json run_experiment(const ExperimentConfig& config) {
  nlohmann::json manifest = base_manifest(config);
  const auto& out = config.out_dir;
  if (config.protocol == "simulation-coverage") {
    const CoverageResult r = run_coverage(config);
    manifest["simulation"] = config.spec.to_json();
    manifest["non_coverage"] = r.non_coverage;
    manifest["coefficients"] = r.truth.size();
    manifest["sampler"] = sample_metadata(r.sample);
    manifest["interval"] = "equal-tail";
    if (out) {
      Matrix m(r.truth.size(), 6);
      for (Eigen::Index j = 0; j < r.truth.size(); ++j)
        m.row(j) << static_cast<double>(j + 1), r.truth(j), r.posterior_mean(j), r.lower(j), r.upper(j),
            r.slope(j);
      write_csv(*out / "coverage.csv", {"coefficient", "truth", "posterior_mean", "lower", "upper", "slope"}, m);
      manifest["files"] = {"coverage.csv"};
    }
  } else if (config.protocol == "prediction-split") {
    const PredictionResult r = run_prediction_split(config);
    manifest["simulation"] = config.spec.to_json();
    manifest["replicates"] = config.replicates;
    manifest["train_size"] = config.train_size;
    manifest["loss"] = "mean squared prediction error per test observation";
    manifest["mcem_iterations"] = config.mcem_iterations;
    nlohmann::json errs;
    for (std::size_t k = 0; k < r.methods.size(); ++k)
      errs[r.methods[k]] = r.mean_errors(static_cast<Eigen::Index>(k));
    manifest["prediction_error"] = errs;
    if (out) {
      std::vector<std::string> header{"replicate"};
      for (auto& m : r.methods) header.push_back(m);
      Matrix m(r.errors.rows() + 1, r.errors.cols() + 1);
      for (Eigen::Index i = 0; i < r.errors.rows(); ++i) {
        m(i, 0) = static_cast<double>(i + 1);
        m.row(i).tail(r.errors.cols()) = r.errors.row(i);
      }
      m(r.errors.rows(), 0) = 0.0;
      m.row(r.errors.rows()).tail(r.errors.cols()) = r.mean_errors.transpose();
      write_csv(*out / "prediction.csv", header, m);
      std::vector<std::string> lh{"replicate"};
      const Eigen::Index p = r.eb_lambda.front().size();
      for (Eigen::Index i = 0; i < p; ++i) lh.push_back("lambda" + std::to_string(i + 1));
      Matrix lm(static_cast<Eigen::Index>(r.eb_lambda.size()), p + 1);
      for (std::size_t i = 0; i < r.eb_lambda.size(); ++i) {
        lm(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i + 1);
        lm.row(static_cast<Eigen::Index>(i)).tail(p) = r.eb_lambda[i].transpose();
      }
      write_csv(*out / "eb_lambda.csv", lh, lm);
      manifest["files"] = {"prediction.csv", "eb_lambda.csv"};
    }
  } else if (config.protocol == "diabetes") {
    const DiabetesResult r = run_diabetes(config);
    manifest["data"] = (config.data_path.empty() ? default_diabetes_path() : config.data_path).string();
    manifest["lambda"]["values"] = to_std(r.lambda.values());
    manifest["lambda"]["convention"] =
        "lambda_BH on standardized predictors; prior penalty lambda_i |beta|_(i) / sigma, so the "
        "SLOPE fit uses sigma_hat * lambda_BH";
    manifest["sigma2_hat"] = r.sigma2_hat;
    manifest["sampler"] = sample_metadata(r.sample);
    double worst_lag3 = 0.0;
    for (const auto& d : r.diagnostics.rows) worst_lag3 = std::max(worst_lag3, std::abs(d.acf(3)));
    manifest["max_abs_lag3_autocorrelation"] = worst_lag3;
    manifest["bmi_mean"] = r.summary.row("beta3").mean;
    manifest["sigma_mean"] = r.summary.row("sigma").mean;
    if (out) {
      std::string csv = "parameter,mean,median,sd,lower,upper,slope,least_squares\n";
      const Eigen::Index p = static_cast<Eigen::Index>(r.predictors.size());
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto& row = r.summary.rows[static_cast<std::size_t>(j)];
        csv += "beta" + std::to_string(j + 1) + " (" + r.predictors[static_cast<std::size_t>(j)] + ")," +
               format_double(row.mean) + "," + format_double(row.median) + "," + format_double(row.sd) +
               "," + format_double(row.lower) + "," + format_double(row.upper) + "," +
               format_double(r.slope(j)) + "," + format_double(r.least_squares(j)) + "\n";
      }
      const auto& s = r.summary.row("sigma");
      csv += "sigma," + format_double(s.mean) + "," + format_double(s.median) + "," + format_double(s.sd) +
             "," + format_double(s.lower) + "," + format_double(s.upper) + ",,\n";
      write_text_atomic(*out / "table2.csv", csv);
      write_correlation_csv(*out / "correlation.csv", r.summary.beta_correlation);
      write_chains_csv(*out / "chains.csv", r.sample);
      write_summary_csv(*out / "summary.csv", r.summary);
      write_diagnostics_csv(*out / "diagnostics.csv", r.diagnostics);
      manifest["files"] = {"table2.csv", "correlation.csv", "chains.csv", "summary.csv", "diagnostics.csv"};
    }
  } else {
    throw DomainError("unknown protocol '" + config.protocol +
                      "' (expected simulation-coverage, prediction-split or diabetes)");
  }
  if (out) write_text_atomic(*out / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace bslope
