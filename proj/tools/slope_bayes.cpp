#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bslope/data_io.hpp"
#include "bslope/exact_posterior.hpp"
#include "bslope/experiments.hpp"
#include "bslope/lambda_inference.hpp"
#include "bslope/map_solver.hpp"
#include "bslope/samplers.hpp"
#include "bslope/summary.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bslope;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  return json::parse(in);
}

// Copies config[key] into target unless the flag was given on the command line.
template <typename T>
void merge(const json& config, CLI::App& app, const std::string& key, T& target) {
  if (!config.contains(key)) return;
  const CLI::Option* opt = app.get_option_no_throw("--" + key);
  if (opt && opt->count() > 0) return;
  target = config.at(key).get<T>();
}

Scaling parse_scaling(const std::string& s) {
  if (s == "unit-norm" || s == "norm") return Scaling::kUnitNorm;
  if (s == "sd" || s == "unit-variance") return Scaling::kUnitVariance;
  if (s == "none") return Scaling::kNone;
  throw DomainError("unknown scaling '" + s + "'");
}

LambdaSequence parse_lambda(const std::string& spec, Eigen::Index p) {
  if (spec.rfind("bh:", 0) == 0) return bh_lambda(std::stod(spec.substr(3)), p);
  if (spec.rfind("file:", 0) == 0) {
    std::ifstream in(spec.substr(5));
    if (!in) throw Error("cannot open lambda file " + spec.substr(5));
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    for (char& c : text)
      if (c == ',' || c == ';') c = ' ';
    std::istringstream ss(text);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (static_cast<Eigen::Index>(v.size()) != p)
      throw DimensionMismatch("lambda file has " + std::to_string(v.size()) + " values, expected " +
                              std::to_string(p));
    Vector lam = Eigen::Map<Vector>(v.data(), p);
    if (!LambdaSequence::is_valid(lam)) throw DomainError("lambda file is not nonincreasing and nonnegative");
    return LambdaSequence(lam);
  }
  throw DomainError("lambda must be bh:<q> or file:<path>");
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

struct FitArgs {
  std::string config, data, response = "y", method = "hmc", lambda = "bh:0.2", out = "slope-out",
                      scaling = "unit-norm";
  long iters = 4000;
  long warmup = -1;
  int chains = 4;
  std::uint64_t seed = 1;
  double level = 0.95;
  double noise_a = 0.0;
  double noise_gamma = 0.0;
  bool hpd = false;
  int mcem_iterations = 50;
};

void write_posterior(const fs::path& out, const PosteriorSample& sample, double level, bool hpd,
                     json& manifest) {
  write_chains_csv(out / "chains.csv", sample);
  const SummaryTable t = summarize(sample, level, hpd);
  write_summary_csv(out / "summary.csv", t);
  write_diagnostics_csv(out / "diagnostics.csv", diagnostics(sample));
  write_correlation_csv(out / "correlation.csv", t.beta_correlation);
  manifest["sampler"] = sample_metadata(sample);
  manifest["files"] = {"chains.csv", "summary.csv", "diagnostics.csv", "correlation.csv"};
}

int run_fit(const FitArgs& a) {
  if (a.data.empty()) throw DomainError("fit: --data is required");
  const Dataset ds = load_csv(a.data, a.response, parse_scaling(a.scaling));
  const RegressionData& data = ds.data;
  const LambdaSequence lambda = parse_lambda(a.lambda, data.p());
  const NoisePrior prior(a.noise_a, a.noise_gamma);
  const fs::path out(a.out);
  fs::create_directories(out);

  json manifest{{"command", "fit"},
                {"method", a.method},
                {"data", a.data},
                {"response", a.response},
                {"predictors", ds.predictors},
                {"n", data.n()},
                {"p", data.p()},
                {"scaling", a.scaling},
                {"lambda", to_std(lambda.values())},
                {"lambda_spec", a.lambda},
                {"noise_prior", {{"a", a.noise_a}, {"gamma", a.noise_gamma}}},
                {"seed", a.seed},
                {"level", a.level},
                {"interval", a.hpd ? "hpd" : "equal-tail"}};

  SamplerConfig sc;
  sc.iters = a.iters;
  sc.warmup = a.warmup;
  sc.chains = a.chains;
  sc.seed = a.seed;

  if (a.method == "map") {
    const double sigma = std::sqrt(data.sigma2_estimate());
    const MapSolution m = fit_slope_map(data, lambda, sigma);
    std::string csv = "parameter,estimate\n";
    for (Eigen::Index j = 0; j < data.p(); ++j)
      csv += "beta" + std::to_string(j + 1) + "," + format_double(m.beta_hat(j)) + "\n";
    csv += "sigma," + format_double(sigma) + "\n";
    write_text_atomic(out / "summary.csv", csv);
    manifest["map"] = {{"objective", m.objective},
                       {"iterations", m.iterations},
                       {"converged", m.converged},
                       {"kkt_residual", m.kkt_residual}};
    manifest["files"] = {"summary.csv"};
  } else if (a.method == "gibbs" || a.method == "hmc") {
    sc.kind = a.method == "gibbs" ? SamplerKind::kGibbs : SamplerKind::kHmc;
    write_posterior(out, run_sampler(data, prior, lambda, sc), a.level, a.hpd, manifest);
  } else if (a.method == "eb") {
    McemConfig mc;
    mc.sampler = sc;
    mc.sampler.chains = 1;
    mc.lambda_init = lambda;
    mc.max_iterations = a.mcem_iterations;
    const McemResult em = run_mcem(data, prior, mc);
    std::string csv = "iteration,draws,delta_norm,q_prev,q_value,loglik_increment,loglik_increment_se";
    for (Eigen::Index i = 0; i < data.p(); ++i) csv += ",lambda" + std::to_string(i + 1);
    csv += "\n";
    for (const auto& s : em.trace) {
      csv += std::to_string(s.iteration) + "," + std::to_string(s.draws) + "," + format_double(s.delta_norm) +
             "," + format_double(s.q_prev) + "," + format_double(s.q_value) + "," +
             format_double(s.loglik_increment) + "," + format_double(s.loglik_increment_se);
      for (Eigen::Index i = 0; i < data.p(); ++i) csv += "," + format_double(s.lambda_k[i]);
      csv += "\n";
    }
    write_text_atomic(out / "lambda_trace.csv", csv);
    manifest["mcem"] = {{"converged", em.converged},
                        {"stalled", em.stalled},
                        {"eps", em.eps},
                        {"iterations", em.trace.size()},
                        {"lambda", to_std(em.lambda.values())}};
    if (em.stalled) std::cerr << "warning: MCEM did not settle below eps; see lambda_trace.csv\n";
    write_posterior(out, run_sampler(data, prior, em.lambda, sc), a.level, a.hpd, manifest);
    manifest["files"].push_back("lambda_trace.csv");
  } else if (a.method == "fullbayes") {
    sc.lambda_init = lambda;
    const auto hyper = LambdaHyperPrior::reciprocal(lambda);
    manifest["hyperprior"] = {{"b", to_std(hyper.b)}, {"c", to_std(hyper.c)}};
    write_posterior(out, run_extended_gibbs(data, prior, hyper, sc), a.level, a.hpd, manifest);
  } else {
    throw DomainError("unknown method '" + a.method + "'");
  }
  write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian SLOPE regression"};
  app.require_subcommand(1);

  FitArgs fa;
  CLI::App* fit = app.add_subcommand("fit", "sample the posterior or fit the mode");
  fit->add_option("--config", fa.config, "JSON file with any of the long options");
  fit->add_option("--data", fa.data, "CSV with a header row");
  fit->add_option("--response", fa.response, "response column");
  fit->add_option("--method", fa.method, "map | gibbs | hmc | eb | fullbayes")
      ->check(CLI::IsMember({"map", "gibbs", "hmc", "eb", "fullbayes"}));
  fit->add_option("--lambda", fa.lambda, "bh:<q> or file:<path>");
  fit->add_option("--iters", fa.iters);
  fit->add_option("--warmup", fa.warmup, "-1 for iters/2");
  fit->add_option("--chains", fa.chains);
  fit->add_option("--seed", fa.seed);
  fit->add_option("--out", fa.out);
  fit->add_option("--scaling", fa.scaling, "unit-norm | sd | none");
  fit->add_option("--level", fa.level);
  fit->add_option("--noise-a", fa.noise_a);
  fit->add_option("--noise-gamma", fa.noise_gamma);
  fit->add_option("--mcem-iterations", fa.mcem_iterations);
  fit->add_flag("--hpd", fa.hpd, "shortest intervals instead of equal-tail");

  std::string spec_path, sim_out = "simulated";
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic data set");
  sim->add_option("--spec", spec_path, "JSON spec (n, p, n_positive, n_negative, magnitude, noise_sd, seed)");
  sim->add_option("--out", sim_out);

  ExperimentConfig ec;
  std::string ec_config, ec_out = "experiment-out", ec_data;
  long ec_iters = 0, ec_warmup = -1;
  int ec_chains = 0;
  CLI::App* exp = app.add_subcommand("experiment", "run a packaged protocol");
  exp->add_option("--protocol", ec.protocol, "simulation-coverage | prediction-split | diabetes")->required();
  exp->add_option("--config", ec_config);
  exp->add_option("--out", ec_out);
  exp->add_option("--seed", ec.seed);
  exp->add_option("--iters", ec_iters);
  exp->add_option("--warmup", ec_warmup);
  exp->add_option("--chains", ec_chains);
  exp->add_option("--replicates", ec.replicates);
  exp->add_option("--data", ec_data);
  exp->add_option("--mcem-iterations", ec.mcem_iterations);
  exp->add_option("--workers", ec.workers);
  std::string ec_variant;
  exp->add_option("--bh-variant", ec_variant, "quantile | literal-cdf (protocol default when empty)")
      ->check(CLI::IsMember({"quantile", "literal-cdf"}));

  std::string ex_data, ex_response = "y", ex_lambda = "bh:0.2", ex_out = "exact-out", ex_scaling = "unit-norm";
  double ex_sigma2 = -1.0;
  long ex_draws = 100000;
  std::uint64_t ex_seed = 20240601;
  CLI::App* ex = app.add_subcommand("exact", "closed-form mixture posterior for p <= 6 at fixed sigma2");
  ex->add_option("--data", ex_data)->required();
  ex->add_option("--response", ex_response);
  ex->add_option("--lambda", ex_lambda);
  ex->add_option("--sigma2", ex_sigma2, "default: residual variance estimate");
  ex->add_option("--draws", ex_draws);
  ex->add_option("--seed", ex_seed);
  ex->add_option("--scaling", ex_scaling);
  ex->add_option("--out", ex_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      const json cfg = load_config(fa.config);
      merge(cfg, *fit, "data", fa.data);
      merge(cfg, *fit, "response", fa.response);
      merge(cfg, *fit, "method", fa.method);
      merge(cfg, *fit, "lambda", fa.lambda);
      merge(cfg, *fit, "iters", fa.iters);
      merge(cfg, *fit, "warmup", fa.warmup);
      merge(cfg, *fit, "chains", fa.chains);
      merge(cfg, *fit, "seed", fa.seed);
      merge(cfg, *fit, "out", fa.out);
      merge(cfg, *fit, "scaling", fa.scaling);
      merge(cfg, *fit, "level", fa.level);
      merge(cfg, *fit, "noise-a", fa.noise_a);
      merge(cfg, *fit, "noise-gamma", fa.noise_gamma);
      merge(cfg, *fit, "mcem-iterations", fa.mcem_iterations);
      merge(cfg, *fit, "hpd", fa.hpd);
      return run_fit(fa);
    }
    if (sim->parsed()) {
      SimulationSpec spec;
      if (!spec_path.empty()) spec = SimulationSpec::from_json(load_config(spec_path));
      const SimulatedData d = simulate_experiment(spec);
      const fs::path out(sim_out);
      std::vector<std::string> header;
      for (Eigen::Index j = 0; j < d.x.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
      header.push_back("y");
      Matrix m(d.x.rows(), d.x.cols() + 1);
      m << d.x, d.y;
      write_csv(out / "data.csv", header, m);
      Matrix b(d.beta.size(), 2);
      for (Eigen::Index j = 0; j < d.beta.size(); ++j) b.row(j) << static_cast<double>(j + 1), d.beta(j);
      write_csv(out / "truth.csv", {"coefficient", "beta"}, b);
      write_text_atomic(out / "manifest.json",
                        json{{"command", "simulate"}, {"spec", spec.to_json()}, {"files", {"data.csv", "truth.csv"}}}
                                .dump(2) + "\n");
      std::cout << "wrote " << out.string() << "\n";
      return 0;
    }
    if (exp->parsed()) {
      const json cfg = load_config(ec_config);
      merge(cfg, *exp, "out", ec_out);
      merge(cfg, *exp, "seed", ec.seed);
      merge(cfg, *exp, "iters", ec_iters);
      merge(cfg, *exp, "warmup", ec_warmup);
      merge(cfg, *exp, "chains", ec_chains);
      merge(cfg, *exp, "replicates", ec.replicates);
      merge(cfg, *exp, "data", ec_data);
      merge(cfg, *exp, "mcem-iterations", ec.mcem_iterations);
      merge(cfg, *exp, "workers", ec.workers);
      merge(cfg, *exp, "bh-variant", ec_variant);
      if (!ec_variant.empty())
        ec.bh_variant = ec_variant == "quantile" ? BhVariant::kQuantile : BhVariant::kLiteralCdf;
      if (cfg.contains("spec")) ec.spec = SimulationSpec::from_json(cfg.at("spec"));
      if (ec_iters > 0) ec.iters = ec_iters;
      if (ec_warmup >= 0) ec.warmup = ec_warmup;
      if (ec_chains > 0) ec.chains = ec_chains;
      ec.data_path = ec_data;
      ec.out_dir = fs::path(ec_out);
      const json manifest = run_experiment(ec);
      std::cout << manifest.dump(2) << "\n";
      return 0;
    }
    if (ex->parsed()) {
      const Dataset ds = load_csv(ex_data, ex_response, parse_scaling(ex_scaling));
      const LambdaSequence lambda = parse_lambda(ex_lambda, ds.data.p());
      const double sigma2 = ex_sigma2 > 0.0 ? ex_sigma2 : ds.data.sigma2_estimate();
      MixtureOptions opt;
      opt.mass_draws = ex_draws;
      opt.seed = ex_seed;
      const ExactMixture mix = enumerate_mixture(ds.data, sigma2, lambda, opt);
      const PosteriorMoments mom = exact_posterior_moments(mix, ex_draws, ex_seed + 1);
      const fs::path out(ex_out);
      std::string csv = "parameter,mean,mean_se,sd,sd_se\n";
      for (Eigen::Index j = 0; j < ds.data.p(); ++j)
        csv += "beta" + std::to_string(j + 1) + "," + format_double(mom.mean(j)) + "," +
               format_double(mom.mean_se(j)) + "," + format_double(mom.sd(j)) + "," + format_double(mom.sd_se(j)) +
               "\n";
      write_text_atomic(out / "exact.csv", csv);
      write_text_atomic(out / "manifest.json",
                        json{{"command", "exact"},
                             {"data", ex_data},
                             {"sigma2", sigma2},
                             {"lambda", to_std(lambda.values())},
                             {"components", mix.components.size()},
                             {"log_normalizer", mix.log_normalizer},
                             {"log_normalizer_se", mix.log_normalizer_se},
                             {"files", {"exact.csv"}}}
                                .dump(2) + "\n");
      std::cout << "wrote " << out.string() << "\n";
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
