#ifndef BSLOPE_DATA_IO_HPP
#define BSLOPE_DATA_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bslope/model.hpp"
#include "bslope/samplers.hpp"
#include "bslope/summary.hpp"

namespace bslope {

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  Eigen::Index column_index(const std::string& name) const;
};

/// Numeric CSV with a header row. ParseError carries the 1-based line and column.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

/// Values written with 17 significant digits; the file is replaced atomically.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& values);
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string format_double(double v);

struct Dataset {
  RegressionData data;
  std::vector<std::string> predictors;
  std::string response;
};

/// Splits off `response`, then standardizes per `scaling`.
Dataset load_csv(const std::filesystem::path& path, const std::string& response,
                 Scaling scaling = Scaling::kUnitNorm);
Dataset dataset_from_table(const CsvTable& table, const std::string& response, Scaling scaling);

/// Independent N(0, 1) design, beta = +magnitude on the first n_positive coefficients,
/// -magnitude on the last n_negative, zero elsewhere, N(0, noise_sd^2) errors.
struct SimulationSpec {
  long n = 200;
  long p = 80;
  long n_positive = 5;
  long n_negative = 5;
  double magnitude = 2.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;

  Vector true_beta() const;
  nlohmann::json to_json() const;
  static SimulationSpec from_json(const nlohmann::json& j);
};

struct SimulatedData {
  Matrix x;
  Vector y;
  Vector beta;
};

SimulatedData simulate_experiment(const SimulationSpec& spec);

void write_chains_csv(const std::filesystem::path& path, const PosteriorSample& sample);
void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table);
void write_diagnostics_csv(const std::filesystem::path& path, const DiagnosticsReport& report);
void write_correlation_csv(const std::filesystem::path& path, const Matrix& corr);

nlohmann::json sample_metadata(const PosteriorSample& sample);

}  // namespace bslope

#endif  // BSLOPE_DATA_IO_HPP
