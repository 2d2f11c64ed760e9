#include "bslope/data_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace bslope {

Eigen::Index CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  throw DomainError("no column named '" + name + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  CsvTable table;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ParseError("empty CSV", line_no, 1);
  table.header = split(line);
  const std::size_t cols = table.header.size();
  for (std::size_t c = 0; c < cols; ++c)
    if (table.header[c].empty()) throw ParseError("empty header name", line_no, static_cast<long>(c + 1));

  std::vector<double> values;
  long rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != cols)
      throw ParseError("expected " + std::to_string(cols) + " cells, found " + std::to_string(cells.size()),
                       line_no, static_cast<long>(std::min(cells.size(), cols) + 1));
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string& cell = cells[c];
      const long col_no = static_cast<long>(c + 1);
      if (cell.empty())
        throw ParseError("missing value in column '" + table.header[c] + "'", line_no, col_no);
      double v = 0.0;
      const char* first = cell.data();
      if (*first == '+') ++first;
      const auto res = std::from_chars(first, cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw ParseError("not a finite number: '" + cell + "'", line_no, col_no);
      values.push_back(v);
    }
    ++rows;
  }
  table.values.resize(rows, static_cast<Eigen::Index>(cols));
  for (long r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      table.values(r, static_cast<Eigen::Index>(c)) = values[static_cast<std::size_t>(r) * cols + c];
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::random_device rd;
  const auto tag = std::to_string(rd()) + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  std::filesystem::path tmp = path;
  tmp += ".tmp" + tag;
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols())
    throw DimensionMismatch("write_csv: header length != column count");
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  write_text_atomic(path, out);
}

Dataset dataset_from_table(const CsvTable& table, const std::string& response, Scaling scaling) {
  const Eigen::Index yi = table.column_index(response);
  const Eigen::Index cols = table.values.cols();
  Matrix x(table.values.rows(), cols - 1);
  std::vector<std::string> names;
  for (Eigen::Index c = 0, k = 0; c < cols; ++c) {
    if (c == yi) continue;
    x.col(k++) = table.values.col(c);
    names.push_back(table.header[static_cast<std::size_t>(c)]);
  }
  const Vector y = table.values.col(yi);
  try {
    return Dataset{RegressionData::standardized(x, y, scaling), names, response};
  } catch (const ConstantColumn&) {
    for (Eigen::Index k = 0; k < x.cols(); ++k)
      if ((x.col(k).array() == x(0, k)).all())
        throw ConstantColumn("predictor '" + names[static_cast<std::size_t>(k)] + "' is constant");
    throw;
  }
}

Dataset load_csv(const std::filesystem::path& path, const std::string& response, Scaling scaling) {
  return dataset_from_table(read_csv(path), response, scaling);
}

Vector SimulationSpec::true_beta() const {
  if (n_positive + n_negative > p) throw DomainError("simulation: more signals than predictors");
  Vector b = Vector::Zero(p);
  b.head(n_positive).setConstant(magnitude);
  b.tail(n_negative).setConstant(-magnitude);
  return b;
}

nlohmann::json SimulationSpec::to_json() const {
  return {{"n", n},         {"p", p},               {"n_positive", n_positive},
          {"n_negative", n_negative}, {"magnitude", magnitude}, {"noise_sd", noise_sd},
          {"seed", seed}};
}

SimulationSpec SimulationSpec::from_json(const nlohmann::json& j) {
  SimulationSpec s;
  s.n = j.value("n", s.n);
  s.p = j.value("p", s.p);
  s.n_positive = j.value("n_positive", s.n_positive);
  s.n_negative = j.value("n_negative", s.n_negative);
  s.magnitude = j.value("magnitude", s.magnitude);
  s.noise_sd = j.value("noise_sd", s.noise_sd);
  s.seed = j.value("seed", s.seed);
  if (s.n < 2 || s.p < 1) throw DomainError("simulation: need n >= 2 and p >= 1");
  if (!(s.noise_sd >= 0.0)) throw DomainError("simulation: noise_sd must be nonnegative");
  return s;
}

SimulatedData simulate_experiment(const SimulationSpec& spec) {
  SimulatedData out;
  out.beta = spec.true_beta();
  Rng rng = make_stream(spec.seed, 0);
  out.x.resize(spec.n, spec.p);
  for (Eigen::Index j = 0; j < spec.p; ++j)
    for (Eigen::Index i = 0; i < spec.n; ++i) out.x(i, j) = standard_normal(rng);
  out.y = out.x * out.beta;
  for (Eigen::Index i = 0; i < spec.n; ++i) out.y(i) += spec.noise_sd * standard_normal(rng);
  return out;
}

void write_chains_csv(const std::filesystem::path& path, const PosteriorSample& sample) {
  std::vector<std::string> header{"chain", "iteration"};
  for (auto& n : sample.column_names()) header.push_back(n);
  Matrix m(sample.draws.rows(), sample.draws.cols() + 2);
  const long per = sample.draws_per_chain();
  for (Eigen::Index r = 0; r < sample.draws.rows(); ++r) {
    m(r, 0) = static_cast<double>(r / per + 1);
    m(r, 1) = static_cast<double>(sample.warmup + r % per + 1);
  }
  m.rightCols(sample.draws.cols()) = sample.draws;
  write_csv(path, header, m);
}

void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table) {
  std::string out = "parameter,mean,median,sd,lower,upper\n";
  for (const auto& r : table.rows)
    out += r.name + "," + format_double(r.mean) + "," + format_double(r.median) + "," +
           format_double(r.sd) + "," + format_double(r.lower) + "," + format_double(r.upper) + "\n";
  write_text_atomic(path, out);
}

void write_diagnostics_csv(const std::filesystem::path& path, const DiagnosticsReport& report) {
  std::string out = "parameter,ess,rhat";
  for (int k = 1; k <= report.max_lag; ++k) out += ",acf" + std::to_string(k);
  out += '\n';
  for (const auto& r : report.rows) {
    out += r.name + "," + format_double(r.ess) + "," + format_double(r.rhat);
    for (int k = 1; k <= report.max_lag; ++k) out += "," + format_double(r.acf(k));
    out += '\n';
  }
  write_text_atomic(path, out);
}

void write_correlation_csv(const std::filesystem::path& path, const Matrix& corr) {
  std::vector<std::string> header;
  for (Eigen::Index i = 0; i < corr.cols(); ++i) header.push_back("beta" + std::to_string(i + 1));
  write_csv(path, header, corr);
}

nlohmann::json sample_metadata(const PosteriorSample& sample) {
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& m : sample.chain_meta) {
    nlohmann::json c{{"accept_rate", m.accept_rate},
                     {"step_size", m.step_size},
                     {"divergences", m.divergences},
                     {"mean_abs_delta_h", m.mean_abs_delta_h},
                     {"mean_delta_h", m.mean_delta_h}};
    if (sample.has_lambda) {
      c["lambda_fallbacks"] = m.lambda_fallbacks;
      c["lambda_cap"] = m.lambda_cap;
    }
    chains.push_back(c);
  }
  return {{"sampler", sample.sampler}, {"seed", sample.seed},   {"chains", sample.chains},
          {"iters", sample.iters},     {"warmup", sample.warmup}, {"draws", sample.draws.rows()},
          {"chain_stats", chains}};
}

}  // namespace bslope
