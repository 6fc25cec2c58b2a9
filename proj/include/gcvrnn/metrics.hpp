#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "gcvrnn/data.hpp"
#include "gcvrnn/model_config.hpp"

namespace gcvrnn {

class UnitError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

enum class ImputationVariant { all_past_steps, missing_only };

inline std::string to_string(ImputationVariant v) {
  return v == ImputationVariant::all_past_steps ? "all-past-steps" : "missing-only";
}

inline ImputationVariant parse_variant(const std::string& s) {
  if (s == "all-past-steps") return ImputationVariant::all_past_steps;
  if (s == "missing-only") return ImputationVariant::missing_only;
  throw ConfigError("unknown I-L2 variant '" + s + "'");
}

/// Sum of per-entry Euclidean errors and the number of entries counted.
struct ErrorSum {
  double sum = 0.0;
  std::size_t count = 0;

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  ErrorSum& operator+=(const ErrorSum& o) {
    sum += o.sum;
    count += o.count;
    return *this;
  }
};

inline ErrorSum imputation_error(const std::vector<double>& imputed, const TrajectorySequence& truth,
                                 const MaskMatrix& mask, ImputationVariant variant) {
  const std::size_t N = truth.agents;
  if (imputed.size() != truth.t_past * N * 2) throw DimensionError("imputation_error: imputed trajectory has wrong size");
  if (mask.t_past != truth.t_past || mask.agents != N) throw DimensionError("imputation_error: mask shape mismatch");
  ErrorSum e;
  for (std::size_t t = 0; t < truth.t_past; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      if (variant == ImputationVariant::missing_only && mask.visible(t, i)) continue;
      const Vec2 g = truth.at(t, i);
      e.sum += std::hypot(imputed[(t * N + i) * 2] - g.x, imputed[(t * N + i) * 2 + 1] - g.y);
      ++e.count;
    }
  }
  return e;
}

inline ErrorSum prediction_error(const std::vector<double>& predicted, const TrajectorySequence& truth) {
  const std::size_t N = truth.agents;
  if (predicted.size() != truth.t_future * N * 2) throw DimensionError("prediction_error: predicted trajectory has wrong size");
  ErrorSum e;
  for (std::size_t k = 0; k < truth.t_future; ++k) {
    for (std::size_t i = 0; i < N; ++i) {
      const Vec2 g = truth.at(truth.t_past + k, i);
      e.sum += std::hypot(predicted[(k * N + i) * 2] - g.x, predicted[(k * N + i) * 2 + 1] - g.y);
      ++e.count;
    }
  }
  return e;
}

/// Mean Euclidean error over agents and past steps (all, or masked-out only).
/// Zero when the missing-only variant has nothing to average.
inline double metric_i_l2(const std::vector<double>& imputed, const TrajectorySequence& truth, const MaskMatrix& mask,
                          ImputationVariant variant = ImputationVariant::all_past_steps) {
  return imputation_error(imputed, truth, mask, variant).mean();
}

inline double metric_p_l2(const std::vector<double>& predicted, const TrajectorySequence& truth) {
  return prediction_error(predicted, truth).mean();
}

/// One row of results: a method evaluated on one scenario.
struct MetricReport {
  std::string method;
  MaskingSpec masking;
  ImputationVariant variant = ImputationVariant::all_past_steps;
  double i_l2 = 0.0;
  double p_l2 = 0.0;
  std::size_t n_sequences = 0;
  std::string units = "ft";

  friend bool operator==(const MetricReport& a, const MetricReport& b) {
    return a.method == b.method && a.masking.mode == b.masking.mode && a.masking.parameter == b.masking.parameter &&
           a.variant == b.variant && a.i_l2 == b.i_l2 && a.p_l2 == b.p_l2 && a.n_sequences == b.n_sequences;
  }
};

struct FormattedReport {
  std::string table;
  std::string csv;
};

inline constexpr const char* kReportCsvHeader = "method,mode,parameter,variant,I_L2,P_L2,n_sequences";

namespace detail {

inline std::string scenario_label(const MaskingSpec& m) {
  std::ostringstream os;
  os << (m.mode == MaskMode::circle ? "r=" : "theta=") << format_double(m.parameter);
  return os.str();
}

// methods alphabetical, then circle before camera, then parameter, then variant
inline bool report_order(const MetricReport& a, const MetricReport& b) {
  return std::make_tuple(a.method, static_cast<int>(a.masking.mode), a.masking.parameter, static_cast<int>(a.variant)) <
         std::make_tuple(b.method, static_cast<int>(b.masking.mode), b.masking.parameter, static_cast<int>(b.variant));
}

}  // namespace detail

/// Rows are methods; each scenario/variant contributes an I-L2 / P-L2 column pair.
inline FormattedReport report_table(std::vector<MetricReport> reports) {
  if (reports.empty()) throw ConfigError("report_table: no reports");
  for (const auto& r : reports) {
    if (r.units != reports.front().units) {
      throw UnitError("report_table: mixed units '" + reports.front().units + "' and '" + r.units + "'");
    }
  }
  std::sort(reports.begin(), reports.end(), detail::report_order);

  FormattedReport out;
  std::ostringstream csv;
  csv << kReportCsvHeader << '\n';
  for (const auto& r : reports) {
    csv << r.method << ',' << to_string(r.masking.mode) << ',' << detail::format_double(r.masking.parameter) << ','
        << to_string(r.variant) << ',' << detail::format_double(r.i_l2) << ',' << detail::format_double(r.p_l2) << ','
        << r.n_sequences << '\n';
  }
  out.csv = csv.str();

  using Column = std::tuple<int, double, int>;
  std::set<Column> columns;
  std::set<std::string> methods;
  std::map<std::pair<std::string, Column>, const MetricReport*> cell;
  std::map<Column, const MetricReport*> column_spec;
  for (const auto& r : reports) {
    Column c{static_cast<int>(r.masking.mode), r.masking.parameter, static_cast<int>(r.variant)};
    columns.insert(c);
    methods.insert(r.method);
    cell[{r.method, c}] = &r;
    column_spec.emplace(c, &r);
  }
  std::ostringstream tab;
  std::size_t width = 8;
  for (const auto& m : methods) width = std::max(width, m.size());
  tab << std::left << std::setw(static_cast<int>(width)) << "method";
  for (const auto& c : columns) {
    const auto* r = column_spec[c];
    tab << " | " << to_string(r->masking.mode) << ' ' << detail::scenario_label(r->masking) << " ("
        << to_string(r->variant) << ") I-L2 / P-L2";
  }
  tab << "\n";
  for (const auto& m : methods) {
    tab << std::left << std::setw(static_cast<int>(width)) << m;
    for (const auto& c : columns) {
      auto it = cell.find({m, c});
      std::ostringstream pair;
      if (it == cell.end()) {
        pair << "- / -";
      } else {
        pair << std::fixed << std::setprecision(3) << it->second->i_l2 << " / " << it->second->p_l2;
      }
      tab << " | " << pair.str();
    }
    tab << "\n";
  }
  tab << "units: " << reports.front().units << "\n";
  tab << "reference (published, Basketball r=3 ft): GC-VRNN I-L2 7.03 / P-L2 7.50 (display only)\n";
  out.table = tab.str();
  return out;
}

inline std::vector<MetricReport> parse_report_csv(const std::string& csv, const std::string& units = "ft") {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) throw DataError("report csv: bad header");
  std::vector<MetricReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    if (f.size() != 7) throw DataError("report csv: expected 7 fields at line " + std::to_string(line_no));
    MetricReport r;
    r.method = f[0];
    r.masking.mode = parse_mask_mode(f[1]);
    r.masking.parameter = detail::parse_double("parameter", f[2]);
    r.variant = parse_variant(f[3]);
    r.i_l2 = detail::parse_double("I_L2", f[4]);
    r.p_l2 = detail::parse_double("P_L2", f[5]);
    r.n_sequences = detail::parse_uint("n_sequences", f[6]);
    r.units = units;
    out.push_back(r);
  }
  return out;
}

}  // namespace gcvrnn
