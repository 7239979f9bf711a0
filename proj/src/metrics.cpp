#include "bapolab/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bapolab/error.hpp"

namespace bapolab {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.step << ',' << r.epoch << ',' << format_double(r.mean_reward) << ','
       << format_double(r.policy_entropy) << ',' << format_double(r.grad_norm) << ','
       << format_double(r.pos_ratio) << ',' << format_double(r.c_low) << ','
       << format_double(r.c_high) << ',' << format_double(r.clip_fraction_pos) << ','
       << format_double(r.clip_fraction_neg) << ',' << format_double(r.mean_is_ratio_deviation)
       << '\n';
  }
  return os.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericError(msg("cannot open ", path, " for writing"));
  out << metrics_to_csv(rows);
}

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable table;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    fields.push_back(cur);
    if (lineno == 1) {
      table.columns = std::move(fields);
      continue;
    }
    if (fields.size() != table.columns.size())
      throw DomainError(msg(origin, ":", lineno, ": expected ", table.columns.size(),
                            " fields, got ", fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(f, &pos));
        if (pos != f.size()) throw std::invalid_argument(f);
      } catch (const std::logic_error&) {
        throw DomainError(msg(origin, ":", lineno, ": malformed numeric field '", f, "'"));
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (table.columns.empty()) throw DomainError(msg(origin, ": empty CSV"));
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError(msg("cannot open CSV file ", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

}  // namespace bapolab
