#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rirl/dataset.hpp"
#include "rirl/error.hpp"

namespace rirl::data {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

bool parse_date(const std::string& text, std::chrono::sys_days& out) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  if (text.size() != 10 || std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) return false;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return false;
  out = std::chrono::sys_days{ymd};
  return true;
}

std::string line_ref(const std::string& path, std::size_t line) { return path + ":" + std::to_string(line); }

}  // namespace

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PersistenceError("cannot write '" + path + "'");
  out << "date";
  for (const auto& n : data.nodes)
    for (Index a = 0; a < n.dim(); ++a) out << ',' << n.attribute_name(a);
  out << '\n';
  for (Index t = 0; t < data.length(); ++t) {
    out << format_date(data.dates[static_cast<std::size_t>(t)]);
    for (const auto& n : data.nodes)
      for (Index a = 0; a < n.dim(); ++a) out << ',' << format_double(n.values(a, t));
    out << '\n';
  }
  if (!out) throw PersistenceError("write failure on '" + path + "'");
}

Dataset load_csv(const std::string& path, const std::vector<std::string>& required) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(line_ref(path, 1) + ": empty file");
  const auto header = split_row(line);
  if (header.empty() || header[0] != "date") throw DataError(line_ref(path, 1) + ": first column must be 'date'");

  // Column -> (node slot, attribute index).
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> columns_of;
  std::set<std::string> seen_columns;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto& col = header[c];
    const auto dot = col.rfind('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == col.size())
      throw DataError(line_ref(path, 1) + ": column '" + col + "' is not <node>.<attr>");
    if (!seen_columns.insert(col).second) throw DataError(line_ref(path, 1) + ": duplicate column '" + col + "'");
    const auto node = col.substr(0, dot);
    if (!columns_of.count(node)) order.push_back(node);
    columns_of[node].push_back(c);
  }
  for (const auto& name : required)
    if (!columns_of.count(name)) throw DataError(path + ": missing column for node '" + name + "'");

  std::vector<std::vector<double>> cells(header.size());
  Dataset data;
  std::set<std::chrono::sys_days::rep> dates;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto row = split_row(line);
    if (row.size() != header.size())
      throw DataError(line_ref(path, line_no) + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(row.size()));
    std::chrono::sys_days day;
    if (!parse_date(row[0], day)) throw DataError(line_ref(path, line_no) + ": bad date '" + row[0] + "'");
    if (!dates.insert(day.time_since_epoch().count()).second)
      throw DataError(line_ref(path, line_no) + ": duplicate date '" + row[0] + "'");
    data.dates.push_back(day);
    for (std::size_t c = 1; c < row.size(); ++c) {
      double v = 0.0;
      const auto& text = row[c];
      const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw DataError(line_ref(path, line_no) + ": unparseable number '" + text + "' in column '" + header[c] + "'");
      cells[c].push_back(v);
    }
  }
  if (data.dates.empty()) throw DataError(path + ": no data rows");

  const auto steps = static_cast<Index>(data.dates.size());
  std::vector<int> months;
  months.reserve(data.dates.size());
  for (const auto& d : data.dates)
    months.push_back(static_cast<int>(static_cast<unsigned>(std::chrono::year_month_day{d}.month())));
  for (const auto& name : order) {
    NodeSeries series;
    series.name = name;
    const auto& cols = columns_of[name];
    series.values.resize(static_cast<Index>(cols.size()), steps);
    for (std::size_t a = 0; a < cols.size(); ++a)
      for (Index t = 0; t < steps; ++t) series.values(static_cast<Index>(a), t) = cells[cols[a]][static_cast<std::size_t>(t)];
    series.mask = mask_of(series.values);
    series.month = months;
    try {
      series.scaler = scale_fit(series);
    } catch (const DataError&) {
      series.scaler = {};
    }
    data.nodes.push_back(std::move(series));
  }
  return data;
}

}  // namespace rirl::data
