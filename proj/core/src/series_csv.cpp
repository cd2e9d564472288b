#include "sdefim/series_csv.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "sdefim/binary_io.hpp"
#include "sdefim/error.hpp"

namespace sdefim {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double number(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

PathBundle parse_series_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find('\n', start);
    const auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (!trim(line).empty()) lines.push_back(line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (lines.empty()) throw FormatError("CSV has no header row");
  const auto header = split(lines[0]);
  int time_col = -1, series_col = -1;
  std::vector<int> state_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const auto& h = header[c];
    if (h == "time" || h == "t") {
      time_col = c;
    } else if (h == "series" || h == "id" || h == "series_id") {
      series_col = c;
    } else {
      state_cols.push_back(c);
    }
  }
  if (time_col < 0) throw FormatError("CSV header lacks a 'time' column");
  if (state_cols.empty()) throw FormatError("CSV header has no state columns");
  const int d = static_cast<int>(state_cols.size());

  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<std::vector<double>>>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i]);
    if (cells.size() != header.size()) {
      throw FormatError("line " + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) + " fields");
    }
    const std::string id = series_col >= 0 ? cells[series_col] : std::string();
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    const double t = number(cells[time_col], i + 1);
    if (!it->second.first.empty() && !(t > it->second.first.back())) {
      throw DataError("line " + std::to_string(i + 1) + ": times must increase strictly within a series");
    }
    std::vector<double> x(d);
    for (int j = 0; j < d; ++j) x[j] = number(cells[state_cols[j]], i + 1);
    it->second.first.push_back(t);
    it->second.second.push_back(std::move(x));
  }
  if (order.empty()) throw DataError("CSV has no data rows");
  PathBundle bundle;
  bundle.dim = d;
  for (const auto& id : order) {
    const auto& [times, states] = rows[id];
    Path p;
    p.times = times;
    p.states.resize(static_cast<Eigen::Index>(states.size()), d);
    for (std::size_t r = 0; r < states.size(); ++r) {
      for (int j = 0; j < d; ++j) p.states(static_cast<Eigen::Index>(r), j) = states[r][j];
    }
    bundle.paths.push_back(std::move(p));
    bundle.divergence.push_back(Divergence::None);
  }
  return bundle;
}

PathBundle read_series_csv(const std::filesystem::path& path) { return parse_series_csv(read_file(path)); }

std::string paths_to_csv(const PathBundle& bundle) {
  std::string out = "series,time";
  for (int j = 0; j < bundle.dim; ++j) out += ",x" + std::to_string(j + 1);
  out += '\n';
  for (int k = 0; k < bundle.path_count(); ++k) {
    const auto& p = bundle.paths[k];
    for (int r = 0; r < p.length(); ++r) {
      out += std::to_string(k) + ',' + fmt(p.times[r]);
      for (int j = 0; j < bundle.dim; ++j) out += ',' + fmt(p.states(r, j));
      out += '\n';
    }
  }
  return out;
}

std::string estimate_to_csv(const VectorFieldEstimate& est) {
  const auto d = est.locations.cols();
  std::string out;
  for (Eigen::Index j = 0; j < d; ++j) out += "x" + std::to_string(j + 1) + ',';
  for (Eigen::Index j = 0; j < d; ++j) out += "f" + std::to_string(j + 1) + ',';
  for (Eigen::Index j = 0; j < d; ++j) out += "a" + std::to_string(j + 1) + ',';
  out += "U\n";
  for (Eigen::Index q = 0; q < est.locations.rows(); ++q) {
    for (Eigen::Index j = 0; j < d; ++j) out += fmt(est.locations(q, j)) + ',';
    for (Eigen::Index j = 0; j < d; ++j) out += fmt(est.drift(q, j)) + ',';
    for (Eigen::Index j = 0; j < d; ++j) out += fmt(est.amplitude(q, j)) + ',';
    out += (q < est.uncertainty.size() ? fmt(est.uncertainty[q]) : std::string("nan")) + '\n';
  }
  return out;
}

}  // namespace sdefim
