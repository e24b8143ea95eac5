#include "ecf/netgen.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <sstream>

namespace ecf {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

CsvParseError::CsvParseError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error(fmt::format("csv line {}, column {}: {}", line, column, what)),
      line_(line),
      column_(column) {}

void write_csv(const ReadingsPanel& panel, std::ostream& out) {
  for (Index k = 0; k < panel.n_sensors(); ++k) {
    if (k > 0) out << ',';
    out << panel.labels()[k] << ':' << to_string(panel.kinds()[k]);
  }
  out << '\n';
  std::string row;
  for (Index t = 0; t < panel.n_steps(); ++t) {
    row.clear();
    for (Index k = 0; k < panel.n_sensors(); ++k) {
      if (k > 0) row += ',';
      row += fmt::format("{}", panel.at(t, k));
    }
    out << row << '\n';
  }
}

void write_csv(const ReadingsPanel& panel, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_csv(panel, out);
}

ReadingsPanel load_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvParseError(1, 1, "missing header line");
  strip_cr(line);
  std::vector<SensorKind> kinds;
  std::vector<std::string> labels;
  const auto header = split_commas(line);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto colon = header[c].rfind(':');
    if (colon == std::string::npos || colon == 0) {
      throw CsvParseError(1, c + 1, "header cell '" + header[c] + "' is not label:kind");
    }
    try {
      kinds.push_back(sensor_kind_from_string(header[c].substr(colon + 1)));
    } catch (const std::invalid_argument& e) {
      throw CsvParseError(1, c + 1, e.what());
    }
    labels.push_back(header[c].substr(0, colon));
  }
  if (header.empty()) throw CsvParseError(1, 1, "empty header");

  std::vector<double> flat;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw CsvParseError(line_no, std::min(cells.size(), header.size()) + 1,
                          fmt::format("expected {} cells, found {}", header.size(), cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      double value = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, value);
      if (cell.empty()) throw CsvParseError(line_no, c + 1, "missing value");
      if (ec != std::errc() || ptr != last) {
        throw CsvParseError(line_no, c + 1, "non-numeric value '" + cell + "'");
      }
      flat.push_back(value);
    }
    ++rows;
  }
  Eigen::MatrixXd values(static_cast<Index>(rows), static_cast<Index>(header.size()));
  for (Index t = 0; t < values.rows(); ++t) {
    for (Index k = 0; k < values.cols(); ++k) {
      values(t, k) = flat[static_cast<std::size_t>(t * values.cols() + k)];
    }
  }
  return ReadingsPanel(std::move(values), std::move(kinds), std::move(labels));
}

ReadingsPanel load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_csv(in);
}

}  // namespace ecf
