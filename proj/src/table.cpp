#include "slpt/table.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "slpt/errors.hpp"

#ifndef SLPT_VERSION
#define SLPT_VERSION "0.0.0"
#endif

namespace slpt {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  return fmt::format("{:.12g}", v);
}

std::string format_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  if (const auto* i = std::get_if<int>(&c)) return std::to_string(*i);
  const auto& s = std::get<std::string>(c);
  // Keep the file one-record-per-line and comma-safe.
  std::string out = s;
  for (char& ch : out)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return out;
}

OutputTable::OutputTable(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw InvalidArgument("table needs at least one column");
}

void OutputTable::add_row(const std::vector<Cell>& cells) {
  if (cells.size() != header_.size())
    throw InvalidArgument(fmt::format("row has {} cells, table has {} columns", cells.size(), header_.size()));
  std::vector<std::string> row;
  row.reserve(cells.size());
  for (const auto& c : cells) row.push_back(format_cell(c));
  rows_.push_back(std::move(row));
}

void OutputTable::add_trailer(std::string line) { trailer_.push_back(std::move(line)); }

std::string OutputTable::data_section() const {
  std::string out = fmt::format("{}\n", fmt::join(header_, ","));
  for (const auto& r : rows_) out += fmt::format("{}\n", fmt::join(r, ","));
  for (const auto& t : trailer_) out += fmt::format("# {}\n", t);
  return out;
}

std::string OutputTable::render(const TableMetadata& meta) const {
  std::string out;
  out += fmt::format("# config_sha256: {}\n", meta.config_sha256);
  out += fmt::format("# tool_version: {}\n", meta.tool_version);
  out += fmt::format("# timestamp: {}\n", meta.timestamp);
  for (const auto& [k, v] : meta.extra) out += fmt::format("# {}: {}\n", k, v);
  return out + data_section();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string tool_version() { return SLPT_VERSION; }

std::string utc_timestamp() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

void write_table(const std::string& path, const OutputTable& table, const TableMetadata& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path));
  out << table.render(meta);
  out.close();
  if (!out) throw IoError(fmt::format("write to '{}' failed", path));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError(fmt::format("read from '{}' failed", path));
  return ss.str();
}

std::size_t ParsedTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw InvalidArgument(fmt::format("table has no column '{}'", name));
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

ParsedTable read_table(const std::string& path) {
  std::istringstream in(read_file(path));
  ParsedTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto colon = line.find(": ");
      if (t.header.empty() && colon != std::string::npos)
        t.metadata.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
      continue;
    }
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError(lineno, fmt::format("'{}' row has {} cells, header has {}", path, cells.size(), t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw ParseError(lineno, fmt::format("'{}' has no header row", path));
  return t;
}

std::optional<cplx> seed_from_table(const ParsedTable& table, double eps) {
  const auto ce = table.column("epsilon");
  const auto ct = table.column("T");
  const auto cc = table.column("converged");
  const auto cre = table.column("shoot_re");
  const auto cim = table.column("shoot_im");
  std::optional<cplx> best;
  double best_dist = std::numeric_limits<double>::infinity();
  double best_T = std::numeric_limits<double>::infinity();
  for (const auto& r : table.rows) {
    if (r[cc] != "1") continue;
    const double e = std::stod(r[ce]);
    const double T = std::stod(r[ct]);
    const double dist = std::abs(e - eps);
    if (dist < best_dist - 1e-15 || (std::abs(dist - best_dist) <= 1e-15 && T < best_T)) {
      best_dist = dist;
      best_T = T;
      best = cplx(std::stod(r[cre]), std::stod(r[cim]));
    }
  }
  return best;
}

}  // namespace slpt
