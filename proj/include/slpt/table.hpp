#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "slpt/param_map.hpp"

namespace slpt {

using Cell = std::variant<double, int, std::string>;

/// "{:.12g}" for doubles; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double v);
std::string format_cell(const Cell& c);

struct TableMetadata {
  std::string config_sha256;
  std::string tool_version;
  std::string timestamp;  // excluded from the determinism guarantee
  std::vector<std::pair<std::string, std::string>> extra;
};

class OutputTable {
 public:
  explicit OutputTable(std::vector<std::string> header);

  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  const std::vector<std::string>& trailer() const noexcept { return trailer_; }

  /// Throws InvalidArgument when the cell count differs from the header.
  void add_row(const std::vector<Cell>& cells);
  /// `#`-prefixed line written after the data rows.
  void add_trailer(std::string line);

  /// Header, rows and trailer without the metadata preamble.
  std::string data_section() const;
  std::string render(const TableMetadata& meta) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::string> trailer_;
};

std::string sha256_hex(const std::string& bytes);
std::string tool_version();
/// UTC, ISO 8601.
std::string utc_timestamp();

/// Writes `render(meta)` to path. Throws IoError naming the path.
void write_table(const std::string& path, const OutputTable& table, const TableMetadata& meta);

std::string read_file(const std::string& path);

struct ParsedTable {
  std::vector<std::pair<std::string, std::string>> metadata;  // "# key: value" lines
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index; throws InvalidArgument when absent.
  std::size_t column(const std::string& name) const;
};

/// Reads a table written by write_table. Throws IoError / ParseError.
ParsedTable read_table(const std::string& path);

/// Shooting value psi_-(0) of the converged row closest to `eps` on the
/// lowest-transmission branch of a spectrum table. Empty when the table has
/// no converged rows.
std::optional<cplx> seed_from_table(const ParsedTable& table, double eps);

}  // namespace slpt
