#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace softbart {

/// Raised for malformed or inconsistent input data.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named column holding either numbers or category labels.
struct Column {
  std::string name;
  std::variant<std::vector<double>, std::vector<std::string>> data;

  bool is_numeric() const {
    return std::holds_alternative<std::vector<double>>(data);
  }
  const std::vector<double>& numeric() const {
    return std::get<std::vector<double>>(data);
  }
  const std::vector<std::string>& categorical() const {
    return std::get<std::vector<std::string>>(data);
  }
  std::size_t size() const {
    return is_numeric() ? numeric().size() : categorical().size();
  }
};

/// Column-oriented table with unique column names.
class Table {
 public:
  void add_numeric(std::string name, std::vector<double> values) {
    add(Column{std::move(name), std::move(values)});
  }
  void add_categorical(std::string name, std::vector<std::string> values) {
    add(Column{std::move(name), std::move(values)});
  }

  void add(Column column) {
    if (has(column.name)) {
      throw InputError("duplicate column '" + column.name + "'");
    }
    if (!columns_.empty() && column.size() != rows()) {
      throw InputError("column '" + column.name + "' has " +
                       std::to_string(column.size()) + " rows, expected " +
                       std::to_string(rows()));
    }
    columns_.push_back(std::move(column));
  }

  /// Replaces an existing column, keeping its position.
  void replace(Column column) {
    for (auto& c : columns_) {
      if (c.name == column.name) {
        if (column.size() != rows()) {
          throw InputError("replacement column has the wrong length");
        }
        c = std::move(column);
        return;
      }
    }
    throw InputError("unknown column '" + column.name + "'");
  }

  bool has(std::string_view name) const {
    for (const auto& c : columns_) {
      if (c.name == name) return true;
    }
    return false;
  }

  const Column& column(std::string_view name) const {
    for (const auto& c : columns_) {
      if (c.name == name) return c;
    }
    throw InputError("unknown column '" + std::string(name) + "'");
  }

  const std::vector<Column>& columns() const { return columns_; }
  std::size_t rows() const { return columns_.empty() ? 0 : columns_[0].size(); }
  std::size_t cols() const { return columns_.size(); }
  bool empty() const { return rows() == 0; }

 private:
  std::vector<Column> columns_;
};

/// Column type overrides applied while reading.
struct CsvReadOptions {
  std::set<std::string> categorical;
  std::set<std::string> numeric;
};

namespace csv_detail {

inline bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

/// Splits RFC 4180 text into records. Quoted fields may contain separators,
/// doubled quotes and line breaks.
inline std::vector<std::vector<std::string>> parse_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  bool after_quote = false;
  char ch;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(record);
    record.clear();
  };
  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get(ch);
      end_record();
    } else if (ch == '\n') {
      end_record();
    } else {
      if (after_quote) throw InputError("csv: text after closing quote");
      field.push_back(ch);
      field_started = true;
    }
  }
  if (in_quotes) throw InputError("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

}  // namespace csv_detail

/// Reads a CSV with a header row. A column is numeric if every cell parses as
/// a number, categorical otherwise, unless overridden.
inline Table read_csv(std::istream& in, const CsvReadOptions& options = {}) {
  const auto records = csv_detail::parse_records(in);
  if (records.empty()) throw InputError("csv: missing header row");
  const auto& header = records[0];
  const std::size_t ncol = header.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != ncol) {
      throw InputError("csv: row " + std::to_string(r) + " has " +
                       std::to_string(records[r].size()) + " fields, expected " +
                       std::to_string(ncol));
    }
  }
  for (const auto& name : options.categorical) {
    if (options.numeric.count(name)) {
      throw InputError("column '" + name + "' forced both numeric and categorical");
    }
  }
  Table table;
  for (std::size_t c = 0; c < ncol; ++c) {
    const std::string& name = header[c];
    std::vector<double> nums;
    nums.reserve(records.size() - 1);
    bool numeric = !options.categorical.count(name);
    for (std::size_t r = 1; r < records.size() && numeric; ++r) {
      double v;
      if (!csv_detail::parse_double(records[r][c], v)) {
        numeric = false;
      } else {
        nums.push_back(v);
      }
    }
    if (options.numeric.count(name) && !numeric) {
      throw InputError("column '" + name + "' is not numeric");
    }
    if (numeric) {
      table.add_numeric(name, std::move(nums));
    } else {
      std::vector<std::string> labels;
      labels.reserve(records.size() - 1);
      for (std::size_t r = 1; r < records.size(); ++r) {
        labels.push_back(records[r][c]);
      }
      table.add_categorical(name, std::move(labels));
    }
  }
  return table;
}

inline Table read_csv_file(const std::string& path,
                           const CsvReadOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in, options);
}

/// Shortest decimal representation that round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string csv_field(std::string_view s) {
  if (!csv_detail::needs_quotes(s)) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

inline void write_csv_row(std::ostream& out,
                          const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_field(fields[i]);
  }
  out << '\n';
}

inline void write_csv(std::ostream& out, const Table& table) {
  std::vector<std::string> row;
  for (const auto& c : table.columns()) row.push_back(c.name);
  write_csv_row(out, row);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    row.clear();
    for (const auto& c : table.columns()) {
      row.push_back(c.is_numeric() ? format_double(c.numeric()[r])
                                   : c.categorical()[r]);
    }
    write_csv_row(out, row);
  }
}

}  // namespace softbart
