#include "agro/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "agro/error.hpp"

namespace agro::csv {
namespace {

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.emplace_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  fields.emplace_back(was_quoted ? field : std::string(trim(field)));
  return fields;
}

bool blank(std::string_view line) { return trim(line).empty(); }

}  // namespace

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(c < 0x80 ? std::tolower(c) : c);
  });
  return out;
}

Table parse(std::string_view text) {
  Table table;
  // Strip a UTF-8 byte-order mark.
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  bool have_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (line.ends_with('\r')) line.remove_suffix(1);
    pos = end + 1;
    if (blank(line)) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split_record(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      table.rows.push_back(std::move(fields));
    }
    if (end == text.size()) break;
  }
  return table;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::MissingFile, "cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::vector<std::size_t> bind_columns(const Table& table,
                                      std::span<const std::string_view> expected,
                                      std::string_view source) {
  std::vector<std::size_t> index(expected.size(), 0);
  std::vector<std::string> missing;
  std::vector<bool> used(table.header.size(), false);
  for (std::size_t e = 0; e < expected.size(); ++e) {
    const auto want = lower(expected[e]);
    bool found = false;
    for (std::size_t h = 0; h < table.header.size(); ++h) {
      if (!used[h] && lower(table.header[h]) == want) {
        index[e] = h;
        used[h] = true;
        found = true;
        break;
      }
    }
    if (!found) missing.emplace_back(expected[e]);
  }
  std::vector<std::string> extra;
  for (std::size_t h = 0; h < table.header.size(); ++h) {
    if (!used[h]) extra.push_back(table.header[h]);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string message = std::string(source) + ": header mismatch";
    const auto join = [](const std::vector<std::string>& names) {
      std::string s;
      for (const auto& n : names) s += (s.empty() ? "" : ",") + n;
      return s;
    };
    if (!missing.empty()) message += "; missing columns [" + join(missing) + "]";
    if (!extra.empty()) message += "; extra columns [" + join(extra) + "]";
    fail(Errc::SchemaMismatch, message);
  }
  return index;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw std::invalid_argument("not a number: '" + std::string(cell) + "'");
  }
  return value;
}

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

void write(std::ostream& out, std::span<const std::string> header,
           std::span<const std::vector<std::string>> rows) {
  const auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out << ',';
      const auto& f = fields[i];
      if (f.find_first_of(",\"\n") != std::string::npos) {
        out << '"';
        for (char c : f) {
          if (c == '"') out << '"';
          out << c;
        }
        out << '"';
      } else {
        out << f;
      }
    }
    out << '\n';
  };
  emit(std::vector<std::string>(header.begin(), header.end()));
  for (const auto& row : rows) emit(row);
}

}  // namespace agro::csv
