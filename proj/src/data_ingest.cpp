#include "agro/data_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "agro/csv.hpp"
#include "agro/error.hpp"
#include "agro/rng.hpp"

namespace agro {
namespace {

constexpr std::string_view kAgronomicColumns[] = {"N", "P", "K", "temperature", "humidity",
                                                  "ph", "rainfall", "label"};
constexpr std::string_view kSoilColumns[] = {"district", "ph", "n", "p", "k"};
constexpr std::string_view kCentroidColumns[] = {"district", "lat", "lon"};
constexpr std::string_view kRainfallColumns[] = {"district", "rainfall"};
constexpr std::string_view kPriceColumns[] = {"crop", "date", "price"};

[[noreturn]] void row_error(std::size_t row, std::string_view column, const std::string& what) {
  fail(Errc::RowParseError,
       "row " + std::to_string(row) + ", column " + std::string(column) + ": " + what);
}

// Row numbers are 1-based data rows (header excluded).
std::optional<double> cell_number(const csv::Table& t, std::size_t r, std::size_t col,
                                  std::string_view name) {
  const auto& row = t.rows[r];
  if (row.size() != t.header.size()) {
    row_error(r + 1, name, "expected " + std::to_string(t.header.size()) + " fields, got " +
                               std::to_string(row.size()));
  }
  try {
    return csv::parse_number(row[col]);
  } catch (const std::invalid_argument& e) {
    row_error(r + 1, name, e.what());
  }
}

double required_number(const csv::Table& t, std::size_t r, std::size_t col, std::string_view name) {
  auto v = cell_number(t, r, col, name);
  if (!v) row_error(r + 1, name, "missing value");
  return *v;
}

void check_range(double v, double lo, double hi, std::size_t row, std::string_view name) {
  if (!std::isnan(v) && (v < lo || v > hi)) {
    std::ostringstream msg;
    msg << "value " << v << " outside [" << lo << ", " << hi << "]";
    row_error(row, name, msg.str());
  }
}

std::string text_cell(const csv::Table& t, std::size_t r, std::size_t col, std::string_view name) {
  const auto& row = t.rows[r];
  if (row.size() != t.header.size()) {
    row_error(r + 1, name, "expected " + std::to_string(t.header.size()) + " fields, got " +
                               std::to_string(row.size()));
  }
  if (row[col].empty()) row_error(r + 1, name, "empty value");
  return row[col];
}

std::vector<AgronomicRecord> agronomic_from_table(const csv::Table& table, std::string_view source) {
  const auto cols = csv::bind_columns(table, kAgronomicColumns, source);
  std::vector<AgronomicRecord> records;
  records.reserve(table.rows.size());
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    AgronomicRecord rec;
    for (Eigen::Index f = 0; f < kFeatureCount; ++f) {
      const auto name = kAgronomicColumns[f];
      rec.features(f) = cell_number(table, r, cols[f], name).value_or(kNaN);
    }
    rec.label = text_cell(table, r, cols[7], "label");
    check_range(rec.ph(), 0.0, 14.0, r + 1, "ph");
    check_range(rec.humidity(), 0.0, 100.0, r + 1, "humidity");
    check_range(rec.rainfall(), 0.0, std::numeric_limits<double>::infinity(), r + 1, "rainfall");
    records.push_back(std::move(rec));
  }
  return records;
}

std::string cell_text(double v) {
  return std::isnan(v) ? std::string() : csv::format_number(v);
}

}  // namespace

std::string YearMonth::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
  return buf;
}

YearMonth YearMonth::parse(std::string_view text) {
  // YYYY-MM, optionally followed by -DD (sub-monthly rows).
  const auto bad = [&] { throw std::invalid_argument("bad date '" + std::string(text) + "'"); };
  if (text.size() != 7 && text.size() != 10) bad();
  if (text[4] != '-' || (text.size() == 10 && text[7] != '-')) bad();
  YearMonth ym;
  const auto parse_int = [&](std::string_view s, int& out) {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) bad();
  };
  parse_int(text.substr(0, 4), ym.year);
  parse_int(text.substr(5, 2), ym.month);
  if (ym.month < 1 || ym.month > 12) bad();
  if (text.size() == 10) {
    int day = 0;
    parse_int(text.substr(8, 2), day);
    if (day < 1 || day > 31) bad();
  }
  return ym;
}

std::vector<AgronomicRecord> parse_agronomic_csv(std::string_view text, std::string_view source) {
  return agronomic_from_table(csv::parse(text), source);
}

std::vector<AgronomicRecord> load_agronomic_csv(const std::filesystem::path& path) {
  return agronomic_from_table(csv::read(path), path.string());
}

std::vector<SoilProfile> load_soil_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto cols = csv::bind_columns(table, kSoilColumns, path.string());
  std::vector<SoilProfile> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    SoilProfile s;
    s.district = text_cell(table, r, cols[0], "district");
    s.ph = required_number(table, r, cols[1], "ph");
    s.n = required_number(table, r, cols[2], "n");
    s.p = required_number(table, r, cols[3], "p");
    s.k = required_number(table, r, cols[4], "k");
    check_range(s.ph, 0.0, 14.0, r + 1, "ph");
    if (!seen.insert(csv::lower(s.district)).second) {
      row_error(r + 1, "district", "duplicate district '" + s.district + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<DistrictCentroid> load_centroids_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto cols = csv::bind_columns(table, kCentroidColumns, path.string());
  std::vector<DistrictCentroid> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    DistrictCentroid c;
    c.district = text_cell(table, r, cols[0], "district");
    c.lat = required_number(table, r, cols[1], "lat");
    c.lon = required_number(table, r, cols[2], "lon");
    check_range(c.lat, -90.0, 90.0, r + 1, "lat");
    check_range(c.lon, -180.0, 180.0, r + 1, "lon");
    if (!seen.insert(csv::lower(c.district)).second) {
      row_error(r + 1, "district", "duplicate district '" + c.district + "'");
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<DistrictRainfall> load_rainfall_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto cols = csv::bind_columns(table, kRainfallColumns, path.string());
  std::vector<DistrictRainfall> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    DistrictRainfall d;
    d.district = text_cell(table, r, cols[0], "district");
    d.rainfall_mm = required_number(table, r, cols[1], "rainfall");
    check_range(d.rainfall_mm, 0.0, std::numeric_limits<double>::infinity(), r + 1, "rainfall");
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

std::map<std::string, PriceSeries> prices_from_table(const csv::Table& table, std::string_view source) {
  const auto cols = csv::bind_columns(table, kPriceColumns, source);
  // crop -> month -> (sum, count)
  std::map<std::string, std::map<YearMonth, std::pair<double, int>>> acc;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto crop = text_cell(table, r, cols[0], "crop");
    YearMonth month;
    try {
      month = YearMonth::parse(text_cell(table, r, cols[1], "date"));
    } catch (const std::invalid_argument& e) {
      row_error(r + 1, "date", e.what());
    }
    const double price = required_number(table, r, cols[2], "price");
    if (!(price > 0.0)) row_error(r + 1, "price", "price must be positive");
    auto& slot = acc[crop][month];
    slot.first += price;
    slot.second += 1;
  }
  std::map<std::string, PriceSeries> out;
  for (const auto& [crop, months] : acc) {
    PriceSeries s;
    s.crop = crop;
    for (const auto& [month, sum_count] : months) {
      s.months.push_back(month);
      s.prices.push_back(sum_count.first / sum_count.second);
    }
    out.emplace(crop, std::move(s));
  }
  return out;
}

}  // namespace

std::map<std::string, PriceSeries> parse_prices_csv(std::string_view text, std::string_view source) {
  return prices_from_table(csv::parse(text), source);
}

std::map<std::string, PriceSeries> load_prices_csv(const std::filesystem::path& path) {
  return prices_from_table(csv::read(path), path.string());
}

std::string write_agronomic_csv(const std::vector<AgronomicRecord>& records) {
  const std::vector<std::string> header(std::begin(kAgronomicColumns), std::end(kAgronomicColumns));
  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size());
  for (const auto& rec : records) {
    std::vector<std::string> row;
    for (Eigen::Index f = 0; f < kFeatureCount; ++f) row.push_back(cell_text(rec.features(f)));
    row.push_back(rec.label);
    rows.push_back(std::move(row));
  }
  std::ostringstream out;
  csv::write(out, header, rows);
  return out.str();
}

std::string write_soil_csv(const std::vector<SoilProfile>& profiles) {
  const std::vector<std::string> header(std::begin(kSoilColumns), std::end(kSoilColumns));
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : profiles) {
    rows.push_back({s.district, cell_text(s.ph), cell_text(s.n), cell_text(s.p), cell_text(s.k)});
  }
  std::ostringstream out;
  csv::write(out, header, rows);
  return out.str();
}

std::string write_centroids_csv(const std::vector<DistrictCentroid>& centroids) {
  const std::vector<std::string> header(std::begin(kCentroidColumns), std::end(kCentroidColumns));
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : centroids) rows.push_back({c.district, cell_text(c.lat), cell_text(c.lon)});
  std::ostringstream out;
  csv::write(out, header, rows);
  return out.str();
}

std::string write_prices_csv(const std::map<std::string, PriceSeries>& series) {
  const std::vector<std::string> header(std::begin(kPriceColumns), std::end(kPriceColumns));
  std::vector<std::vector<std::string>> rows;
  for (const auto& [crop, s] : series) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      rows.push_back({crop, s.months[i].to_string(), cell_text(s.prices[i])});
    }
  }
  std::ostringstream out;
  csv::write(out, header, rows);
  return out.str();
}

ImputeResult impute_means(std::vector<AgronomicRecord> records,
                          const std::vector<AgronomicRecord>& stats_source) {
  FeatureVector means;
  for (Eigen::Index f = 0; f < kFeatureCount; ++f) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& rec : stats_source) {
      if (!std::isnan(rec.features(f))) {
        sum += rec.features(f);
        ++count;
      }
    }
    if (count == 0) {
      fail(Errc::AllMissingColumn,
           "impute_means: column " + std::string(kFeatureNames[f]) + " has no values in the stats source");
    }
    means(f) = sum / static_cast<double>(count);
  }
  return {apply_means(std::move(records), means), means};
}

std::vector<AgronomicRecord> apply_means(std::vector<AgronomicRecord> records, const FeatureVector& means) {
  for (auto& rec : records) {
    rec.features = rec.features.array().isNaN().select(means, rec.features);
  }
  return records;
}

Split train_test_split(const std::vector<AgronomicRecord>& records, double test_fraction,
                       std::uint64_t seed) {
  require(test_fraction >= 0.0 && test_fraction < 1.0, "train_test_split: fraction must be in [0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);

  Rng rng(seed);
  std::vector<bool> in_test(records.size(), false);
  for (auto& [label, indices] : by_class) {
    if (indices.size() < 2) {
      fail(Errc::ClassTooSmall, "train_test_split: class '" + label + "' has fewer than 2 records");
    }
    shuffle(std::span<std::size_t>(indices), rng);
    const auto wanted = static_cast<std::size_t>(std::llround(test_fraction * indices.size()));
    const auto take = std::min(wanted, indices.size() - 1);
    for (std::size_t j = 0; j < take; ++j) in_test[indices[j]] = true;
  }
  Split split;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (in_test[i] ? split.test : split.train).push_back(records[i]);
  }
  return split;
}

Eigen::MatrixXd feature_matrix(const std::vector<AgronomicRecord>& records) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(records.size()), kFeatureCount);
  for (std::size_t i = 0; i < records.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = records[i].features.transpose();
  }
  return m;
}

}  // namespace agro
