#include "sqr/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "sqr/error.hpp"

namespace sqr {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": expected " << table.header.size() << " fields, found "
          << fields.size();
      throw IngestError(msg.str());
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw IngestError(path.string() + ": empty file");
  if (table.rows.empty()) throw IngestError(path.string() + ": no data rows");
  return table;
}

std::optional<std::size_t> column(const CsvTable& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - t.header.begin());
}

std::size_t require_column(const CsvTable& t, const std::string& name, const std::filesystem::path& path) {
  if (auto c = column(t, name)) return *c;
  throw IngestError(path.string() + ": missing column '" + name + "'");
}

double parse_double(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": malformed number '" << text << "'";
    throw IngestError(msg.str());
  }
  return value;
}

int parse_int(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": malformed integer '" << text << "'";
    throw IngestError(msg.str());
  }
  return value;
}

}  // namespace

std::optional<std::size_t> MarketSeries::index_of(int y) const {
  const auto it = std::lower_bound(year.begin(), year.end(), y);
  if (it == year.end() || *it != y) return std::nullopt;
  return static_cast<std::size_t>(it - year.begin());
}

void MarketSeries::validate() const {
  const std::size_t n = year.size();
  if (n == 0) throw IngestError("market series is empty");
  for (const auto* col : {&harvest_price, &feb_futures, &implied_vol, &stocks, &national_production, &gdp_deflator})
    if (col->size() != n) throw IngestError("market series columns have unequal length");
  for (std::size_t i = 1; i < n; ++i) {
    if (year[i] == year[i - 1]) throw IngestError("duplicate year " + std::to_string(year[i]));
    if (year[i] < year[i - 1]) throw IngestError("years not increasing at " + std::to_string(year[i]));
  }
  const auto positive = [&](const std::vector<double>& col, const char* name) {
    for (std::size_t i = 0; i < n; ++i)
      if (!(col[i] > 0.0) || !std::isfinite(col[i]))
        throw IngestError(std::string("nonpositive ") + name + " in year " + std::to_string(year[i]));
  };
  positive(harvest_price, "harvest_price");
  positive(feb_futures, "feb_futures");
  positive(implied_vol, "implied_vol");
  positive(stocks, "stocks");
  positive(national_production, "national_production");
  positive(gdp_deflator, "gdp_deflator");
}

std::vector<int> MarketSeries::gaps() const {
  std::vector<int> out;
  for (std::size_t i = 1; i < year.size(); ++i)
    for (int y = year[i - 1] + 1; y < year[i]; ++y) out.push_back(y);
  return out;
}

MarketSeries MarketSeries::slice(int first_year, int last_year) const {
  MarketSeries out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (year[i] < first_year || year[i] > last_year) continue;
    out.year.push_back(year[i]);
    out.harvest_price.push_back(harvest_price[i]);
    out.feb_futures.push_back(feb_futures[i]);
    out.implied_vol.push_back(implied_vol[i]);
    out.stocks.push_back(stocks[i]);
    out.national_production.push_back(national_production[i]);
    out.gdp_deflator.push_back(gdp_deflator[i]);
  }
  return out;
}

MarketSeries ingest_market(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t c_year = require_column(t, "year", path);
  const std::size_t c_price = require_column(t, "harvest_price", path);
  const std::size_t c_fut = require_column(t, "feb_futures", path);
  const std::size_t c_iv = require_column(t, "implied_vol", path);
  const std::size_t c_stocks = require_column(t, "stocks", path);
  const std::size_t c_defl = require_column(t, "gdp_deflator", path);
  const auto c_prod = column(t, "national_production");
  const auto c_nat_yield = column(t, "national_yield");
  const auto c_acres = column(t, "acreage");
  if (!c_prod && !(c_nat_yield && c_acres))
    throw IngestError(path.string() + ": missing column 'national_production' (or national_yield + acreage)");

  std::vector<std::pair<int, std::size_t>> order;
  MarketSeries raw;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.line_numbers[r];
    raw.year.push_back(parse_int(row[c_year], path, line));
    raw.harvest_price.push_back(parse_double(row[c_price], path, line));
    raw.feb_futures.push_back(parse_double(row[c_fut], path, line));
    raw.implied_vol.push_back(parse_double(row[c_iv], path, line));
    raw.stocks.push_back(parse_double(row[c_stocks], path, line));
    raw.gdp_deflator.push_back(parse_double(row[c_defl], path, line));
    raw.national_production.push_back(
        c_prod ? parse_double(row[*c_prod], path, line)
               : parse_double(row[*c_nat_yield], path, line) * parse_double(row[*c_acres], path, line));
    order.emplace_back(raw.year.back(), r);
  }
  std::sort(order.begin(), order.end());
  for (std::size_t i = 1; i < order.size(); ++i)
    if (order[i].first == order[i - 1].first)
      throw IngestError(path.string() + ": duplicate year " + std::to_string(order[i].first));

  MarketSeries series;
  for (const auto& [y, r] : order) {
    series.year.push_back(y);
    series.harvest_price.push_back(raw.harvest_price[r]);
    series.feb_futures.push_back(raw.feb_futures[r]);
    series.implied_vol.push_back(raw.implied_vol[r]);
    series.stocks.push_back(raw.stocks[r]);
    series.national_production.push_back(raw.national_production[r]);
    series.gdp_deflator.push_back(raw.gdp_deflator[r]);
  }
  series.validate();
  return series;
}

void YieldPanel::validate() const {
  std::set<std::tuple<int, std::string, std::string>> seen;
  for (const auto& r : records) {
    if (!(r.yield >= 0.0) || !std::isfinite(r.yield))
      throw IngestError("negative or non-finite yield for county " + r.county + " in " + std::to_string(r.year));
    if (!seen.emplace(r.year, r.state, r.county).second)
      throw IngestError("duplicate (year, county) pair: " + std::to_string(r.year) + ", " + r.state + "/" + r.county);
  }
}

std::vector<std::string> YieldPanel::states() const {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.state);
  return {s.begin(), s.end()};
}

YieldPanel YieldPanel::filter_state(const std::string& state) const {
  YieldPanel out;
  for (const auto& r : records)
    if (r.state == state) out.records.push_back(r);
  return out;
}

std::map<int, std::size_t> YieldPanel::counts_by_year() const {
  std::map<int, std::size_t> out;
  for (const auto& r : records) ++out[r.year];
  return out;
}

std::map<std::string, std::size_t> YieldPanel::counts_by_state() const {
  std::map<std::string, std::size_t> out;
  for (const auto& r : records) ++out[r.state];
  return out;
}

YieldPanel ingest_yields(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t c_year = require_column(t, "year", path);
  const std::size_t c_state = require_column(t, "state", path);
  const std::size_t c_county = require_column(t, "county", path);
  const std::size_t c_yield = require_column(t, "yield", path);
  YieldPanel panel;
  panel.records.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.line_numbers[r];
    YieldRecord rec{parse_int(row[c_year], path, line), row[c_state], row[c_county],
                    parse_double(row[c_yield], path, line)};
    if (rec.state.empty() || rec.county.empty()) {
      std::ostringstream msg;
      msg << path.string() << ":" << line << ": empty state or county";
      throw IngestError(msg.str());
    }
    if (rec.yield < 0.0) {
      std::ostringstream msg;
      msg << path.string() << ":" << line << ": negative yield " << rec.yield;
      throw IngestError(msg.str());
    }
    panel.records.push_back(std::move(rec));
  }
  panel.validate();
  return panel;
}

namespace {

std::vector<DecadeStat> by_decade(const std::map<int, std::vector<double>>& groups) {
  std::vector<DecadeStat> out;
  for (const auto& [decade, xs] : groups) {
    DecadeStat d;
    d.decade = decade;
    d.count = xs.size();
    double sum = 0.0;
    for (double x : xs) sum += x;
    d.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - d.mean) * (x - d.mean);
      d.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    } else {
      d.sd = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(d);
  }
  return out;
}

int decade_of(int year) { return year - ((year % 10) + 10) % 10; }

}  // namespace

DecadeSummary decade_summary(const MarketSeries& series, const YieldPanel& yields) {
  std::map<int, std::vector<double>> stocks, price, yield;
  for (std::size_t i = 0; i < series.size(); ++i) {
    stocks[decade_of(series.year[i])].push_back(series.stocks[i]);
    price[decade_of(series.year[i])].push_back(series.harvest_price[i]);
  }
  for (const auto& r : yields.records) yield[decade_of(r.year)].push_back(r.yield);
  return {by_decade(stocks), by_decade(price), by_decade(yield)};
}

}  // namespace sqr
